//! Stratified k-fold cross-validation, precision/recall/F1, Cohen's kappa,
//! the prior-proportional random baseline and the learning-curve experiment.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RelationLabel, SatdPair};
use crate::pairgen::TokenizerConfig;
use crate::textnn::train::holdout_split;
use crate::textnn::{train_pair_classifier, Architecture, TrainConfig};

/// Fold index per item, plus any class-size warnings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Fold index per pair id.
    pub fn by_pair_id(&self, pairs: &[SatdPair]) -> BTreeMap<String, usize> {
        pairs.iter().zip(&self.folds).map(|(p, &f)| (p.pair_id.clone(), f)).collect()
    }
}

/// Shuffles each class with `seed` and deals its members round-robin, the
/// dealing position carrying over from one class to the next.
pub fn stratified_kfold<L: Ord + Clone + std::fmt::Debug>(labels: &[L], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    if labels.len() < k {
        return Err(Error::invalid(format!("{} items cannot fill {k} folds", labels.len())));
    }
    let mut classes: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut warnings = Vec::new();
    let mut next = 0;
    for (label, mut members) in classes {
        if members.len() < k {
            warnings.push(format!("class {label:?} has {} members, fewer than k={k}", members.len()));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, folds, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: RelationLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of the class.
    pub support: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn mean(items: &[Prf]) -> Prf {
        let n = items.len().max(1) as f64;
        Prf {
            precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
        }
    }
}

impl From<&ClassMetrics> for Prf {
    fn from(m: &ClassMetrics) -> Self {
        Prf {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// One entry per class in (none, duplication, repayment) order.
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over duplication and repayment.
    pub average: Prf,
}

impl Metrics {
    pub fn class(&self, c: RelationLabel) -> &ClassMetrics {
        &self.per_class[c.index()]
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(predictions: &[RelationLabel], gold: &[RelationLabel]) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let mut tp = [0usize; 3];
    let mut predicted = [0usize; 3];
    let mut actual = [0usize; 3];
    for (p, g) in predictions.iter().zip(gold) {
        predicted[p.index()] += 1;
        actual[g.index()] += 1;
        if p == g {
            tp[p.index()] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = RelationLabel::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let precision = ratio(tp[i], predicted[i]);
            let recall = ratio(tp[i], actual[i]);
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: actual[i],
            }
        })
        .collect();
    let average = relation_average(&per_class);
    Ok(Metrics { per_class, average })
}

fn relation_average(per_class: &[ClassMetrics]) -> Prf {
    Prf::mean(&[
        Prf::from(&per_class[RelationLabel::Duplication.index()]),
        Prf::from(&per_class[RelationLabel::Repayment.index()]),
    ])
}

/// Cohen's kappa over any ordered label alphabet.
pub fn cohens_kappa<L: Ord + Clone>(a: &[L], b: &[L]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("label sequences differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("label sequences"));
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<&L, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&L, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = ma
        .iter()
        .map(|(l, &ca)| ca as f64 * *mb.get(l).unwrap_or(&0) as f64)
        .sum::<f64>()
        / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return if agree == a.len() {
            Ok(1.0)
        } else {
            Err(Error::invalid("kappa undefined: chance agreement is 1 but the annotators disagree"))
        };
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Landis and Koch's qualitative scale.
pub fn kappa_band(kappa: f64) -> &'static str {
    if kappa < 0.0 {
        "poor"
    } else if kappa <= 0.20 {
        "slight"
    } else if kappa <= 0.40 {
        "fair"
    } else if kappa <= 0.60 {
        "moderate"
    } else if kappa <= 0.80 {
        "substantial"
    } else {
        "almost perfect"
    }
}

pub fn labels_of(pairs: &[SatdPair]) -> Result<Vec<RelationLabel>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.label.ok_or_else(|| Error::InvalidRecord {
                index: i,
                reason: format!("pair `{}` has no label", p.pair_id),
            })
        })
        .collect()
}

/// Everything needed to train the CNN on a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSetup {
    pub architecture: Architecture,
    pub tokenizer: TokenizerConfig,
    pub train: TrainConfig,
}

impl Default for CnnSetup {
    fn default() -> Self {
        CnnSetup {
            architecture: Architecture::pair_classifier(),
            tokenizer: TokenizerConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Outcome of training on one split and predicting another.
#[derive(Debug, Clone, Default)]
pub struct SplitOutcome {
    pub predictions: Vec<RelationLabel>,
    pub best_epoch: Option<usize>,
    pub warnings: Vec<String>,
}

impl CnnSetup {
    /// Parses a TOML file with optional `[architecture]`, `[tokenizer]` and
    /// `[train]` tables; omitted keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let setup: CnnSetup = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        setup.architecture.validate()?;
        setup.tokenizer.validate(setup.architecture.widest_window())?;
        setup.train.validate()?;
        Ok(setup)
    }

    /// Trains on `train` with the given seed (vocabulary from `train` only)
    /// and predicts `test`.
    pub fn train_and_predict(&self, train: &[SatdPair], test: &[SatdPair], seed: u64) -> Result<SplitOutcome> {
        let config = TrainConfig { seed, ..self.train.clone() };
        let (model, history) =
            train_pair_classifier(train, self.architecture.clone(), self.tokenizer.clone(), &config)?;
        let predictions = model.predict_pairs(test)?.into_iter().map(|p| p.label).collect();
        Ok(SplitOutcome {
            predictions,
            best_epoch: history.best_epoch,
            warnings: history.warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub duplication: ClassMetrics,
    pub repayment: ClassMetrics,
    pub none: ClassMetrics,
    pub average: Prf,
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub duplication: Prf,
    pub repayment: Prf,
    pub average: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub dataset_size: usize,
    pub folds: Vec<FoldResult>,
    /// Means over every (seed, fold) entry.
    pub summary: EvalSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<CnnSetup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Recomputes the summary from the stored per-fold values.
    pub fn recompute_summary(folds: &[FoldResult]) -> EvalSummary {
        let dup: Vec<Prf> = folds.iter().map(|f| Prf::from(&f.duplication)).collect();
        let rep: Vec<Prf> = folds.iter().map(|f| Prf::from(&f.repayment)).collect();
        let avg: Vec<Prf> = folds.iter().map(|f| f.average).collect();
        EvalSummary {
            duplication: Prf::mean(&dup),
            repayment: Prf::mean(&rep),
            average: Prf::mean(&avg),
        }
    }
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs).max(1)
}

/// Runs `jobs` independent tasks on up to `available_parallelism` threads and
/// returns results in job order.
fn run_jobs<T: Send>(jobs: usize, task: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = worker_count(jobs);
    if workers == 1 {
        return (0..jobs).map(task).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<(usize, T)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let j = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if j >= jobs {
                            break done;
                        }
                        done.push((j, task(j)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    results.sort_by_key(|(j, _)| *j);
    results.into_iter().map(|(_, r)| r).collect()
}

/// k-fold cross-validation repeated per seed with any train-then-predict
/// procedure. Results do not depend on how many threads run the folds.
pub fn cross_validate_with<F>(pairs: &[SatdPair], k: usize, seeds: &[u64], train_and_predict: F) -> Result<EvalReport>
where
    F: Fn(&[SatdPair], &[SatdPair], u64) -> Result<SplitOutcome> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let gold = labels_of(pairs)?;
    let mut assignments = Vec::with_capacity(seeds.len());
    let mut warnings = Vec::new();
    for &seed in seeds {
        let a = stratified_kfold(&gold, k, seed)?;
        warnings.extend(a.warnings.iter().map(|w| format!("seed {seed}: {w}")));
        assignments.push(a);
    }
    let jobs = seeds.len() * k;
    let results = run_jobs(jobs, |j| -> Result<FoldResult> {
        let (si, fold) = (j / k, j % k);
        let a = &assignments[si];
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| a.folds[i] == fold);
        let train: Vec<SatdPair> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
        let test: Vec<SatdPair> = test_idx.iter().map(|&i| pairs[i].clone()).collect();
        let outcome = train_and_predict(&train, &test, seeds[si])?;
        let test_gold: Vec<RelationLabel> = test_idx.iter().map(|&i| gold[i]).collect();
        let m = precision_recall_f1(&outcome.predictions, &test_gold)?;
        Ok(FoldResult {
            seed: seeds[si],
            fold,
            train_size: train.len(),
            test_size: test.len(),
            duplication: *m.class(RelationLabel::Duplication),
            repayment: *m.class(RelationLabel::Repayment),
            none: *m.class(RelationLabel::None),
            average: m.average,
            best_epoch: outcome.best_epoch,
            warnings: outcome.warnings,
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        k,
        seeds: seeds.to_vec(),
        dataset_size: pairs.len(),
        summary: EvalReport::recompute_summary(&folds),
        folds,
        config: None,
        warnings,
    })
}

pub fn cross_validate(pairs: &[SatdPair], setup: &CnnSetup, k: usize, seeds: &[u64]) -> Result<EvalReport> {
    let mut report = cross_validate_with(pairs, k, seeds, |tr, te, s| setup.train_and_predict(tr, te, s))?;
    report.config = Some(setup.clone());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    /// Class shares of the gold labels, (none, duplication, repayment).
    pub priors: [f64; 3],
    pub trials: usize,
    /// Predictions of the first trial.
    pub predictions: Vec<RelationLabel>,
    /// Monte-Carlo mean of each class's metrics over all trials.
    pub expected: Vec<ClassMetrics>,
    pub expected_average: Prf,
}

/// Predicts each item independently from the gold class priors; expected
/// metrics are averaged over `trials` simulated prediction sequences.
pub fn random_baseline(gold: &[RelationLabel], seed: u64, trials: usize) -> Result<RandomBaseline> {
    if gold.is_empty() {
        return Err(Error::Empty("gold labels"));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut counts = [0usize; 3];
    for g in gold {
        counts[g.index()] += 1;
    }
    let priors = counts.map(|c| c as f64 / gold.len() as f64);
    let dist = WeightedIndex::new(priors).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = [[0.0f64; 3]; 3];
    let mut first = Vec::new();
    let mut preds = vec![RelationLabel::None; gold.len()];
    for t in 0..trials {
        for p in preds.iter_mut() {
            *p = RelationLabel::from_index(dist.sample(&mut rng)).expect("three classes");
        }
        let m = precision_recall_f1(&preds, gold)?;
        for (s, c) in sums.iter_mut().zip(&m.per_class) {
            s[0] += c.precision;
            s[1] += c.recall;
            s[2] += c.f1;
        }
        if t == 0 {
            first = preds.clone();
        }
    }
    let expected: Vec<ClassMetrics> = RelationLabel::ALL
        .iter()
        .map(|&c| {
            let s = sums[c.index()];
            ClassMetrics {
                class: c,
                precision: s[0] / trials as f64,
                recall: s[1] / trials as f64,
                f1: s[2] / trials as f64,
                support: counts[c.index()],
            }
        })
        .collect();
    Ok(RandomBaseline {
        priors,
        trials,
        predictions: first,
        expected_average: relation_average(&expected),
        expected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n_train: usize,
    pub f1_duplication: f64,
    pub f1_repayment: f64,
    pub seed: u64,
}

/// Seeded stratified 1:9 split; the small part is the fixed test set and the
/// large part is consumed in a fixed seeded order, `step` items at a time.
/// `sizes` restricts which prefix lengths are trained (all multiples of
/// `step` by default).
pub fn learning_curve_with<F>(
    pairs: &[SatdPair],
    step: usize,
    test_fraction: f64,
    seed: u64,
    sizes: Option<&[usize]>,
    train_and_predict: F,
) -> Result<Vec<CurveRow>>
where
    F: Fn(&[SatdPair], &[SatdPair], u64) -> Result<SplitOutcome> + Sync,
{
    if step == 0 {
        return Err(Error::Config("step must be positive".into()));
    }
    if pairs.len() < 2 * step {
        return Err(Error::invalid(format!("{} pairs are fewer than 2 x step", pairs.len())));
    }
    let gold = labels_of(pairs)?;
    let idx: Vec<usize> = gold.iter().map(|l| l.index()).collect();
    let (mut large, small) = holdout_split(&idx, test_fraction, seed);
    large.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test: Vec<SatdPair> = small.iter().map(|&i| pairs[i].clone()).collect();
    let test_gold: Vec<RelationLabel> = small.iter().map(|&i| gold[i]).collect();
    let all_sizes: Vec<usize> = (1..=large.len() / step).map(|m| m * step).collect();
    let chosen: Vec<usize> = match sizes {
        None => all_sizes,
        Some(s) => {
            if let Some(bad) = s.iter().find(|n| !all_sizes.contains(n)) {
                return Err(Error::Config(format!(
                    "training size {bad} is not a multiple of {step} within 1..={}",
                    large.len()
                )));
            }
            s.to_vec()
        }
    };
    let rows = run_jobs(chosen.len(), |j| -> Result<CurveRow> {
        let n = chosen[j];
        let train: Vec<SatdPair> = large[..n].iter().map(|&i| pairs[i].clone()).collect();
        let outcome = train_and_predict(&train, &test, seed)?;
        let m = precision_recall_f1(&outcome.predictions, &test_gold)?;
        Ok(CurveRow {
            n_train: n,
            f1_duplication: m.class(RelationLabel::Duplication).f1,
            f1_repayment: m.class(RelationLabel::Repayment).f1,
            seed,
        })
    });
    rows.into_iter().collect()
}

pub fn learning_curve(
    pairs: &[SatdPair],
    step: usize,
    seed: u64,
    setup: &CnnSetup,
    sizes: Option<&[usize]>,
) -> Result<Vec<CurveRow>> {
    learning_curve_with(pairs, step, 0.1, seed, sizes, |tr, te, s| setup.train_and_predict(tr, te, s))
}

pub fn write_curve_csv(rows: &[CurveRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

/// How to read a labeled pair dataset from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportMapping {
    pub origin_text: String,
    pub target_text: String,
    pub label: String,
    pub pair_id: Option<String>,
    pub origin_kind: Option<String>,
    pub target_kind: Option<String>,
    /// Raw label value to relation name, e.g. `"1" = "duplication"`. Values
    /// not listed are parsed as relation names directly.
    pub label_values: BTreeMap<String, String>,
    pub delimiter: char,
}

impl Default for ImportMapping {
    fn default() -> Self {
        ImportMapping {
            origin_text: "origin_text".into(),
            target_text: "target_text".into(),
            label: "label".into(),
            pair_id: None,
            origin_kind: None,
            target_kind: None,
            label_values: BTreeMap::new(),
            delimiter: ',',
        }
    }
}

impl ImportMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Converts a CSV of labeled text pairs into [`SatdPair`]s. Rows with empty
/// text on either side are skipped and counted.
pub fn import_csv(path: impl AsRef<Path>, mapping: &ImportMapping) -> Result<(Vec<SatdPair>, usize)> {
    use crate::model::{Artifact, Container, Link, ReferenceKind, SourceKind};
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(u8::try_from(mapping.delimiter).map_err(|_| Error::Config("delimiter must be ASCII".into()))?)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found in {}", path.display())))
    };
    let origin_col = col(&mapping.origin_text)?;
    let target_col = col(&mapping.target_text)?;
    let label_col = col(&mapping.label)?;
    let id_col = mapping.pair_id.as_deref().map(col).transpose()?;
    let ok_col = mapping.origin_kind.as_deref().map(col).transpose()?;
    let tk_col = mapping.target_kind.as_deref().map(col).transpose()?;

    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (row_no, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedLine {
            line: row_no + 2,
            reason: e.to_string(),
        })?;
        let get = |c: usize| rec.get(c).unwrap_or("").trim();
        let (a, b) = (get(origin_col), get(target_col));
        if a.is_empty() || b.is_empty() {
            skipped += 1;
            continue;
        }
        let raw = get(label_col);
        let name = mapping.label_values.get(raw).map(String::as_str).unwrap_or(raw);
        let label: RelationLabel = name.to_lowercase().parse().map_err(|_| Error::InvalidRecord {
            index: row_no,
            reason: format!("unknown label `{raw}`"),
        })?;
        let kind = |c: Option<usize>, default: SourceKind| -> Result<SourceKind> {
            match c.map(get).filter(|s| !s.is_empty()) {
                None => Ok(default),
                Some(s) => s.parse().map_err(|_| Error::InvalidRecord {
                    index: row_no,
                    reason: format!("unknown source kind `{s}`"),
                }),
            }
        };
        let id = id_col.map(get).filter(|s| !s.is_empty()).map_or_else(|| row_no.to_string(), str::to_string);
        let make = |kind: SourceKind, side: &str, text: &str, t: i64| -> Artifact {
            let hash = format!("{:040x}", row_no as u64 * 2 + u64::from(side == "b"));
            let container = match kind {
                SourceKind::IssueSummary | SourceKind::IssueDescription | SourceKind::IssueComment => {
                    Container::issue(format!("{id}{side}"), "import")
                }
                SourceKind::PullSummary | SourceKind::PullDescription | SourceKind::PullComment => {
                    Container::pull(format!("{id}{side}"), "import")
                }
                SourceKind::CommitMessage => Container::commit(&hash, "import"),
                SourceKind::CommentAdded | SourceKind::CommentDeleted => {
                    Container::code_location(&format!("{id}{side}"), &hash, "import")
                }
            };
            Artifact {
                id: format!("import:{id}:{side}"),
                project: "import".into(),
                source_kind: kind,
                text: text.to_string(),
                author: String::new(),
                is_bot: false,
                created_at: t,
                container,
                evidence: None,
                added_at: None,
            }
        };
        let origin = make(kind(ok_col, SourceKind::IssueComment)?, "a", a, 0);
        let target = make(kind(tk_col, SourceKind::CommitMessage)?, "b", b, 1);
        let link = Link {
            from: origin.container.clone(),
            to: target.container.clone(),
            reference_kind: ReferenceKind::IssueId,
            evidence_text: format!("import row {}", row_no + 2),
            evidence_artifact_id: origin.id.clone(),
        };
        let tok = TokenizerConfig::default();
        let sim = crate::pairgen::cosine_similarity(
            &crate::pairgen::tokenize(a, &tok),
            &crate::pairgen::tokenize(b, &tok),
        );
        pairs.push(SatdPair::new(origin, target, link, sim).with_label(label));
    }
    Ok((pairs, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use RelationLabel::*;

    #[test]
    fn fold_counts_for_example_class_sizes() {
        let mut labels = vec![0u8; 20];
        labels.extend(vec![1u8; 30]);
        labels.extend(vec![2u8; 50]);
        let a = stratified_kfold(&labels, 10, 3).unwrap();
        for f in 0..10 {
            let m = a.members(f);
            for (c, want) in [(0u8, 2), (1, 3), (2, 5)] {
                assert_eq!(m.iter().filter(|&&i| labels[i] == c).count(), want);
            }
        }

        let mut labels = vec![0u8; 413];
        labels.extend(vec![1u8; 197]);
        labels.extend(vec![2u8; 390]);
        let a = stratified_kfold(&labels, 10, 1).unwrap();
        for f in 0..10 {
            let m = a.members(f);
            let n0 = m.iter().filter(|&&i| labels[i] == 0).count();
            let n1 = m.iter().filter(|&&i| labels[i] == 1).count();
            let n2 = m.iter().filter(|&&i| labels[i] == 2).count();
            assert!((41..=42).contains(&n0) && (19..=20).contains(&n1) && n2 == 39);
        }
    }

    #[test]
    fn setup_files_override_selected_keys() {
        let s = CnnSetup::from_toml("[architecture]\nfilters_per_window = 8\n[train]\nmax_epochs = 3\n").unwrap();
        assert_eq!(s.architecture.filters_per_window, 8);
        assert_eq!(s.architecture.embedding_dim, 300);
        assert_eq!(s.train.max_epochs, 3);
        assert_eq!(CnnSetup::from_toml("").unwrap(), CnnSetup::default());
        assert!(CnnSetup::from_toml("[architecture]\nwindows = []\n").is_err());
        assert!(CnnSetup::from_toml("[tokenizer]\nmax_sequence_length = 2\n").is_err());
        assert!(CnnSetup::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn small_classes_warn() {
        let a = stratified_kfold(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1], 10, 1).unwrap();
        assert_eq!(a.warnings.len(), 1);
    }

    #[test]
    fn metric_examples() {
        let gold = [None, Duplication, Repayment, Duplication];
        let m = precision_recall_f1(&gold, &gold).unwrap();
        for c in &m.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert!((f1_score(0.8, 0.6) - 0.96 / 1.4).abs() < 1e-15);
        let m = precision_recall_f1(&[None, None], &[None, None]).unwrap();
        let r = m.class(Repayment);
        assert_eq!((r.precision, r.recall, r.f1, r.support), (0.0, 0.0, 0.0, 0));
        assert!(precision_recall_f1(&[None], &[]).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[1, 2, 3, 1], &[1, 2, 3, 1]).unwrap(), 1.0);
        let a = vec![Duplication; 100];
        let b: Vec<RelationLabel> = (0..100).map(|i| if i < 50 { Duplication } else { None }).collect();
        assert_eq!(cohens_kappa(&a, &b).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&[None, None], &[None, None]).unwrap(), 1.0);
        assert!(cohens_kappa::<u8>(&[], &[]).is_err());
        assert_eq!(kappa_band(1.0), "almost perfect");
        assert_eq!(kappa_band(0.785), "substantial");
        assert_eq!(kappa_band(-0.1), "poor");
        assert_eq!(kappa_band(0.0), "slight");
    }

    #[test]
    fn random_baseline_matches_priors() {
        let mut gold = vec![None; 413];
        gold.extend(vec![Duplication; 197]);
        gold.extend(vec![Repayment; 390]);
        let r = random_baseline(&gold, 5, 2000).unwrap();
        for c in &r.expected {
            let p = r.priors[c.class.index()];
            assert!((c.precision - p).abs() < 0.01 && (c.recall - p).abs() < 0.01, "{c:?}");
        }
        assert_eq!(r.predictions, random_baseline(&gold, 5, 1).unwrap().predictions);

        let r = random_baseline(&[Repayment; 30], 1, 100).unwrap();
        assert_eq!(r.expected[Repayment.index()].recall, 1.0);
    }

    fn labeled(n: usize) -> Vec<SatdPair> {
        crate::textnn::synthetic::planted_pairs(&crate::textnn::synthetic::SyntheticConfig {
            pairs: n,
            ..Default::default()
        })
    }

    fn oracle(_: &[SatdPair], test: &[SatdPair], _: u64) -> Result<SplitOutcome> {
        Ok(SplitOutcome {
            predictions: test.iter().map(|p| p.label.unwrap()).collect(),
            ..Default::default()
        })
    }

    #[test]
    fn cross_validation_bookkeeping() {
        let pairs = labeled(100);
        let r = cross_validate_with(&pairs, 10, &[1, 2], oracle).unwrap();
        assert_eq!(r.folds.len(), 20);
        assert!(r.folds.iter().all(|f| f.train_size + f.test_size == 100));
        assert_eq!(r.summary.average.f1, 1.0);
        assert_eq!(r, cross_validate_with(&pairs, 10, &[1, 2], oracle).unwrap());
        let again = EvalReport::recompute_summary(&r.folds);
        assert!((again.average.f1 - r.summary.average.f1).abs() < 1e-12);
    }

    #[test]
    fn cross_validation_never_shows_test_pairs_to_training() {
        let pairs = labeled(60);
        cross_validate_with(&pairs, 5, &[4], |train, test, _| {
            assert!(test.iter().all(|t| train.iter().all(|p| p.pair_id != t.pair_id)));
            oracle(train, test, 0)
        })
        .unwrap();
    }

    #[test]
    fn learning_curve_rows() {
        let pairs = labeled(100);
        let rows = learning_curve_with(&pairs, 5, 0.1, 3, Option::None, oracle).unwrap();
        assert_eq!(rows.len(), 90 / 5);
        assert_eq!(rows.iter().map(|r| r.n_train).collect::<Vec<_>>(), (1..=18).map(|m| m * 5).collect::<Vec<_>>());
        let mut buf = Vec::new();
        write_curve_csv(&rows[..1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_train,f1_duplication,f1_repayment,seed\n5,1.0,1.0,3\n"), "{text}");
        assert!(learning_curve_with(&pairs, 5, 0.1, 3, Some(&[7]), oracle).is_err());
    }

    #[test]
    fn growing_prefixes_are_nested() {
        let pairs = labeled(60);
        let seen = std::sync::Mutex::new(Vec::new());
        learning_curve_with(&pairs, 5, 0.1, 9, Some(&[5, 10]), |train, test, s| {
            seen.lock().unwrap().push(train.iter().map(|p| p.pair_id.clone()).collect::<Vec<_>>());
            oracle(train, test, s)
        })
        .unwrap();
        let mut seen = seen.into_inner().unwrap();
        seen.sort_by_key(Vec::len);
        assert_eq!(seen[0][..], seen[1][..5]);
    }

    #[test]
    fn import_with_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        std::fs::write(
            &path,
            "id,a,b,rel,ka\n1,TODO fix parser,fixed parser,2,issue_comment\n2,,empty,0,\n3,dup here,dup here,d,\n",
        )
        .unwrap();
        let mapping = ImportMapping::from_toml(
            "origin_text = \"a\"\ntarget_text = \"b\"\nlabel = \"rel\"\npair_id = \"id\"\norigin_kind = \"ka\"\n[label_values]\n\"2\" = \"repayment\"\nd = \"duplication\"\n",
        )
        .unwrap();
        let (pairs, skipped) = import_csv(&path, &mapping).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].label, Some(Repayment));
        assert_eq!(pairs[1].label, Some(Duplication));
        assert_eq!(pairs[1].similarity, 1.0);
        for p in &pairs {
            p.validate().unwrap();
        }
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(labels in prop::collection::vec(0u8..3, 10..300), seed in 0u64..1000) {
            let a = stratified_kfold(&labels, 10, seed).unwrap();
            prop_assert_eq!(a.folds.len(), labels.len());
            for c in 0..3u8 {
                let counts: Vec<usize> = (0..10).map(|f| a.members(f).iter().filter(|&&i| labels[i] == c).count()).collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn kappa_symmetric(a in prop::collection::vec(0u8..3, 1..50), b_seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(b_seed);
            let b: Vec<u8> = a.iter().map(|&x| if rand::Rng::gen_bool(&mut rng, 0.7) { x } else { rand::Rng::gen_range(&mut rng, 0..3) }).collect();
            match (cohens_kappa(&a, &b), cohens_kappa(&b, &a)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric definedness"),
            }
        }
    }
}
