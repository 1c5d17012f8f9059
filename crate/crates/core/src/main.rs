use std::collections::HashSet;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use satd_link::annotate::{merge_labels, serve, AnnotateService, LabelStore};
use satd_link::census::{classify_corpus, relation_census, to_markdown, DEFAULT_HIGHLIGHT_THRESHOLD};
use satd_link::detect::{detect_corpus, PatternSet, SatdFlag, DEFAULT_THRESHOLD};
use satd_link::eval::{cross_validate, import_csv, learning_curve, write_curve_csv, CnnSetup, ImportMapping};
use satd_link::ingest::{ingest_git, ingest_tracker_export, BotPolicy, IngestReport, ProfileSet, TrackerKind};
use satd_link::jsonl::{read_jsonl, write_jsonl};
use satd_link::linker::{link_corpus, LinkGraph, ReferencePattern};
use satd_link::model::{Artifact, Link, SatdPair};
use satd_link::pairgen::{generate_pairs, similarity_stats, stratified_sample};
use satd_link::textnn::synthetic::{planted_pairs, SyntheticConfig};
use satd_link::textnn::{train_pair_classifier, train_text_scorer, Architecture, Classifier};

const ARTIFACTS_FILE: &str = "artifacts.jsonl";
const INGEST_REPORT_FILE: &str = "ingest_report.json";

#[derive(Parser)]
#[command(name = "satd-link", version, about = "Mine, link and classify relations between SATD items")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine artifacts from a git repository and issue/pull-request exports.
    Ingest(IngestArgs),
    /// Resolve cross-references between containers.
    Link(LinkArgs),
    /// Flag SATD artifacts by keyword or with a trained scorer.
    Detect(DetectArgs),
    /// Build SATD pairs joined by links.
    Pairs(PairsArgs),
    /// Draw a similarity-stratified sample of pairs for annotation.
    Sample(SampleArgs),
    /// Train the pair relation classifier on labeled pairs.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation over several seeds.
    Eval(EvalArgs),
    /// Learning curve on a fixed held-out test split.
    Curve(CurveArgs),
    /// Classify every pair and count relations per source-kind combination.
    Census(CensusArgs),
    /// Serve pairs to annotators over HTTP.
    AnnotateServe(ServeArgs),
    /// Merge annotation records into one labeled pair per sampled pair.
    MergeLabels(MergeArgs),
    /// Convert a labeled CSV of text pairs into pair JSONL.
    Import(ImportArgs),
    /// Train the single-text SATD scorer used by `detect --model`.
    TrainDetector(TrainDetectorArgs),
    /// Generate labeled pairs with planted lexical signals.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    issues: Option<PathBuf>,
    #[arg(long)]
    pulls: Option<PathBuf>,
    /// Language profile TOML (built-in profiles when omitted).
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Bot policy TOML.
    #[arg(long)]
    bots: Option<PathBuf>,
    /// Project key; defaults to the repository directory name.
    #[arg(long)]
    project: Option<String>,
    /// Corpus directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reference pattern TOML (defaults derived from the corpus when omitted).
    #[arg(long)]
    patterns: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Keyword file, one pattern per line (built-in list when omitted).
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Trained SATD scorer; switches detection to the model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    links: PathBuf,
    #[arg(long)]
    satd: PathBuf,
    /// Model config TOML whose `[tokenizer]` table drives similarity.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(short = 'n', long = "size", default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled pair JSONL (see `merge-labels` and `import`).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 5)]
    step: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Train only these sizes (multiples of the step).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CensusArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    markdown: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_HIGHLIGHT_THRESHOLD)]
    highlight_threshold: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    sample: PathBuf,
    /// Append-only annotation store; created when missing.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Share of the sample served to every annotator.
    #[arg(long)]
    overlap_fraction: Option<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory with the UI bundle (a built-in help page otherwise).
    #[arg(long)]
    assets: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    sample: PathBuf,
    /// Annotation store written by `annotate-serve`.
    #[arg(long)]
    labels: PathBuf,
    /// Annotators whose labels win, in order; others fall back to first-labeled.
    #[arg(long, value_delimiter = ',')]
    prefer: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Column mapping TOML (default column names when omitted).
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainDetectorArgs {
    /// CSV with columns `text` and `satd` (true/false or 1/0).
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 600)]
    pairs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    distractor_rate: f64,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_setup(path: Option<&Path>) -> Result<CnnSetup> {
    match path {
        Some(p) => CnnSetup::from_toml(&read_text(p)?).with_context(|| format!("config {}", p.display())),
        None => Ok(CnnSetup::default()),
    }
}

fn corpus_artifacts(dir: &Path) -> Result<Vec<Artifact>> {
    let path = dir.join(ARTIFACTS_FILE);
    read_jsonl(&path).with_context(|| format!("reading corpus {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    if a.repo.is_none() && a.issues.is_none() && a.pulls.is_none() {
        bail!("nothing to ingest: give --repo, --issues or --pulls");
    }
    let profiles = match &a.profiles {
        Some(p) => ProfileSet::from_toml(&read_text(p)?)?,
        None => ProfileSet::default(),
    };
    let bots = match &a.bots {
        Some(p) => BotPolicy::from_toml(&read_text(p)?)?,
        None => BotPolicy::default(),
    };
    let project = match (&a.project, &a.repo) {
        (Some(p), _) => p.clone(),
        (None, Some(repo)) => repo
            .canonicalize()
            .with_context(|| format!("repository {}", repo.display()))?
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .context("repository path has no directory name")?,
        (None, None) => bail!("--project is required without --repo"),
    };
    let mut report = IngestReport::default();
    if let Some(repo) = &a.repo {
        report.merge(ingest_git(repo, &profiles, &bots, &project)?)?;
    }
    for (path, kind) in [(&a.issues, TrackerKind::Issue), (&a.pulls, TrackerKind::Pull)] {
        if let Some(path) = path {
            report.merge(ingest_tracker_export(path, kind, &bots, &project)?)?;
        }
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let n = write_jsonl(&report.artifacts, a.out.join(ARTIFACTS_FILE))?;
    fs::write(a.out.join(INGEST_REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut summary = serde_json::to_value(&report)?;
    summary["artifacts"] = json!(n);
    print_json(&summary)
}

fn link(a: LinkArgs) -> Result<()> {
    let artifacts = corpus_artifacts(&a.corpus)?;
    let patterns = match &a.patterns {
        Some(p) => Some(ReferencePattern::from_toml(&read_text(p)?)?),
        None => None,
    };
    let (graph, stats) = link_corpus(&artifacts, patterns.as_deref());
    write_jsonl(&graph.into_links(), &a.out)?;
    print_json(&stats)
}

fn detect(a: DetectArgs) -> Result<()> {
    let artifacts = corpus_artifacts(&a.corpus)?;
    let patterns = match &a.patterns {
        Some(p) => PatternSet::load(p)?,
        None => PatternSet::default(),
    };
    let model = a.model.as_deref().map(Classifier::load).transpose()?;
    let flags = detect_corpus(&artifacts, &patterns, model.as_ref().map(|m| (m, a.threshold)))?;
    write_jsonl(&flags, &a.out)?;
    print_json(&json!({ "artifacts": artifacts.len(), "flagged": flags.len() }))
}

fn pairs(a: PairsArgs) -> Result<()> {
    let artifacts = corpus_artifacts(&a.corpus)?;
    let links: Vec<Link> = read_jsonl(&a.links)?;
    let flags: Vec<SatdFlag> = read_jsonl(&a.satd)?;
    let flagged: HashSet<&str> = flags.iter().map(|f| f.artifact_id.as_str()).collect();
    let known: HashSet<&str> = artifacts.iter().map(|x| x.id.as_str()).collect();
    if let Some(missing) = flagged.iter().find(|id| !known.contains(*id)) {
        bail!("SATD flag refers to artifact `{missing}` which is not in the corpus");
    }
    let satd: Vec<Artifact> = artifacts.into_iter().filter(|x| flagged.contains(x.id.as_str())).collect();
    let setup = load_setup(a.config.as_deref())?;
    let graph = LinkGraph::from_links(links);
    let pairs = generate_pairs(&satd, &graph, &setup.tokenizer);
    write_jsonl(&pairs, &a.out)?;
    match similarity_stats(&pairs) {
        Ok(stats) => print_json(&json!({ "pairs": pairs.len(), "similarity": stats })),
        Err(_) => print_json(&json!({ "pairs": 0 })),
    }
}

fn sample(a: SampleArgs) -> Result<()> {
    let pairs: Vec<SatdPair> = read_jsonl(&a.pairs)?;
    let s = stratified_sample(&pairs, a.n, a.seed)?;
    if let Some(w) = &s.warning {
        log::warn!("{w}");
    }
    write_jsonl(&s.pairs, &a.out)?;
    print_json(&json!({ "sampled": s.pairs.len(), "per_bin": s.per_bin, "warning": s.warning }))
}

fn train(a: TrainArgs) -> Result<()> {
    let pairs: Vec<SatdPair> = read_jsonl(&a.labels)?;
    let mut setup = load_setup(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        setup.train.seed = seed;
    }
    let (model, history) = train_pair_classifier(&pairs, setup.architecture, setup.tokenizer, &setup.train)?;
    for w in &history.warnings {
        log::warn!("{w}");
    }
    model.save(&a.out)?;
    print_json(&history)
}

fn eval(a: EvalArgs) -> Result<()> {
    let pairs: Vec<SatdPair> = read_jsonl(&a.labels)?;
    let setup = load_setup(a.config.as_deref())?;
    let mut report = cross_validate(&pairs, &setup, a.k, &a.seeds)?;
    report.config = Some(setup);
    fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&report.summary)
}

fn curve(a: CurveArgs) -> Result<()> {
    let pairs: Vec<SatdPair> = read_jsonl(&a.labels)?;
    let setup = load_setup(a.config.as_deref())?;
    let mut rows = Vec::new();
    for &seed in &a.seeds {
        rows.extend(learning_curve(&pairs, a.step, seed, &setup, a.sizes.as_deref())?);
    }
    let file = fs::File::create(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    write_curve_csv(&rows, file)?;
    print_json(&json!({ "rows": rows.len() }))
}

fn census(a: CensusArgs) -> Result<()> {
    let pairs: Vec<SatdPair> = read_jsonl(&a.pairs)?;
    let model = Classifier::load(&a.model)?;
    let classified: Vec<SatdPair> = classify_corpus(&pairs, &model)?.into_iter().map(|c| c.pair).collect();
    let table = relation_census(&classified)?;
    fs::write(&a.out, serde_json::to_string_pretty(&table)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(md) = &a.markdown {
        fs::write(md, to_markdown(&table, a.highlight_threshold)).with_context(|| format!("writing {}", md.display()))?;
    }
    print_json(&json!({
        "pairs": pairs.len(),
        "duplication": table.total_duplication,
        "repayment": table.total_repayment,
        "none": table.none_pairs,
    }))
}

fn annotate_serve(a: ServeArgs) -> Result<()> {
    let mut service = AnnotateService::open(&a.sample, &a.labels)?;
    if let Some(f) = a.overlap_fraction {
        service = service.with_overlap(f, a.seed)?;
    }
    if let Some(dir) = a.assets {
        service = service.with_assets(dir);
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(Arc::new(service), SocketAddr::new(a.host, a.port)))?;
    Ok(())
}

fn merge(a: MergeArgs) -> Result<()> {
    let sample: Vec<SatdPair> = read_jsonl(&a.sample)?;
    let store = LabelStore::open(&a.labels)?;
    let (pairs, report) = merge_labels(&sample, &store, &a.prefer);
    write_jsonl(&pairs, &a.out)?;
    print_json(&report)
}

fn import(a: ImportArgs) -> Result<()> {
    let mapping = match &a.mapping {
        Some(p) => ImportMapping::from_toml(&read_text(p)?)?,
        None => ImportMapping::default(),
    };
    let (pairs, skipped) = import_csv(&a.csv, &mapping)?;
    write_jsonl(&pairs, &a.out)?;
    print_json(&json!({ "imported": pairs.len(), "skipped": skipped }))
}

#[derive(Deserialize)]
struct DetectorExample {
    text: String,
    satd: String,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "satd" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

fn train_detector(a: TrainDetectorArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&a.examples).with_context(|| format!("reading {}", a.examples.display()))?;
    let mut examples = Vec::new();
    for (i, row) in reader.deserialize::<DetectorExample>().enumerate() {
        let row = row.with_context(|| format!("row {}", i + 1))?;
        let flag = parse_flag(&row.satd).with_context(|| format!("row {}: bad satd value `{}`", i + 1, row.satd))?;
        examples.push((row.text, flag));
    }
    let mut setup = load_setup(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        setup.train.seed = seed;
    }
    let architecture = Architecture {
        inputs: 1,
        classes: 2,
        ..setup.architecture
    };
    let (model, history) = train_text_scorer(&examples, architecture, setup.tokenizer, &setup.train)?;
    model.save(&a.out)?;
    print_json(&history)
}

fn synth(a: SynthArgs) -> Result<()> {
    let pairs = planted_pairs(&SyntheticConfig {
        pairs: a.pairs,
        seed: a.seed,
        distractor_rate: a.distractor_rate,
        ..SyntheticConfig::default()
    });
    write_jsonl(&pairs, &a.out)?;
    print_json(&json!({ "pairs": pairs.len() }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Link(a) => link(a),
        Command::Detect(a) => detect(a),
        Command::Pairs(a) => pairs(a),
        Command::Sample(a) => sample(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Curve(a) => curve(a),
        Command::Census(a) => census(a),
        Command::AnnotateServe(a) => annotate_serve(a),
        Command::MergeLabels(a) => merge(a),
        Command::Import(a) => import(a),
        Command::TrainDetector(a) => train_detector(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
