//! Tokenization, term-frequency cosine similarity, candidate pair generation
//! over the link graph, and similarity-stratified sampling.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::LinkGraph;
use crate::model::{Artifact, Container, SatdPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_length: usize,
    pub max_sequence_length: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_length: 2,
            max_sequence_length: 128,
        }
    }
}

impl TokenizerConfig {
    /// `max_sequence_length` must cover the widest convolution window.
    pub fn validate(&self, widest_window: usize) -> Result<()> {
        if self.max_sequence_length < widest_window {
            return Err(Error::Config(format!(
                "max_sequence_length {} is shorter than the widest window {widest_window}",
                self.max_sequence_length
            )));
        }
        Ok(())
    }
}

/// Splits on every non-alphanumeric character and drops short tokens.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= config.min_token_length.max(1))
        .map(|t| if config.lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// Cosine of the term-frequency vectors of two token lists; 0 if either is empty.
pub fn cosine_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    fn count<S: AsRef<str>>(toks: &[S]) -> HashMap<&str, u64> {
        let mut m: HashMap<&str, u64> = HashMap::new();
        for t in toks {
            *m.entry(t.as_ref()).or_default() += 1;
        }
        m
    }
    let (ca, cb) = (count(a), count(b));
    let dot: u64 = ca.iter().filter_map(|(t, x)| cb.get(t).map(|y| x * y)).sum();
    let na: u64 = ca.values().map(|x| x * x).sum();
    let nb: u64 = cb.values().map(|x| x * x).sum();
    let s = dot as f64 / ((na as f64) * (nb as f64)).sqrt();
    s.clamp(0.0, 1.0)
}

/// Ten bins `[0,0.1), [0.1,0.2), …, [0.9,1.0]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimilarityBins;

impl SimilarityBins {
    pub const COUNT: usize = 10;

    pub fn bin_of(similarity: f64) -> usize {
        let s = similarity.clamp(0.0, 1.0);
        let mut k = ((s * 10.0).floor() as usize).min(Self::COUNT - 1);
        // Guard against rounding in s*10 disagreeing with the k/10 boundaries.
        if k > 0 && s < Self::interval(k).0 {
            k -= 1;
        } else if k + 1 < Self::COUNT && s >= Self::interval(k + 1).0 {
            k += 1;
        }
        k
    }

    /// `(lower, upper)`; the upper end is exclusive except for the last bin.
    pub fn interval(k: usize) -> (f64, f64) {
        (k as f64 / 10.0, (k + 1) as f64 / 10.0)
    }

    pub fn contains(k: usize, s: f64) -> bool {
        let (lo, hi) = Self::interval(k);
        s >= lo && (s < hi || (k == Self::COUNT - 1 && s <= hi))
    }
}

/// Builds every SATD pair joined by a link: for an edge between containers A
/// and B, the Cartesian product of the SATD artifacts held by A and by B. An
/// unordered artifact pair reachable through several edges is emitted once
/// with the first edge as evidence.
pub fn generate_pairs(satd: &[Artifact], graph: &LinkGraph, tokenizer: &TokenizerConfig) -> Vec<SatdPair> {
    let mut by_container: BTreeMap<&Container, Vec<&Artifact>> = BTreeMap::new();
    for a in satd {
        by_container.entry(&a.container).or_default().push(a);
    }
    for v in by_container.values_mut() {
        v.sort_by(|x, y| x.id.cmp(&y.id));
    }
    let tokens: HashMap<&str, Vec<String>> = satd.iter().map(|a| (a.id.as_str(), tokenize(&a.text, tokenizer))).collect();

    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for link in graph.edges() {
        let (Some(left), Some(right)) = (by_container.get(&link.from), by_container.get(&link.to)) else {
            continue;
        };
        for a in left {
            for b in right {
                if a.id == b.id {
                    continue;
                }
                let key = if a.id < b.id { (a.id.as_str(), b.id.as_str()) } else { (b.id.as_str(), a.id.as_str()) };
                if !seen.insert(key) {
                    continue;
                }
                let sim = cosine_similarity(&tokens[a.id.as_str()], &tokens[b.id.as_str()]);
                out.push(SatdPair::new((*a).clone(), (*b).clone(), link.clone(), sim));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub pairs: Vec<SatdPair>,
    /// Pairs drawn from each bin.
    pub per_bin: [usize; SimilarityBins::COUNT],
    pub warning: Option<String>,
}

/// Draws `n` pairs with equal quotas per similarity bin.
///
/// Each bin gets `n / 10` (the remainder goes to the lowest bins). A bin that
/// cannot fill its quota gives everything it has, and the shortfall is handed
/// out one pair at a time, round-robin in ascending bin order, to bins with
/// pairs left. Output is grouped by bin; each bin's draw is shuffled.
pub fn stratified_sample(pairs: &[SatdPair], n: usize, seed: u64) -> Result<Sample> {
    if n < SimilarityBins::COUNT {
        return Err(Error::invalid(format!("sample size {n} is below {}", SimilarityBins::COUNT)));
    }
    let mut bins: Vec<Vec<&SatdPair>> = vec![Vec::new(); SimilarityBins::COUNT];
    for p in pairs {
        bins[SimilarityBins::bin_of(p.similarity)].push(p);
    }
    for b in &mut bins {
        b.sort_by(|x, y| x.pair_id.cmp(&y.pair_id));
    }

    let mut take = [0usize; SimilarityBins::COUNT];
    let mut warning = None;
    if n >= pairs.len() {
        if n > pairs.len() {
            let msg = format!("requested {n} pairs but only {} exist; returning all", pairs.len());
            log::warn!("{msg}");
            warning = Some(msg);
        }
        for (k, b) in bins.iter().enumerate() {
            take[k] = b.len();
        }
    } else {
        let base = n / SimilarityBins::COUNT;
        let extra = n % SimilarityBins::COUNT;
        let mut shortfall = 0;
        for (k, b) in bins.iter().enumerate() {
            let quota = base + usize::from(k < extra);
            take[k] = quota.min(b.len());
            shortfall += quota - take[k];
        }
        while shortfall > 0 {
            let mut progressed = false;
            for (k, b) in bins.iter().enumerate() {
                if shortfall == 0 {
                    break;
                }
                if take[k] < b.len() {
                    take[k] += 1;
                    shortfall -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(take.iter().sum());
    for (k, b) in bins.iter().enumerate() {
        let idx = rand::seq::index::sample(&mut rng, b.len(), take[k]);
        let mut chosen: Vec<&SatdPair> = idx.into_iter().map(|i| b[i]).collect();
        chosen.shuffle(&mut rng);
        out.extend(chosen.into_iter().cloned());
    }
    Ok(Sample {
        pairs: out,
        per_bin: take,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub bin_counts: [usize; SimilarityBins::COUNT],
}

pub fn similarity_stats(pairs: &[SatdPair]) -> Result<SimilarityStats> {
    if pairs.is_empty() {
        return Err(Error::Empty("similarity statistics need at least one pair"));
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.similarity).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.similarity - mean).powi(2)).sum::<f64>() / n;
    let mut bin_counts = [0; SimilarityBins::COUNT];
    for p in pairs {
        bin_counts[SimilarityBins::bin_of(p.similarity)] += 1;
    }
    Ok(SimilarityStats {
        mean,
        std_dev: var.sqrt(),
        bin_counts,
    })
}
