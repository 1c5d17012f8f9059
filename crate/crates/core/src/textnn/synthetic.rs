//! Labeled pairs with planted lexical signals, for exercising the classifier
//! and evaluation pipeline end to end.
//!
//! * duplication: both texts contain [`DUPLICATE_MARKER`];
//! * repayment: the later (target) text contains a word from [`REPAYMENT_WORDS`];
//! * none: neither signal. A `distractor_rate` share of these carries a
//!   half-signal (the marker on one side only, or a repayment word on the
//!   origin only) so that the relation cannot be read off a single text.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Artifact, Container, Link, ReferenceKind, RelationLabel, SatdPair, SourceKind};

pub const DUPLICATE_MARKER: &str = "dupmark";
pub const REPAYMENT_WORDS: [&str; 4] = ["fixed", "resolved", "removed", "repaid"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub seed: u64,
    /// Class shares in (none, duplication, repayment) order.
    pub priors: [f64; 3],
    pub distractor_rate: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub filler_words: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pairs: 600,
            seed: 1,
            priors: [0.5, 0.25, 0.25],
            distractor_rate: 0.1,
            min_words: 6,
            max_words: 16,
            filler_words: 400,
        }
    }
}

fn filler_vocabulary(n: usize) -> Vec<String> {
    const ONSETS: [&str; 12] = ["b", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "g"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables: Vec<String> = ONSETS
        .iter()
        .flat_map(|o| VOWELS.iter().map(move |v| format!("{o}{v}")))
        .collect();
    let mut out = Vec::with_capacity(n);
    'outer: for a in &syllables {
        for b in &syllables {
            for c in &syllables {
                if out.len() == n {
                    break 'outer;
                }
                out.push(format!("{a}{b}{c}"));
            }
        }
    }
    out
}

/// Exact class counts for `n` items: floor of each share, remainder to the
/// classes with the largest fractional parts (lowest index on ties).
pub fn class_counts(n: usize, priors: &[f64; 3]) -> [usize; 3] {
    let total: f64 = priors.iter().sum();
    let raw: Vec<f64> = priors.iter().map(|p| p / total * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, r) in counts.iter_mut().zip(&raw) {
        *c = r.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        counts[c] += 1;
    }
    counts
}

fn artifact(kind: SourceKind, n: usize, text: String, created_at: i64) -> Artifact {
    let project = "synthetic".to_string();
    let hash = format!("{:040x}", 0xabc0_0000_u64 + n as u64);
    let container = match kind {
        SourceKind::IssueSummary | SourceKind::IssueDescription | SourceKind::IssueComment => {
            Container::issue(n.to_string(), project.clone())
        }
        SourceKind::PullSummary | SourceKind::PullDescription | SourceKind::PullComment => {
            Container::pull(n.to_string(), project.clone())
        }
        SourceKind::CommitMessage => Container::commit(hash, project.clone()),
        SourceKind::CommentAdded | SourceKind::CommentDeleted => {
            Container::code_location(&format!("src/m{n}.c"), &hash, project.clone())
        }
    };
    Artifact {
        id: format!("{project}:{}:{n}", kind.as_str()),
        project,
        source_kind: kind,
        text,
        author: "dev".into(),
        is_bot: false,
        created_at,
        container,
        evidence: None,
        added_at: None,
    }
}

/// Generates `config.pairs` labeled pairs in a seeded random order.
pub fn planted_pairs(config: &SyntheticConfig) -> Vec<SatdPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words = filler_vocabulary(config.filler_words.max(1));
    let counts = class_counts(config.pairs, &config.priors);
    let mut labels: Vec<RelationLabel> = RelationLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, c)| std::iter::repeat(l).take(c))
        .collect();
    labels.shuffle(&mut rng);

    let origin_kinds = [SourceKind::IssueSummary, SourceKind::IssueComment, SourceKind::CommentAdded];
    let target_kinds = [SourceKind::CommitMessage, SourceKind::PullComment, SourceKind::CommentDeleted];

    let filler = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(config.min_words..=config.max_words.max(config.min_words));
        (0..len).map(|_| words.choose(rng).unwrap().clone()).collect()
    };
    let insert = |rng: &mut ChaCha8Rng, text: &mut Vec<String>, word: &str| {
        let at = rng.gen_range(0..=text.len());
        text.insert(at, word.to_string());
    };

    let mut out = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let mut a = filler(&mut rng);
        let mut b = filler(&mut rng);
        let repay = *REPAYMENT_WORDS.choose(&mut rng).unwrap();
        match label {
            RelationLabel::Duplication => {
                insert(&mut rng, &mut a, DUPLICATE_MARKER);
                insert(&mut rng, &mut b, DUPLICATE_MARKER);
            }
            RelationLabel::Repayment => insert(&mut rng, &mut b, repay),
            RelationLabel::None => {
                if rng.gen_bool(config.distractor_rate.clamp(0.0, 1.0)) {
                    match rng.gen_range(0..3) {
                        0 => insert(&mut rng, &mut a, DUPLICATE_MARKER),
                        1 => insert(&mut rng, &mut b, DUPLICATE_MARKER),
                        _ => insert(&mut rng, &mut a, repay),
                    }
                }
            }
        }
        let t0 = 1_600_000_000 + (i as i64) * 1000;
        let origin = artifact(*origin_kinds.choose(&mut rng).unwrap(), 2 * i, a.join(" "), t0);
        let target = artifact(*target_kinds.choose(&mut rng).unwrap(), 2 * i + 1, b.join(" "), t0 + 500);
        let link = Link {
            from: target.container.clone(),
            to: origin.container.clone(),
            reference_kind: ReferenceKind::IssueId,
            evidence_text: format!("#{}", 2 * i),
            evidence_artifact_id: target.id.clone(),
        };
        let sim = crate::pairgen::cosine_similarity(&a, &b);
        out.push(SatdPair::new(origin, target, link, sim).with_label(label));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_priors() {
        assert_eq!(class_counts(600, &[0.5, 0.25, 0.25]), [300, 150, 150]);
        assert_eq!(class_counts(10, &[1.0, 1.0, 1.0]), [4, 3, 3]);
        assert_eq!(class_counts(0, &[0.5, 0.25, 0.25]), [0, 0, 0]);
    }

    #[test]
    fn signals_are_planted_as_described() {
        let pairs = planted_pairs(&SyntheticConfig::default());
        assert_eq!(pairs.len(), 600);
        for p in &pairs {
            p.validate().unwrap();
            let a: Vec<&str> = p.origin.text.split(' ').collect();
            let b: Vec<&str> = p.target.text.split(' ').collect();
            let dup = a.contains(&DUPLICATE_MARKER) && b.contains(&DUPLICATE_MARKER);
            let rep = b.iter().any(|w| REPAYMENT_WORDS.contains(w));
            let expected = if dup {
                RelationLabel::Duplication
            } else if rep {
                RelationLabel::Repayment
            } else {
                RelationLabel::None
            };
            assert_eq!(p.label, Some(expected), "{}", p.pair_id);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SyntheticConfig {
            pairs: 50,
            ..SyntheticConfig::default()
        };
        assert_eq!(planted_pairs(&cfg), planted_pairs(&cfg));
        let other = SyntheticConfig { seed: 2, ..cfg.clone() };
        assert_ne!(planted_pairs(&cfg), planted_pairs(&other));
    }
}
