//! SATD candidate flagging: whole-word keyword patterns, or a trained
//! single-text scorer behind a probability threshold.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::Record;
use crate::model::Artifact;
use crate::textnn::Classifier;

pub const DEFAULT_PATTERNS: [&str; 12] = [
    "todo",
    "fixme",
    "hack",
    "xxx",
    "workaround",
    "work-around",
    "temporary",
    "kludge",
    "technical debt",
    "not the best",
    "should be removed",
    "quick and dirty",
];

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<String>,
    regexes: Vec<Regex>,
}

impl PatternSet {
    /// Lowercases and whitespace-normalizes each pattern; duplicates collapse.
    pub fn new<S: AsRef<str>>(patterns: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut normalized: Vec<String> = Vec::new();
        for p in patterns {
            let p = p.as_ref().split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            if !p.is_empty() && !normalized.contains(&p) {
                normalized.push(p);
            }
        }
        if normalized.is_empty() {
            return Err(Error::Config("pattern set is empty".into()));
        }
        let regexes = normalized
            .iter()
            .map(|p| {
                let body = p.split(' ').map(regex::escape).collect::<Vec<_>>().join(r"\s+");
                Regex::new(&format!(r"(?i)\b{body}\b")).map_err(|e| Error::Config(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PatternSet {
            patterns: normalized,
            regexes,
        })
    }

    /// One pattern per line; blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// Distinct patterns occurring as whole words in `text`, in set order.
    pub fn matches(&self, text: &str) -> Vec<String> {
        self.patterns
            .iter()
            .zip(&self.regexes)
            .filter(|(_, r)| r.is_match(text))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

impl Default for PatternSet {
    fn default() -> Self {
        PatternSet::new(DEFAULT_PATTERNS).expect("default patterns compile")
    }
}

pub fn detect_keyword(artifact: &Artifact, patterns: &PatternSet) -> (bool, Vec<String>) {
    let m = patterns.matches(&artifact.text);
    (!m.is_empty(), m)
}

/// Probability that `artifact` is SATD according to a 2-class text scorer.
pub fn detect_model(artifact: &Artifact, scorer: &Classifier) -> Result<f64> {
    scorer.score_text(&artifact.text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMethod {
    Keyword,
    Model,
}

/// Provenance of one artifact flagged as SATD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatdFlag {
    pub artifact_id: String,
    pub method: DetectionMethod,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matches: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Record for SatdFlag {
    const TYPE: &'static str = "satd";

    fn validate(&self) -> std::result::Result<(), String> {
        if self.artifact_id.is_empty() {
            return Err("artifact_id is empty".into());
        }
        match self.method {
            DetectionMethod::Keyword if self.matches.is_empty() => Err("keyword flag without matches".into()),
            DetectionMethod::Model if self.score.is_none() || self.threshold.is_none() => {
                Err("model flag without score and threshold".into())
            }
            _ => Ok(()),
        }
    }
}

/// Flags artifacts by keyword, or by `scorer` probability ≥ threshold when a
/// scorer is given. Only flagged artifacts are returned, in input order.
pub fn detect_corpus(
    artifacts: &[Artifact],
    patterns: &PatternSet,
    scorer: Option<(&Classifier, f64)>,
) -> Result<Vec<SatdFlag>> {
    match scorer {
        None => Ok(artifacts
            .iter()
            .filter_map(|a| {
                let (hit, matches) = detect_keyword(a, patterns);
                hit.then(|| SatdFlag {
                    artifact_id: a.id.clone(),
                    method: DetectionMethod::Keyword,
                    matches,
                    score: None,
                    threshold: None,
                })
            })
            .collect()),
        Some((model, threshold)) => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
            }
            let texts: Vec<&str> = artifacts.iter().map(|a| a.text.as_str()).collect();
            let scores = model.score_texts(&texts)?;
            Ok(artifacts
                .iter()
                .zip(scores)
                .filter(|(_, s)| *s >= threshold)
                .map(|(a, s)| SatdFlag {
                    artifact_id: a.id.clone(),
                    method: DetectionMethod::Model,
                    matches: patterns.matches(&a.text),
                    score: Some(s),
                    threshold: Some(threshold),
                })
                .collect())
        }
    }
}
