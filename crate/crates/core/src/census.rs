//! Corpus-wide relation census: classify every generated pair, then count
//! duplication and repayment relations per directed (origin, target)
//! source-kind combination.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RelationLabel, SatdPair, SourceKind};
use crate::textnn::Classifier;

pub const DEFAULT_HIGHLIGHT_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPair {
    pub pair: SatdPair,
    pub probabilities: [f64; 3],
}

/// Predicts a label for every pair; the pair's `label` field carries the
/// prediction and `annotator` is cleared.
pub fn classify_corpus(pairs: &[SatdPair], model: &Classifier) -> Result<Vec<ClassifiedPair>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let preds = model.predict_pairs(pairs)?;
    Ok(pairs
        .iter()
        .zip(preds)
        .map(|(p, pred)| {
            let mut pair = p.clone();
            pair.label = Some(pred.label);
            pair.annotator = None;
            ClassifiedPair {
                pair,
                probabilities: pred.probabilities,
            }
        })
        .collect())
}

/// The nine major relation cases, keyed by directed source kinds and relation.
pub fn major_case_label(origin: SourceKind, target: SourceKind, relation: RelationLabel) -> Option<u8> {
    use RelationLabel::{Duplication as D, Repayment as R};
    use SourceKind::*;
    let summary = matches!(origin, IssueSummary | PullSummary);
    let comment = matches!(origin, IssueComment | PullComment);
    let case = match (origin, target, relation) {
        (_, CommitMessage, R) if summary => 1,
        (_, CommitMessage, R) if comment => 2,
        (_, CommentAdded, D | R) if summary => 3,
        (_, CommentAdded, D | R) if comment => 4,
        (CommentAdded, IssueSummary | PullSummary, D) => 5,
        (CommentAdded, IssueComment | PullComment, D) => 6,
        (CommentAdded, CommitMessage, D | R) => 7,
        (CommentDeleted, CommitMessage, R) => 8,
        (IssueSummary, PullSummary, D) => 9,
        _ => return None,
    };
    Some(case)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub origin_kind: SourceKind,
    pub target_kind: SourceKind,
    pub duplication_count: usize,
    pub duplication_pct: f64,
    pub repayment_count: usize,
    pub repayment_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major_case: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusTable {
    pub rows: Vec<CensusRow>,
    pub total_duplication: usize,
    pub total_repayment: usize,
    /// Pairs labeled none (excluded from the rows).
    pub none_pairs: usize,
}

/// Display position of an origin kind: summaries, then comments, then code
/// comments, then the kinds without a dedicated group.
fn origin_rank(kind: SourceKind) -> usize {
    use SourceKind::*;
    const ORDER: [SourceKind; 9] = [
        IssueSummary,
        PullSummary,
        IssueComment,
        PullComment,
        CommentAdded,
        CommentDeleted,
        IssueDescription,
        PullDescription,
        CommitMessage,
    ];
    ORDER.iter().position(|&k| k == kind).expect("every kind is ranked")
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

pub fn relation_census(pairs: &[SatdPair]) -> Result<CensusTable> {
    let mut counts: BTreeMap<(SourceKind, SourceKind), (usize, usize)> = BTreeMap::new();
    let mut none_pairs = 0;
    for (i, p) in pairs.iter().enumerate() {
        let label = p.label.ok_or_else(|| Error::InvalidRecord {
            index: i,
            reason: format!("pair `{}` has no label", p.pair_id),
        })?;
        let key = (p.origin.source_kind, p.target.source_kind);
        match label {
            RelationLabel::None => none_pairs += 1,
            RelationLabel::Duplication => counts.entry(key).or_default().0 += 1,
            RelationLabel::Repayment => counts.entry(key).or_default().1 += 1,
        }
    }
    let total_duplication: usize = counts.values().map(|c| c.0).sum();
    let total_repayment: usize = counts.values().map(|c| c.1).sum();
    let mut rows: Vec<CensusRow> = counts
        .into_iter()
        .map(|((o, t), (d, r))| CensusRow {
            origin_kind: o,
            target_kind: t,
            duplication_count: d,
            duplication_pct: pct(d, total_duplication),
            repayment_count: r,
            repayment_pct: pct(r, total_repayment),
            major_case: major_case_label(o, t, RelationLabel::Duplication)
                .or_else(|| major_case_label(o, t, RelationLabel::Repayment)),
        })
        .collect();
    rows.sort_by(|a, b| {
        origin_rank(a.origin_kind)
            .cmp(&origin_rank(b.origin_kind))
            .then_with(|| a.target_kind.display_label().cmp(b.target_kind.display_label()))
    });
    Ok(CensusTable {
        rows,
        total_duplication,
        total_repayment,
        none_pairs,
    })
}

/// Rows whose combined count exceeds `threshold`.
pub fn highlight_rows(table: &CensusTable, threshold: usize) -> Vec<bool> {
    table
        .rows
        .iter()
        .map(|r| r.duplication_count + r.repayment_count > threshold)
        .collect()
}

pub fn to_markdown(table: &CensusTable, threshold: usize) -> String {
    let flags = highlight_rows(table, threshold);
    let mut out = String::new();
    out.push_str("| Original | Duplicated / Repaid | Duplication | % | Repayment | % | Case |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for (row, bold) in table.rows.iter().zip(flags) {
        let b = |s: String| if bold { format!("**{s}**") } else { s };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            b(row.origin_kind.display_label().to_string()),
            b(row.target_kind.display_label().to_string()),
            b(row.duplication_count.to_string()),
            b(format!("{:.1}", row.duplication_pct)),
            b(row.repayment_count.to_string()),
            b(format!("{:.1}", row.repayment_pct)),
            row.major_case.map_or(String::new(), |c| c.to_string()),
        );
    }
    let _ = writeln!(
        out,
        "| Total | | {} | 100.0 | {} | 100.0 | |",
        table.total_duplication, table.total_repayment
    );
    out
}
