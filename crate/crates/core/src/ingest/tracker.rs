//! Issue and pull-request exports: JSON-Lines, one item per line, with a
//! summary, a description and a list of comments.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::Deserialize;
use serde_json::Value;

use super::bots::BotPolicy;
use super::IngestReport;
use crate::error::{Error, Result};
use crate::model::{normalize_whitespace, Artifact, Container, ContainerKind, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerKind {
    Issue,
    Pull,
}

impl TrackerKind {
    fn container_kind(self) -> ContainerKind {
        match self {
            TrackerKind::Issue => ContainerKind::Issue,
            TrackerKind::Pull => ContainerKind::Pull,
        }
    }

    fn sources(self) -> [SourceKind; 3] {
        match self {
            TrackerKind::Issue => [SourceKind::IssueSummary, SourceKind::IssueDescription, SourceKind::IssueComment],
            TrackerKind::Pull => [SourceKind::PullSummary, SourceKind::PullDescription, SourceKind::PullComment],
        }
    }

    fn slug(self) -> &'static str {
        match self {
            TrackerKind::Issue => "issue",
            TrackerKind::Pull => "pull",
        }
    }
}

#[derive(Debug, Deserialize)]
struct ExportItem {
    #[serde(default)]
    native_id: Option<Value>,
    #[serde(default)]
    project: Option<String>,
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    created_at: Option<Value>,
    #[serde(default)]
    summary: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    comments: Vec<ExportComment>,
}

#[derive(Debug, Deserialize)]
struct ExportComment {
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    created_at: Option<Value>,
    #[serde(default)]
    body: Option<String>,
}

/// Accepts integer UTC seconds, RFC 3339, or a naive `YYYY-MM-DD[ T]HH:MM:SS`
/// (read as UTC).
pub fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(n) = s.parse::<i64>() {
                return Some(n);
            }
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Some(dt.timestamp());
            }
            ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
                .map(|dt| dt.and_utc().timestamp())
        }
        _ => None,
    }
}

fn native_id_string(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().trim_start_matches('#').to_string(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}

/// Reads a tracker export, producing one artifact per non-empty section.
///
/// Records without a `native_id` or with an unparsable timestamp are skipped
/// and counted in the report. A line that is not JSON at all is an error.
pub fn ingest_tracker_export(
    path: impl AsRef<Path>,
    kind: TrackerKind,
    bots: &BotPolicy,
    default_project: &str,
) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = IngestReport::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: ExportItem = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        match item_artifacts(item, kind, bots, default_project) {
            Ok((arts, bots_dropped)) => {
                report.bot_sections += bots_dropped;
                report.artifacts.extend(arts);
            }
            Err(reason) => {
                log::warn!("{}:{}: skipping record: {reason}", path.display(), i + 1);
                report.skipped_records += 1;
                report.warnings.push(format!("line {}: {reason}", i + 1));
            }
        }
    }
    Ok(report)
}

fn item_artifacts(
    item: ExportItem,
    kind: TrackerKind,
    bots: &BotPolicy,
    default_project: &str,
) -> std::result::Result<(Vec<Artifact>, usize), String> {
    let native_id = item
        .native_id
        .as_ref()
        .and_then(native_id_string)
        .ok_or("missing native_id")?;
    let created_at = item
        .created_at
        .as_ref()
        .and_then(parse_timestamp)
        .ok_or_else(|| format!("{native_id}: missing or unparsable created_at"))?;
    let mut comment_times = Vec::with_capacity(item.comments.len());
    for (ci, c) in item.comments.iter().enumerate() {
        let t = c
            .created_at
            .as_ref()
            .and_then(parse_timestamp)
            .ok_or_else(|| format!("{native_id}: comment {ci} has unparsable created_at"))?;
        comment_times.push(t);
    }

    let project = item.project.unwrap_or_else(|| default_project.to_string());
    let container = Container::new(kind.container_kind(), native_id.clone(), project.clone());
    let [summary_kind, description_kind, comment_kind] = kind.sources();
    let item_author = item.author.unwrap_or_default();
    let base = format!("{project}:{}:{native_id}", kind.slug());

    let mut out = Vec::new();
    let mut dropped = 0;
    let mut push = |source_kind: SourceKind, suffix: String, text: Option<String>, author: &str, at: i64| {
        let Some(text) = text else { return };
        if normalize_whitespace(&text).is_empty() {
            return;
        }
        if bots.is_bot(author) {
            dropped += 1;
            return;
        }
        out.push(Artifact {
            id: format!("{base}:{suffix}"),
            project: project.clone(),
            source_kind,
            text: text.trim().to_string(),
            author: author.to_string(),
            is_bot: false,
            created_at: at,
            container: container.clone(),
            evidence: None,
            added_at: None,
        });
    };
    push(summary_kind, "summary".into(), item.summary, &item_author, created_at);
    push(description_kind, "description".into(), item.description, &item_author, created_at);
    for (ci, (c, at)) in item.comments.into_iter().zip(comment_times).enumerate() {
        let author = c.author.unwrap_or_default();
        push(comment_kind, format!("comment:{ci}"), c.body, &author, at);
    }
    Ok((out, dropped))
}
