//! Artifact mining: git history (commit messages, added/deleted comments) and
//! issue/pull-request exports, with bot filtering.

pub mod bots;
pub mod git;
pub mod lexer;
pub mod tracker;

use std::collections::HashSet;

use serde::Serialize;

pub use bots::BotPolicy;
pub use git::ingest_git;
pub use lexer::{extract_comments, Comment, LanguageProfile, ProfileSet, StringDelimiter};
pub use tracker::{ingest_tracker_export, TrackerKind};

use crate::error::{Error, Result};
use crate::model::Artifact;

/// Artifacts produced by one ingestion step plus what was dropped on the way.
#[derive(Debug, Default, Clone, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
    pub bot_commits: usize,
    pub bot_sections: usize,
    pub merge_commits: usize,
    pub skipped_files: usize,
    pub skipped_records: usize,
    pub unterminated_comments: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl IngestReport {
    /// Appends `other`, failing if an artifact id would repeat.
    pub fn merge(&mut self, other: IngestReport) -> Result<()> {
        let mut seen: HashSet<&str> = self.artifacts.iter().map(|a| a.id.as_str()).collect();
        if let Some(dup) = other.artifacts.iter().find(|a| !seen.insert(a.id.as_str())) {
            return Err(Error::invalid(format!("duplicate artifact id `{}`", dup.id)));
        }
        self.artifacts.extend(other.artifacts);
        self.bot_commits += other.bot_commits;
        self.bot_sections += other.bot_sections;
        self.merge_commits += other.merge_commits;
        self.skipped_files += other.skipped_files;
        self.skipped_records += other.skipped_records;
        self.unterminated_comments += other.unterminated_comments;
        self.warnings.extend(other.warnings);
        Ok(())
    }
}
