//! Shared domain types: artifacts mined from the four sources, the links between
//! their containers, and the SATD pairs built on top of them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Where an artifact's text came from.
///
/// The declaration order is the tie-break priority used when two artifacts of a
/// pair share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    IssueSummary,
    IssueDescription,
    IssueComment,
    PullSummary,
    PullDescription,
    PullComment,
    CommentAdded,
    CommentDeleted,
    CommitMessage,
}

impl SourceKind {
    pub const ALL: [SourceKind; 9] = [
        SourceKind::IssueSummary,
        SourceKind::IssueDescription,
        SourceKind::IssueComment,
        SourceKind::PullSummary,
        SourceKind::PullDescription,
        SourceKind::PullComment,
        SourceKind::CommentAdded,
        SourceKind::CommentDeleted,
        SourceKind::CommitMessage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::IssueSummary => "issue_summary",
            SourceKind::IssueDescription => "issue_description",
            SourceKind::IssueComment => "issue_comment",
            SourceKind::PullSummary => "pull_summary",
            SourceKind::PullDescription => "pull_description",
            SourceKind::PullComment => "pull_comment",
            SourceKind::CommentAdded => "comment_added",
            SourceKind::CommentDeleted => "comment_deleted",
            SourceKind::CommitMessage => "commit_message",
        }
    }

    /// Human-facing label in the `issue:summary` / `comment[added]` style.
    pub fn display_label(self) -> &'static str {
        match self {
            SourceKind::IssueSummary => "issue:summary",
            SourceKind::IssueDescription => "issue:description",
            SourceKind::IssueComment => "issue:comment",
            SourceKind::PullSummary => "pull:summary",
            SourceKind::PullDescription => "pull:description",
            SourceKind::PullComment => "pull:comment",
            SourceKind::CommentAdded => "comment[added]",
            SourceKind::CommentDeleted => "comment[deleted]",
            SourceKind::CommitMessage => "commit",
        }
    }

    pub fn is_code_comment(self) -> bool {
        matches!(self, SourceKind::CommentAdded | SourceKind::CommentDeleted)
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown source kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Issue,
    Pull,
    Commit,
    CodeLocation,
}

impl ContainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerKind::Issue => "issue",
            ContainerKind::Pull => "pull",
            ContainerKind::Commit => "commit",
            ContainerKind::CodeLocation => "code_location",
        }
    }
}

/// Something that holds artifacts and can be the endpoint of a link: an issue,
/// a pull request, a commit, or a file at a commit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Container {
    pub kind: ContainerKind,
    pub native_id: String,
    pub project: String,
}

impl Container {
    pub fn new(kind: ContainerKind, native_id: impl Into<String>, project: impl Into<String>) -> Self {
        let mut native_id = native_id.into();
        if kind == ContainerKind::Commit {
            native_id = native_id.trim().to_ascii_lowercase();
        }
        Container {
            kind,
            native_id,
            project: project.into(),
        }
    }

    pub fn issue(id: impl Into<String>, project: impl Into<String>) -> Self {
        Container::new(ContainerKind::Issue, id, project)
    }

    pub fn pull(id: impl Into<String>, project: impl Into<String>) -> Self {
        Container::new(ContainerKind::Pull, id, project)
    }

    pub fn commit(hash: impl Into<String>, project: impl Into<String>) -> Self {
        Container::new(ContainerKind::Commit, hash, project)
    }

    /// A file at a commit; the native id is `path@hash`.
    pub fn code_location(path: &str, hash: &str, project: impl Into<String>) -> Self {
        Container::new(
            ContainerKind::CodeLocation,
            format!("{path}@{}", hash.to_ascii_lowercase()),
            project,
        )
    }

    /// Commit hash carried by a commit or code-location container.
    pub fn commit_hash(&self) -> Option<&str> {
        match self.kind {
            ContainerKind::Commit => Some(&self.native_id),
            ContainerKind::CodeLocation => self.native_id.rsplit_once('@').map(|(_, h)| h),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.native_id.is_empty() {
            return Err("container native_id is empty".into());
        }
        match self.kind {
            ContainerKind::Commit if !is_full_hash(&self.native_id) => Err(format!(
                "commit native_id `{}` is not 40 lowercase hex characters",
                self.native_id
            )),
            ContainerKind::CodeLocation => match self.commit_hash() {
                Some(h) if is_full_hash(h) => Ok(()),
                _ => Err(format!(
                    "code_location native_id `{}` must be path@<40-hex commit>",
                    self.native_id
                )),
            },
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Container {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.project, self.kind.as_str(), self.native_id)
    }
}

pub fn is_full_hash(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Half-open byte range into a container's raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub project: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub author: String,
    pub is_bot: bool,
    /// UTC seconds. For deleted comments this is the deleting commit's time.
    pub created_at: i64,
    pub container: Container,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Span>,
    /// Introduction time of a deleted comment, when history shows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added_at: Option<i64>,
}

impl Artifact {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("artifact id is empty".into());
        }
        if normalize_whitespace(&self.text).is_empty() {
            return Err(format!("artifact `{}` has empty text", self.id));
        }
        self.container.validate()?;
        if self.source_kind.is_code_comment() && self.container.kind != ContainerKind::CodeLocation {
            return Err(format!(
                "artifact `{}` is a code comment but its container is a {}",
                self.id,
                self.container.kind.as_str()
            ));
        }
        Ok(())
    }

    /// Orders artifacts by the pair direction convention: earlier first, then
    /// source-kind priority, then id.
    pub fn chronological_cmp(&self, other: &Artifact) -> Ordering {
        self.created_at
            .cmp(&other.created_at)
            .then(self.source_kind.cmp(&other.source_kind))
            .then_with(|| self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    IssueId,
    PullId,
    CommitHash,
    ContainingCommit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: Container,
    pub to: Container,
    pub reference_kind: ReferenceKind,
    /// The raw matched token, e.g. `#12769`.
    pub evidence_text: String,
    pub evidence_artifact_id: String,
}

impl Link {
    pub fn validate(&self) -> Result<(), String> {
        if self.from == self.to {
            return Err(format!("link from {} to itself", self.from));
        }
        if self.reference_kind == ReferenceKind::CommitHash && self.to.kind != ContainerKind::Commit {
            return Err(format!("commit_hash link targets a {}", self.to.kind.as_str()));
        }
        self.from.validate()?;
        self.to.validate()
    }
}

/// Relation between two SATD items. The declaration order is the class index
/// used by the classifier and every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    None,
    Duplication,
    Repayment,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 3] = [RelationLabel::None, RelationLabel::Duplication, RelationLabel::Repayment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::None => "none",
            RelationLabel::Duplication => "duplication",
            RelationLabel::Repayment => "repayment",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(RelationLabel::None),
            "duplication" => Ok(RelationLabel::Duplication),
            "repayment" => Ok(RelationLabel::Repayment),
            other => Err(Error::invalid(format!(
                "unknown relation label `{other}` (expected none, duplication or repayment)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatdPair {
    pub pair_id: String,
    pub origin: Artifact,
    pub target: Artifact,
    pub via_link: Link,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<RelationLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
}

impl SatdPair {
    /// Builds an unlabeled pair, putting the chronologically earlier artifact first.
    pub fn new(a: Artifact, b: Artifact, via_link: Link, similarity: f64) -> Self {
        let (origin, target) = if a.chronological_cmp(&b) == Ordering::Greater {
            (b, a)
        } else {
            (a, b)
        };
        SatdPair {
            pair_id: pair_id(&origin.id, &target.id),
            origin,
            target,
            via_link,
            similarity: similarity.clamp(0.0, 1.0),
            label: None,
            annotator: None,
        }
    }

    pub fn with_label(mut self, label: RelationLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.pair_id.is_empty() {
            return Err("pair_id is empty".into());
        }
        self.origin.validate()?;
        self.target.validate()?;
        if self.origin.created_at > self.target.created_at {
            return Err(format!(
                "pair `{}`: origin is later than target ({} > {})",
                self.pair_id, self.origin.created_at, self.target.created_at
            ));
        }
        if !(0.0..=1.0).contains(&self.similarity) {
            return Err(format!("pair `{}`: similarity {} outside [0,1]", self.pair_id, self.similarity));
        }
        self.via_link.validate()
    }
}

pub fn pair_id(origin_id: &str, target_id: &str) -> String {
    format!("{origin_id}~{target_id}")
}

/// Collapses every run of whitespace to one space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
