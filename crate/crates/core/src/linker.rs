//! Cross-reference extraction (`#123`, `ABC-123`, commit hashes) and
//! resolution into a typed link graph between containers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Artifact, Container, ContainerKind, Link, ReferenceKind, Span};

/// What a reference may point at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// `#N` in a shared issue/pull number space.
    IssueOrPull,
    IssueId,
    PullId,
    CommitHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSyntax {
    /// `#123`
    HashNumber,
    /// `ABC-123`
    ProjectKey,
    /// 7 to 40 lowercase hex characters with at least one letter.
    HexHash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePattern {
    pub kind: PatternKind,
    pub syntax: ReferenceSyntax,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_key_prefixes: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct PatternFile {
    #[serde(rename = "pattern")]
    patterns: Vec<ReferencePattern>,
}

impl ReferencePattern {
    pub fn hash_number() -> Self {
        ReferencePattern {
            kind: PatternKind::IssueOrPull,
            syntax: ReferenceSyntax::HashNumber,
            project_key_prefixes: None,
        }
    }

    pub fn hex_hash() -> Self {
        ReferencePattern {
            kind: PatternKind::CommitHash,
            syntax: ReferenceSyntax::HexHash,
            project_key_prefixes: None,
        }
    }

    pub fn project_key(prefixes: Option<Vec<String>>) -> Self {
        ReferencePattern {
            kind: PatternKind::IssueId,
            syntax: ReferenceSyntax::ProjectKey,
            project_key_prefixes: prefixes,
        }
    }

    /// `#N`, hashes, and project keys for every key prefix seen among the
    /// corpus's issues.
    pub fn defaults_for(index: &ContainerIndex) -> Vec<ReferencePattern> {
        let mut out = vec![ReferencePattern::hash_number(), ReferencePattern::hex_hash()];
        let prefixes = index.issue_key_prefixes();
        if !prefixes.is_empty() {
            out.push(ReferencePattern::project_key(Some(prefixes)));
        }
        out
    }

    /// Parses a TOML document of `[[pattern]]` tables.
    pub fn from_toml(text: &str) -> Result<Vec<ReferencePattern>> {
        let f: PatternFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(f.patterns)
    }

    fn regex(&self) -> Regex {
        let src = match self.syntax {
            ReferenceSyntax::HashNumber => r"#([0-9]+)\b".to_string(),
            ReferenceSyntax::HexHash => r"\b[0-9a-f]{7,40}\b".to_string(),
            ReferenceSyntax::ProjectKey => match &self.project_key_prefixes {
                Some(p) if !p.is_empty() => {
                    let alts: Vec<String> = p.iter().map(|s| regex::escape(s)).collect();
                    format!(r"(?i)\b(?:{})-[0-9]+\b", alts.join("|"))
                }
                _ => r"\b[A-Z][A-Z0-9]+-[0-9]+\b".to_string(),
            },
        };
        Regex::new(&src).expect("reference patterns are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub kind: PatternKind,
    pub raw: String,
    pub normalized: String,
    pub span: Span,
}

/// Finds references in document order; overlapping candidates keep the
/// earliest (then longest) match.
pub fn extract_references(text: &str, patterns: &[ReferencePattern]) -> Vec<Reference> {
    let mut found = Vec::new();
    for p in patterns {
        for m in p.regex().find_iter(text) {
            let raw = m.as_str();
            let normalized = match p.syntax {
                ReferenceSyntax::HashNumber => {
                    let boundary_ok = text[..m.start()]
                        .chars()
                        .next_back()
                        .map_or(true, |c| !(c.is_alphanumeric() || c == '_' || c == '&'));
                    if !boundary_ok {
                        continue;
                    }
                    raw[1..].to_string()
                }
                ReferenceSyntax::HexHash => {
                    if !raw.bytes().any(|b| matches!(b, b'a'..=b'f')) {
                        continue;
                    }
                    raw.to_string()
                }
                ReferenceSyntax::ProjectKey => raw.to_ascii_uppercase(),
            };
            found.push(Reference {
                kind: p.kind,
                raw: raw.to_string(),
                normalized,
                span: Span::new(m.start(), m.end()),
            });
        }
    }
    found.sort_by(|a, b| a.span.start.cmp(&b.span.start).then(b.span.end.cmp(&a.span.end)));
    let mut out: Vec<Reference> = Vec::with_capacity(found.len());
    for r in found {
        if out.last().map_or(true, |l| r.span.start >= l.span.end) {
            out.push(r);
        }
    }
    out
}

/// Lookup structures over the containers of an ingested corpus.
#[derive(Debug, Default, Clone)]
pub struct ContainerIndex {
    containers: BTreeSet<Container>,
    /// (project, number) -> numeric issues and pulls.
    numbered: HashMap<(String, String), Vec<Container>>,
    /// (project, uppercase key) -> issue.
    keys: HashMap<(String, String), Container>,
    /// project -> sorted commit hashes.
    commits: HashMap<String, Vec<String>>,
    /// code location -> (commit container, first artifact id seen there).
    code_locations: BTreeMap<Container, (Container, String)>,
}

impl ContainerIndex {
    pub fn from_artifacts(artifacts: &[Artifact]) -> Self {
        let mut idx = ContainerIndex::default();
        let mut commit_sets: HashMap<String, BTreeSet<String>> = HashMap::new();
        for a in artifacts {
            let c = &a.container;
            idx.containers.insert(c.clone());
            match c.kind {
                ContainerKind::Issue | ContainerKind::Pull => {
                    let id = c.native_id.trim();
                    if id.bytes().all(|b| b.is_ascii_digit()) {
                        let slot = idx.numbered.entry((c.project.clone(), id.to_string())).or_default();
                        if !slot.contains(c) {
                            slot.push(c.clone());
                        }
                    } else if c.kind == ContainerKind::Issue {
                        idx.keys.insert((c.project.clone(), id.to_ascii_uppercase()), c.clone());
                    }
                }
                ContainerKind::Commit => {
                    commit_sets.entry(c.project.clone()).or_default().insert(c.native_id.clone());
                }
                ContainerKind::CodeLocation => {
                    if let Some(h) = c.commit_hash() {
                        commit_sets.entry(c.project.clone()).or_default().insert(h.to_string());
                        let commit = Container::commit(h, c.project.clone());
                        idx.containers.insert(commit.clone());
                        idx.code_locations
                            .entry(c.clone())
                            .or_insert_with(|| (commit, a.id.clone()));
                    }
                }
            }
        }
        for slot in idx.numbered.values_mut() {
            slot.sort();
        }
        idx.commits = commit_sets
            .into_iter()
            .map(|(p, s)| (p, s.into_iter().collect()))
            .collect();
        idx
    }

    pub fn containers(&self) -> &BTreeSet<Container> {
        &self.containers
    }

    fn issue_key_prefixes(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .keys
            .keys()
            .filter_map(|(_, k)| k.rsplit_once('-').map(|(p, _)| p.to_string()))
            .collect();
        set.into_iter().collect()
    }

    fn resolve(&self, project: &str, r: &Reference) -> Resolution {
        let many = |v: Vec<Container>| match v.len() {
            0 => Resolution::Unresolved,
            1 => Resolution::Found(v.into_iter().next().expect("len 1")),
            _ => Resolution::Ambiguous,
        };
        match r.kind {
            PatternKind::IssueOrPull | PatternKind::IssueId | PatternKind::PullId
                if r.normalized.bytes().all(|b| b.is_ascii_digit()) =>
            {
                let cands = self
                    .numbered
                    .get(&(project.to_string(), r.normalized.clone()))
                    .cloned()
                    .unwrap_or_default()
                    .into_iter()
                    .filter(|c| match r.kind {
                        PatternKind::IssueId => c.kind == ContainerKind::Issue,
                        PatternKind::PullId => c.kind == ContainerKind::Pull,
                        _ => true,
                    })
                    .collect();
                many(cands)
            }
            PatternKind::IssueOrPull | PatternKind::IssueId | PatternKind::PullId => {
                match self.keys.get(&(project.to_string(), r.normalized.to_ascii_uppercase())) {
                    Some(c) if r.kind != PatternKind::PullId => Resolution::Found(c.clone()),
                    _ => Resolution::Unresolved,
                }
            }
            PatternKind::CommitHash => {
                let Some(hashes) = self.commits.get(project) else {
                    return Resolution::Unresolved;
                };
                let prefix = r.normalized.to_ascii_lowercase();
                let start = hashes.partition_point(|h| h.as_str() < prefix.as_str());
                let hits: Vec<Container> = hashes[start..]
                    .iter()
                    .take_while(|h| h.starts_with(&prefix))
                    .take(2)
                    .map(|h| Container::commit(h.clone(), project))
                    .collect();
                many(hits)
            }
        }
    }
}

enum Resolution {
    Found(Container),
    Unresolved,
    Ambiguous,
}

/// The references found in one artifact.
#[derive(Debug, Clone)]
pub struct ArtifactReferences {
    pub artifact_id: String,
    pub container: Container,
    pub references: Vec<Reference>,
}

pub fn references_for(artifacts: &[Artifact], patterns: &[ReferencePattern]) -> Vec<ArtifactReferences> {
    artifacts
        .iter()
        .map(|a| ArtifactReferences {
            artifact_id: a.id.clone(),
            container: a.container.clone(),
            references: extract_references(&a.text, patterns),
        })
        .collect()
}

/// Counters reported by [`resolve_links`]. `resolved + unresolved + ambiguous`
/// always equals `total_references`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub total_references: usize,
    pub resolved: usize,
    /// Includes `self_references`.
    pub unresolved: usize,
    pub ambiguous: usize,
    /// References that resolved to the referencing container itself.
    pub self_references: usize,
    pub explicit_links: usize,
    pub implicit_links: usize,
}

/// Containers and typed edges. Edges are stored directed (referencing side
/// first) but traversal treats them as undirected.
#[derive(Debug, Default, Clone)]
pub struct LinkGraph {
    containers: BTreeSet<Container>,
    edges: Vec<Link>,
    edge_keys: HashSet<(Container, Container, ReferenceKind)>,
    adjacency: BTreeMap<Container, Vec<usize>>,
}

impl LinkGraph {
    pub fn new() -> Self {
        LinkGraph::default()
    }

    pub fn add_container(&mut self, c: Container) {
        self.containers.insert(c);
    }

    /// Adds `link` unless an edge with the same endpoints and kind exists or it
    /// is a self-loop. Returns whether it was added.
    pub fn add_link(&mut self, link: Link) -> bool {
        if link.from == link.to {
            return false;
        }
        let key = (link.from.clone(), link.to.clone(), link.reference_kind);
        if !self.edge_keys.insert(key) {
            return false;
        }
        let i = self.edges.len();
        self.containers.insert(link.from.clone());
        self.containers.insert(link.to.clone());
        self.adjacency.entry(link.from.clone()).or_default().push(i);
        self.adjacency.entry(link.to.clone()).or_default().push(i);
        self.edges.push(link);
        true
    }

    pub fn from_links(links: impl IntoIterator<Item = Link>) -> Self {
        let mut g = LinkGraph::new();
        for l in links {
            g.add_link(l);
        }
        g
    }

    pub fn containers(&self) -> &BTreeSet<Container> {
        &self.containers
    }

    pub fn edges(&self) -> &[Link] {
        &self.edges
    }

    /// Every edge touching `c`, in insertion order.
    pub fn links_of<'a>(&'a self, c: &Container) -> impl Iterator<Item = &'a Link> + 'a {
        self.adjacency
            .get(c)
            .into_iter()
            .flatten()
            .map(move |&i| &self.edges[i])
    }

    pub fn into_links(self) -> Vec<Link> {
        self.edges
    }
}

/// Resolves references against the index and adds the implicit
/// code-location to commit edges.
pub fn resolve_links(refs: &[ArtifactReferences], index: &ContainerIndex) -> (LinkGraph, LinkStats) {
    let mut graph = LinkGraph::new();
    for c in index.containers() {
        graph.add_container(c.clone());
    }
    let mut stats = LinkStats::default();

    let mut ordered: Vec<&ArtifactReferences> = refs.iter().collect();
    ordered.sort_by(|a, b| a.artifact_id.cmp(&b.artifact_id));
    for ar in ordered {
        for r in &ar.references {
            stats.total_references += 1;
            match index.resolve(&ar.container.project, r) {
                Resolution::Found(to) if to == ar.container => {
                    stats.unresolved += 1;
                    stats.self_references += 1;
                }
                Resolution::Found(to) => {
                    stats.resolved += 1;
                    let reference_kind = match to.kind {
                        ContainerKind::Issue => ReferenceKind::IssueId,
                        ContainerKind::Pull => ReferenceKind::PullId,
                        _ => ReferenceKind::CommitHash,
                    };
                    if graph.add_link(Link {
                        from: ar.container.clone(),
                        to,
                        reference_kind,
                        evidence_text: r.raw.clone(),
                        evidence_artifact_id: ar.artifact_id.clone(),
                    }) {
                        stats.explicit_links += 1;
                    }
                }
                Resolution::Unresolved => stats.unresolved += 1,
                Resolution::Ambiguous => stats.ambiguous += 1,
            }
        }
    }
    for (location, (commit, artifact_id)) in &index.code_locations {
        let added = graph.add_link(Link {
            from: location.clone(),
            to: commit.clone(),
            reference_kind: ReferenceKind::ContainingCommit,
            evidence_text: commit.native_id.clone(),
            evidence_artifact_id: artifact_id.clone(),
        });
        if added {
            stats.implicit_links += 1;
        }
    }
    (graph, stats)
}

/// Extracts and resolves every reference in `artifacts`, using the default
/// patterns when `patterns` is `None`.
pub fn link_corpus(artifacts: &[Artifact], patterns: Option<&[ReferencePattern]>) -> (LinkGraph, LinkStats) {
    let index = ContainerIndex::from_artifacts(artifacts);
    let defaults;
    let patterns = match patterns {
        Some(p) => p,
        None => {
            defaults = ReferencePattern::defaults_for(&index);
            &defaults
        }
    };
    let refs = references_for(artifacts, patterns);
    resolve_links(&refs, &index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<ReferencePattern> {
        vec![
            ReferencePattern::hash_number(),
            ReferencePattern::hex_hash(),
            ReferencePattern::project_key(Some(vec!["CASSANDRA".into()])),
        ]
    }

    fn tokens(text: &str) -> Vec<(PatternKind, String, String)> {
        extract_references(text, &all())
            .into_iter()
            .map(|r| (r.kind, r.raw, r.normalized))
            .collect()
    }

    #[test]
    fn issue_number() {
        assert_eq!(tokens("closes #12769"), [(PatternKind::IssueOrPull, "#12769".into(), "12769".into())]);
    }

    #[test]
    fn short_commit_hash() {
        assert_eq!(
            tokens("cherry-picked from 0ffd5fa"),
            [(PatternKind::CommitHash, "0ffd5fa".into(), "0ffd5fa".into())]
        );
    }

    #[test]
    fn project_key_is_case_insensitive_and_normalized() {
        assert_eq!(
            tokens("CASSANDRA-8915 improve iterator"),
            [(PatternKind::IssueId, "CASSANDRA-8915".into(), "CASSANDRA-8915".into())]
        );
        assert_eq!(tokens("see cassandra-12")[0].2, "CASSANDRA-12");
    }

    #[test]
    fn hex_candidates_are_filtered() {
        assert!(tokens("abc123 is too short").is_empty());
        assert!(tokens("1234567 is only digits").is_empty());
        assert!(tokens(&"a".repeat(41)).is_empty());
        assert_eq!(tokens(&"b".repeat(40)).len(), 1);
        assert!(tokens("DEADBEEF uppercase").is_empty());
    }

    #[test]
    fn hash_number_needs_a_boundary() {
        assert!(tokens("issue#12").is_empty());
        assert!(tokens("&#123;").is_empty());
        assert_eq!(tokens("(#12)").len(), 1);
        assert!(tokens("#12abc").is_empty());
    }

    #[test]
    fn matches_come_in_document_order() {
        let got = tokens("fix 0ffd5fab and #7 for CASSANDRA-1");
        let kinds: Vec<_> = got.iter().map(|t| t.0).collect();
        assert_eq!(kinds, [PatternKind::CommitHash, PatternKind::IssueOrPull, PatternKind::IssueId]);
    }

    #[test]
    fn patterns_load_from_toml() {
        let p = ReferencePattern::from_toml(
            r#"
            [[pattern]]
            kind = "issue_id"
            syntax = "project_key"
            project_key_prefixes = ["KAFKA"]
            [[pattern]]
            kind = "pull_id"
            syntax = "hash_number"
            "#,
        )
        .unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].kind, PatternKind::PullId);
    }
}
