//! Commit-message and comment-change mining over a local git repository.
//!
//! History is read through the `git` executable: one `git log` for commit
//! metadata, `git diff-tree` per commit for changed paths and a long-lived
//! `git cat-file --batch` for blob contents.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use super::bots::BotPolicy;
use super::lexer::{extract_comments, Comment, ProfileSet};
use super::IngestReport;
use crate::error::{Error, Result};
use crate::model::{normalize_whitespace, Artifact, Container, SourceKind};

const NULL_OID: &str = "0000000000000000000000000000000000000000";

#[derive(Debug, Clone)]
pub struct CommitInfo {
    pub hash: String,
    pub parents: Vec<String>,
    pub author: String,
    pub author_time: i64,
    pub message: String,
}

#[derive(Debug, Clone)]
struct FileChange {
    old_oid: Option<String>,
    new_oid: Option<String>,
    path: String,
}

fn git(repo: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off", "-c", "log.showSignature=false"])
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env_remove("GIT_DIR")
        .env_remove("GIT_WORK_TREE");
    cmd
}

fn run(repo: &Path, args: &[&str]) -> Result<Vec<u8>> {
    let out = git(repo)
        .args(args)
        .output()
        .map_err(|e| Error::Git(format!("cannot run git: {e}")))?;
    if !out.status.success() {
        return Err(Error::Git(format!(
            "`git {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(out.stdout)
}

/// Lists commits reachable from `HEAD`, parents before children.
pub fn list_commits(repo: &Path) -> Result<Vec<CommitInfo>> {
    if run(repo, &["rev-parse", "--git-dir"]).is_err() {
        return Err(Error::Git(format!("{} is not a git repository", repo.display())));
    }
    if run(repo, &["rev-parse", "--verify", "--quiet", "HEAD"]).is_err() {
        return Ok(Vec::new());
    }
    let raw = run(
        repo,
        &["log", "--topo-order", "--reverse", "--no-color", "--format=%H%x1f%P%x1f%an%x1f%at%x1f%B%x1e", "HEAD"],
    )?;
    let text = String::from_utf8_lossy(&raw);
    let mut commits = Vec::new();
    for rec in text.split('\x1e') {
        let rec = rec.trim_start_matches('\n');
        if rec.is_empty() {
            continue;
        }
        let mut fields = rec.splitn(5, '\x1f');
        let (Some(hash), Some(parents), Some(author), Some(time), Some(message)) =
            (fields.next(), fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Git(format!("unexpected git log record: {rec:?}")));
        };
        commits.push(CommitInfo {
            hash: hash.trim().to_ascii_lowercase(),
            parents: parents.split_whitespace().map(str::to_string).collect(),
            author: author.to_string(),
            author_time: time.trim().parse().map_err(|_| Error::Git(format!("bad author time {time:?}")))?,
            message: message.trim().to_string(),
        });
    }
    Ok(commits)
}

fn changed_files(repo: &Path, commit: &CommitInfo) -> Result<Vec<FileChange>> {
    let mut args = vec!["diff-tree", "-r", "-z", "--no-renames", "--no-commit-id", "--raw"];
    if commit.parents.is_empty() {
        args.push("--root");
        args.push(&commit.hash);
    } else {
        args.push(&commit.parents[0]);
        args.push(&commit.hash);
    }
    let raw = run(repo, &args)?;
    let mut parts = raw.split(|&b| b == 0).filter(|p| !p.is_empty());
    let mut out = Vec::new();
    while let Some(meta) = parts.next() {
        let meta = String::from_utf8_lossy(meta);
        let Some(path) = parts.next() else { break };
        let path = String::from_utf8_lossy(path).into_owned();
        // :old_mode new_mode old_oid new_oid status
        let f: Vec<&str> = meta.trim_start_matches(':').split_whitespace().collect();
        if f.len() < 5 || f[0] == "160000" || f[1] == "160000" {
            continue;
        }
        let oid = |s: &str| (s != NULL_OID && !s.chars().all(|c| c == '0')).then(|| s.to_string());
        out.push(FileChange {
            old_oid: oid(f[2]),
            new_oid: oid(f[3]),
            path,
        });
    }
    Ok(out)
}

struct BlobReader {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl BlobReader {
    fn spawn(repo: &Path) -> Result<Self> {
        let mut child = git(repo)
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Git(format!("cannot spawn git cat-file: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(BlobReader { child, stdin, stdout })
    }

    /// Returns `None` for missing objects.
    fn read(&mut self, oid: &str) -> Result<Option<Vec<u8>>> {
        let err = |e: std::io::Error| Error::Git(format!("cat-file: {e}"));
        writeln!(self.stdin, "{oid}").map_err(err)?;
        self.stdin.flush().map_err(err)?;
        let mut header = String::new();
        self.stdout.read_line(&mut header).map_err(err)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Ok(None);
        }
        let size: usize = fields[2].parse().map_err(|_| Error::Git(format!("bad cat-file header {header:?}")))?;
        let mut buf = vec![0u8; size + 1];
        self.stdout.read_exact(&mut buf).map_err(err)?;
        buf.pop();
        Ok((fields[1] == "blob").then_some(buf))
    }
}

impl Drop for BlobReader {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Multiset difference on normalized text: `(added, deleted)` where added
/// comments come from `child` and deleted ones from `parent`.
pub fn diff_comments<'a>(parent: &'a [Comment], child: &'a [Comment]) -> (Vec<&'a Comment>, Vec<&'a Comment>) {
    fn unmatched<'a>(side: &'a [Comment], other: &[Comment]) -> Vec<&'a Comment> {
        let mut remaining: HashMap<String, usize> = HashMap::new();
        for c in other {
            *remaining.entry(normalize_whitespace(&c.text)).or_default() += 1;
        }
        side.iter()
            .filter(|c| match remaining.get_mut(&normalize_whitespace(&c.text)) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    false
                }
                _ => true,
            })
            .collect()
    }
    (unmatched(child, parent), unmatched(parent, child))
}

fn decode(blob: &[u8]) -> Option<String> {
    // A NUL byte marks a binary file.
    (!blob.contains(&0)).then(|| String::from_utf8_lossy(blob).into_owned())
}

/// Mines commit messages and added/deleted comments from `repo`.
pub fn ingest_git(repo: &Path, profiles: &ProfileSet, bots: &BotPolicy, project: &str) -> Result<IngestReport> {
    let commits = list_commits(repo)?;
    let mut report = IngestReport::default();
    if commits.is_empty() {
        return Ok(report);
    }
    let mut blobs = BlobReader::spawn(repo)?;
    // (path, normalized text) -> introduction times of live copies, oldest first.
    let mut introduced: HashMap<(String, String), VecDeque<i64>> = HashMap::new();

    for commit in &commits {
        if bots.is_bot(&commit.author) {
            report.bot_commits += 1;
            continue;
        }
        if commit.parents.len() > 1 {
            report.merge_commits += 1;
            continue;
        }
        let commit_container = Container::commit(&commit.hash, project);
        if !normalize_whitespace(&commit.message).is_empty() {
            report.artifacts.push(Artifact {
                id: format!("{project}:commit:{}", commit.hash),
                project: project.to_string(),
                source_kind: SourceKind::CommitMessage,
                text: commit.message.clone(),
                author: commit.author.clone(),
                is_bot: false,
                created_at: commit.author_time,
                container: commit_container,
                evidence: None,
                added_at: None,
            });
        }

        for change in changed_files(repo, commit)? {
            let Some(profile) = profiles.for_path(&change.path) else { continue };
            let mut load = |oid: &Option<String>| -> Result<Option<String>> {
                match oid {
                    None => Ok(Some(String::new())),
                    Some(oid) => Ok(blobs.read(oid)?.and_then(|b| decode(&b))),
                }
            };
            let (Some(old_text), Some(new_text)) = (load(&change.old_oid)?, load(&change.new_oid)?) else {
                log::warn!("{}: skipping unreadable {} at {}", project, change.path, commit.hash);
                report.skipped_files += 1;
                continue;
            };
            let old_comments = extract_comments(&old_text, profile);
            let new_comments = extract_comments(&new_text, profile);
            report.unterminated_comments += new_comments.iter().filter(|c| c.unterminated).count();
            let (added, deleted) = diff_comments(&old_comments, &new_comments);
            let location = Container::code_location(&change.path, &commit.hash, project);

            for (n, c) in added.into_iter().enumerate() {
                let norm = normalize_whitespace(&c.text);
                introduced
                    .entry((change.path.clone(), norm))
                    .or_default()
                    .push_back(commit.author_time);
                report.artifacts.push(Artifact {
                    id: format!("{project}:comment_added:{}:{}:{n}", commit.hash, change.path),
                    project: project.to_string(),
                    source_kind: SourceKind::CommentAdded,
                    text: c.text.clone(),
                    author: commit.author.clone(),
                    is_bot: false,
                    created_at: commit.author_time,
                    container: location.clone(),
                    evidence: Some(c.span),
                    added_at: None,
                });
            }
            for (n, c) in deleted.into_iter().enumerate() {
                let norm = normalize_whitespace(&c.text);
                let added_at = introduced
                    .get_mut(&(change.path.clone(), norm))
                    .and_then(VecDeque::pop_front);
                report.artifacts.push(Artifact {
                    id: format!("{project}:comment_deleted:{}:{}:{n}", commit.hash, change.path),
                    project: project.to_string(),
                    source_kind: SourceKind::CommentDeleted,
                    text: c.text.clone(),
                    author: commit.author.clone(),
                    is_bot: false,
                    created_at: commit.author_time,
                    container: location.clone(),
                    evidence: Some(c.span),
                    added_at,
                });
            }
        }
    }
    Ok(report)
}
