#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use satd_link::model::{Artifact, Container, SatdPair, SourceKind};

pub const FIXTURE_FILE: &str = "src/Main.java";

/// Contents of `src/Main.java` after each of the three fixture commits.
pub const FIXTURE_VERSIONS: [&str; 3] = [
    "class Main {\n    // TODO remove this workaround once the parser is stable\n    int limit = 1;\n    String s = \"// not a comment\";\n}\n",
    "class Main {\n    // TODO remove this workaround once the parser is stable\n    int limit = 2;\n    String s = \"// not a comment\";\n}\n",
    "class Main {\n    int limit = 2;\n    String s = \"// not a comment\";\n}\n",
];

pub const FIXTURE_MESSAGES: [&str; 3] = [
    "Add main class with parser workaround",
    "Raise the limit",
    "Remove the parser workaround, fixes #1",
];

/// Commit times, one day apart starting 2021-03-01T12:00:00Z.
pub const FIXTURE_TIMES: [i64; 3] = [1_614_600_000, 1_614_686_400, 1_614_772_800];

pub fn git(repo: &Path, args: &[&str], time: Option<i64>) -> String {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(repo)
        .args(["-c", "commit.gpgsign=false", "-c", "init.defaultBranch=main"])
        .args(args)
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_AUTHOR_NAME", "Dana Dev")
        .env("GIT_AUTHOR_EMAIL", "dana@example.org")
        .env("GIT_COMMITTER_NAME", "Dana Dev")
        .env("GIT_COMMITTER_EMAIL", "dana@example.org");
    if let Some(t) = time {
        let date = format!("{t} +0000");
        cmd.env("GIT_AUTHOR_DATE", &date).env("GIT_COMMITTER_DATE", &date);
    }
    let out = cmd.output().expect("git runs");
    assert!(
        out.status.success(),
        "git {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Builds the three-commit fixture repository (add a TODO, change an
/// unrelated line, delete the TODO) and returns the commit hashes in order.
pub fn fixture_repo(dir: &Path) -> Vec<String> {
    std::fs::create_dir_all(dir.join("src")).unwrap();
    git(dir, &["init", "-q"], None);
    let mut hashes = Vec::new();
    for i in 0..3 {
        std::fs::write(dir.join(FIXTURE_FILE), FIXTURE_VERSIONS[i]).unwrap();
        git(dir, &["add", "-A"], None);
        git(dir, &["commit", "-q", "-m", FIXTURE_MESSAGES[i]], Some(FIXTURE_TIMES[i]));
        hashes.push(git(dir, &["rev-parse", "HEAD"], None).trim().to_string());
    }
    hashes
}

pub fn artifact(id: &str, kind: SourceKind, text: &str, created_at: i64, container: Container) -> Artifact {
    Artifact {
        id: id.into(),
        project: container.project.clone(),
        source_kind: kind,
        text: text.into(),
        author: "someone".into(),
        is_bot: false,
        created_at,
        container,
        evidence: None,
        added_at: None,
    }
}

/// Five unlabeled pairs used by the annotation service tests.
pub fn five_pair_sample() -> Vec<SatdPair> {
    use satd_link::textnn::synthetic::{planted_pairs, SyntheticConfig};
    planted_pairs(&SyntheticConfig {
        pairs: 5,
        seed: 3,
        ..SyntheticConfig::default()
    })
    .into_iter()
    .map(|mut p| {
        p.label = None;
        p
    })
    .collect()
}

pub const HASH_A: &str = "0ffd5fa3c41b9e2d7a6f0e8b1c2d3e4f5a6b7c8d";
pub const HASH_B1: &str = "0ffd5fb1000000000000000000000000000000aa";
pub const HASH_B2: &str = "0ffd5fb2000000000000000000000000000000bb";

/// A corpus with one link of each explicit kind: a pull referencing an issue
/// by `#N`, a commit referencing the pull by `#N`, and an issue comment
/// naming the commit by hash prefix. It also holds one unresolved `#N` and one
/// prefix shared by two commits, plus a comment added in the referenced commit.
pub fn link_fixture() -> (Vec<Artifact>, Vec<satd_link::model::Link>) {
    use satd_link::model::{Link, ReferenceKind};
    let p = "proj";
    let issue = Container::issue("12769", p);
    let pull = Container::pull("12800", p);
    let commit = Container::commit(HASH_A, p);
    let location = Container::code_location("src/Scan.java", HASH_A, p);
    let arts = vec![
        artifact("proj:issue:12769:summary", SourceKind::IssueSummary, "Scanner leaks file handles", 100, issue.clone()),
        artifact(
            "proj:issue:12769:comment:0",
            SourceKind::IssueComment,
            "TODO this was fixed in 0ffd5fa, see also #99999",
            400,
            issue.clone(),
        ),
        artifact("proj:pull:12800:summary", SourceKind::PullSummary, "Close scanner streams", 200, pull.clone()),
        artifact(
            "proj:pull:12800:description",
            SourceKind::PullDescription,
            "Resolves #12769 by removing the temporary hack",
            200,
            pull.clone(),
        ),
        artifact(
            "proj:pull:12800:comment:0",
            SourceKind::PullComment,
            "Is this related to 0ffd5fb?",
            250,
            pull.clone(),
        ),
        artifact(
            &format!("proj:commit:{HASH_A}"),
            SourceKind::CommitMessage,
            "Merge pull request #12800 from kim/streams",
            300,
            commit.clone(),
        ),
        artifact(&format!("proj:commit:{HASH_B1}"), SourceKind::CommitMessage, "Tidy imports", 50, Container::commit(HASH_B1, p)),
        artifact(&format!("proj:commit:{HASH_B2}"), SourceKind::CommitMessage, "Update readme", 60, Container::commit(HASH_B2, p)),
        artifact(
            &format!("proj:comment_added:{HASH_A}:src/Scan.java:0"),
            SourceKind::CommentAdded,
            "FIXME close the stream in a finally block",
            300,
            location.clone(),
        ),
    ];
    let link = |from: &Container, to: &Container, kind, evidence: &str, artifact: &str| Link {
        from: from.clone(),
        to: to.clone(),
        reference_kind: kind,
        evidence_text: evidence.into(),
        evidence_artifact_id: artifact.into(),
    };
    let expected = vec![
        link(&pull, &issue, ReferenceKind::IssueId, "#12769", "proj:pull:12800:description"),
        link(&commit, &pull, ReferenceKind::PullId, "#12800", &format!("proj:commit:{HASH_A}")),
        link(&issue, &commit, ReferenceKind::CommitHash, "0ffd5fa", "proj:issue:12769:comment:0"),
        link(
            &location,
            &commit,
            ReferenceKind::ContainingCommit,
            HASH_A,
            &format!("proj:comment_added:{HASH_A}:src/Scan.java:0"),
        ),
    ];
    (arts, expected)
}
