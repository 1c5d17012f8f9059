mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use satd_link::annotate::{AnnotationLabel, AnnotationRecord, LabelStore};
use satd_link::census::CensusTable;
use satd_link::eval::EvalReport;
use satd_link::jsonl::{read_jsonl, write_jsonl};
use satd_link::model::{Link, RelationLabel, SatdPair, SourceKind};
use serde_json::Value;

const TINY_CONFIG: &str = r#"
[architecture]
embedding_dim = 16
windows = [1, 2, 3]
filters_per_window = 8

[tokenizer]
max_sequence_length = 32

[train]
max_epochs = 4
learning_rate = 0.01
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satd-link")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = cli(args);
    assert!(
        out.status.success(),
        "satd-link {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout of {args:?} is not JSON: {e}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn mining_pipeline_from_repository_to_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("repo");
    fixture_repo(&repo);
    let issues = tmp.path().join("issues.jsonl");
    std::fs::write(
        &issues,
        r#"{"native_id": 1, "author": "kim", "created_at": 1614500000, "summary": "Parser workaround is a hack", "comments": [{"author": "renovate-bot", "created_at": 1614500100, "body": "TODO automated note"}]}"#,
    )
    .unwrap();
    let corpus = tmp.path().join("corpus");
    let v = ok(&["ingest", "--repo", p(&repo), "--issues", p(&issues), "--project", "fixture", "--out", p(&corpus)]);
    assert_eq!(v["artifacts"], 6);
    assert_eq!(v["bot_sections"], 1);
    assert!(corpus.join("artifacts.jsonl").exists());
    assert!(corpus.join("ingest_report.json").exists());

    let links = tmp.path().join("links.jsonl");
    let stats = ok(&["link", "--corpus", p(&corpus), "--out", p(&links)]);
    assert_eq!(stats["total_references"], 1);
    assert_eq!(stats["resolved"], 1);
    assert_eq!(stats["implicit_links"], 2);
    let link_records: Vec<Link> = read_jsonl(&links).unwrap();
    assert_eq!(link_records.len(), 3);

    let satd = tmp.path().join("satd.jsonl");
    let v = ok(&["detect", "--corpus", p(&corpus), "--out", p(&satd)]);
    assert_eq!(v["flagged"], 5, "two messages, two comments and the issue summary");

    let pairs = tmp.path().join("pairs.jsonl");
    let v = ok(&["pairs", "--corpus", p(&corpus), "--links", p(&links), "--satd", p(&satd), "--out", p(&pairs)]);
    assert_eq!(v["pairs"], 3);
    let generated: Vec<SatdPair> = read_jsonl(&pairs).unwrap();
    let kinds: Vec<(SourceKind, SourceKind)> = generated
        .iter()
        .map(|x| (x.origin.source_kind, x.target.source_kind))
        .collect();
    assert!(kinds.contains(&(SourceKind::IssueSummary, SourceKind::CommitMessage)));
    assert!(kinds.contains(&(SourceKind::CommentAdded, SourceKind::CommitMessage)));
    assert!(kinds.contains(&(SourceKind::CommentDeleted, SourceKind::CommitMessage)));

    let sample = tmp.path().join("sample.jsonl");
    let v = ok(&["sample", "--pairs", p(&pairs), "-n", "10", "--seed", "42", "--out", p(&sample)]);
    assert_eq!(v["sampled"], 3);
    assert!(v["warning"].is_string());

    let again = tmp.path().join("corpus2");
    ok(&["ingest", "--repo", p(&repo), "--issues", p(&issues), "--project", "fixture", "--out", p(&again)]);
    assert_eq!(
        std::fs::read(corpus.join("artifacts.jsonl")).unwrap(),
        std::fs::read(again.join("artifacts.jsonl")).unwrap()
    );
}

#[test]
fn modeling_pipeline_train_eval_curve_census() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("train.toml");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    let labeled = tmp.path().join("labeled.jsonl");
    assert_eq!(ok(&["synth", "--pairs", "60", "--seed", "2", "--out", p(&labeled)])["pairs"], 60);

    let model = tmp.path().join("model.bin");
    let history = ok(&["train", "--labels", p(&labeled), "--config", p(&config), "--seed", "1", "--out", p(&model)]);
    assert_eq!(history["epochs"].as_array().unwrap().len(), 4);
    let model2 = tmp.path().join("model2.bin");
    ok(&["train", "--labels", p(&labeled), "--config", p(&config), "--seed", "1", "--out", p(&model2)]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&model2).unwrap());

    let census = tmp.path().join("census.json");
    let md = tmp.path().join("census.md");
    let v = ok(&[
        "census", "--pairs", p(&labeled), "--model", p(&model), "--out", p(&census), "--markdown", p(&md),
        "--highlight-threshold", "0",
    ]);
    let table: CensusTable = serde_json::from_str(&std::fs::read_to_string(&census).unwrap()).unwrap();
    assert_eq!(v["duplication"], table.total_duplication);
    assert_eq!(table.total_duplication + table.total_repayment + table.none_pairs, 60);
    assert!(std::fs::read_to_string(&md).unwrap().contains("| Total |"));

    let report_path = tmp.path().join("report.json");
    ok(&["eval", "--labels", p(&labeled), "--config", p(&config), "--k", "2", "--seeds", "1,2", "--out", p(&report_path)]);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!((report.k, report.folds.len(), report.dataset_size), (2, 4, 60));
    assert_eq!(report.config.unwrap().architecture.filters_per_window, 8);

    let curve = tmp.path().join("curve.csv");
    let v = ok(&[
        "curve", "--labels", p(&labeled), "--step", "5", "--sizes", "5,10", "--seeds", "1,2", "--config", p(&config),
        "--out", p(&curve),
    ]);
    assert_eq!(v["rows"], 4);
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n_train,f1_duplication,f1_repayment,seed");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn annotation_merge_import_and_detector() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = tmp.path().join("sample.jsonl");
    let pairs = five_pair_sample();
    write_jsonl(&pairs, &sample).unwrap();
    let labels = tmp.path().join("labels.jsonl");
    {
        let mut store = LabelStore::open(&labels).unwrap();
        for (who, i, l) in [
            ("a", 0, AnnotationLabel::Duplication),
            ("b", 0, AnnotationLabel::None),
            ("b", 1, AnnotationLabel::Repayment),
            ("a", 2, AnnotationLabel::Skip),
        ] {
            store
                .append(AnnotationRecord {
                    pair_id: pairs[i].pair_id.clone(),
                    annotator: who.into(),
                    label: Some(l),
                    labeled_at: "2021-03-01T00:00:00Z".into(),
                    session: String::new(),
                })
                .unwrap();
        }
    }
    let merged = tmp.path().join("merged.jsonl");
    let v = ok(&["merge-labels", "--sample", p(&sample), "--labels", p(&labels), "--out", p(&merged)]);
    assert_eq!((v["labeled_pairs"].as_u64(), v["disagreements"].as_u64()), (Some(2), Some(1)));
    let out: Vec<SatdPair> = read_jsonl(&merged).unwrap();
    assert_eq!(out[0].label, Some(RelationLabel::Duplication));
    ok(&["merge-labels", "--sample", p(&sample), "--labels", p(&labels), "--prefer", "b", "--out", p(&merged)]);
    let out: Vec<SatdPair> = read_jsonl(&merged).unwrap();
    assert_eq!(out[0].label, Some(RelationLabel::None));

    let csv = tmp.path().join("pairs.csv");
    std::fs::write(
        &csv,
        "id,a,b,rel\n1,TODO remove hack,hack removed,2\n2,dupmark one,dupmark two,1\n3,,empty,0\n",
    )
    .unwrap();
    let mapping = tmp.path().join("mapping.toml");
    std::fs::write(
        &mapping,
        "origin_text = \"a\"\ntarget_text = \"b\"\nlabel = \"rel\"\npair_id = \"id\"\n[label_values]\n\"0\" = \"none\"\n\"1\" = \"duplication\"\n\"2\" = \"repayment\"\n",
    )
    .unwrap();
    let imported = tmp.path().join("imported.jsonl");
    let v = ok(&["import", "--csv", p(&csv), "--mapping", p(&mapping), "--out", p(&imported)]);
    assert_eq!((v["imported"].as_u64(), v["skipped"].as_u64()), (Some(2), Some(1)));
    let back: Vec<SatdPair> = read_jsonl(&imported).unwrap();
    assert_eq!(back[0].label, Some(RelationLabel::Repayment));

    let examples = tmp.path().join("detector.csv");
    let mut rows = String::from("text,satd\n");
    for i in 0..12 {
        rows.push_str(if i % 2 == 0 { "TODO remove this hack,1\n" } else { "add unit tests for parser,0\n" });
    }
    std::fs::write(&examples, rows).unwrap();
    let config = tmp.path().join("det.toml");
    std::fs::write(&config, format!("{TINY_CONFIG}validation_fraction = 0.0\nmax_epochs = 30\n").replace("max_epochs = 4\n", "")).unwrap();
    let detector = tmp.path().join("detector.bin");
    ok(&["train-detector", "--examples", p(&examples), "--config", p(&config), "--out", p(&detector)]);

    let repo = tmp.path().join("repo");
    fixture_repo(&repo);
    let corpus = tmp.path().join("corpus");
    ok(&["ingest", "--repo", p(&repo), "--out", p(&corpus)]);
    let satd = tmp.path().join("satd.jsonl");
    let v = ok(&["detect", "--corpus", p(&corpus), "--model", p(&detector), "--threshold", "0.0", "--out", p(&satd)]);
    assert_eq!(v["flagged"], v["artifacts"], "threshold 0 flags everything");
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.jsonl");
    for args in [
        vec!["annotate-serve", "--sample", p(&missing), "--labels", p(&missing), "--port", "0"],
        vec!["link", "--corpus", p(tmp.path()), "--out", p(&missing)],
        vec!["ingest", "--out", p(tmp.path())],
        vec!["ingest", "--repo", p(tmp.path()), "--out", p(tmp.path())],
    ] {
        let out = cli(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nlearning_rate = -1.0\n").unwrap();
    let labeled = tmp.path().join("l.jsonl");
    ok(&["synth", "--pairs", "10", "--out", p(&labeled)]);
    let out = cli(&["train", "--labels", p(&labeled), "--config", p(&bad), "--out", p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
