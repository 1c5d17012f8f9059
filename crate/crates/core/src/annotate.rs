//! Annotation service: serves sampled pairs to named annotators over HTTP,
//! persists labels in an append-only JSONL store, reports progress and
//! inter-annotator agreement, and merges finished annotations into a
//! labeled training set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{cohens_kappa, kappa_band};
use crate::jsonl::{append_line, read_jsonl, Record};
use crate::model::{RelationLabel, SatdPair};
use crate::pairgen::SimilarityBins;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationLabel {
    None,
    Duplication,
    Repayment,
    Skip,
}

impl AnnotationLabel {
    pub const ALLOWED: [&'static str; 4] = ["none", "duplication", "repayment", "skip"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(AnnotationLabel::None),
            "duplication" => Some(AnnotationLabel::Duplication),
            "repayment" => Some(AnnotationLabel::Repayment),
            "skip" => Some(AnnotationLabel::Skip),
            _ => None,
        }
    }

    pub fn relation(self) -> Option<RelationLabel> {
        match self {
            AnnotationLabel::None => Some(RelationLabel::None),
            AnnotationLabel::Duplication => Some(RelationLabel::Duplication),
            AnnotationLabel::Repayment => Some(RelationLabel::Repayment),
            AnnotationLabel::Skip => None,
        }
    }

    fn as_str(self) -> &'static str {
        Self::ALLOWED[self as usize]
    }
}

/// One line of the label store. `label: null` retracts an earlier label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub annotator: String,
    pub label: Option<AnnotationLabel>,
    pub labeled_at: String,
    #[serde(default)]
    pub session: String,
}

impl Record for AnnotationRecord {
    const TYPE: &'static str = "annotation";

    fn validate(&self) -> std::result::Result<(), String> {
        if self.pair_id.is_empty() || self.annotator.trim().is_empty() {
            return Err("annotation needs a pair_id and an annotator".into());
        }
        Ok(())
    }
}

/// Append-only label store. The effective label per (pair, annotator) is the
/// last line for that key.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    effective: HashMap<(String, String), (usize, AnnotationRecord)>,
    lines: usize,
}

impl LabelStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let existing: Vec<AnnotationRecord> = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut store = LabelStore {
            path,
            file,
            effective: HashMap::new(),
            lines: 0,
        };
        for r in existing {
            store.apply(r);
        }
        Ok(store)
    }

    fn apply(&mut self, r: AnnotationRecord) {
        let key = (r.pair_id.clone(), r.annotator.clone());
        let line = self.lines;
        self.lines += 1;
        if r.label.is_some() {
            // Keep the line of the first labeling so merge precedence is stable
            // across later edits by the same annotator.
            let first = self.effective.get(&key).map_or(line, |(l, _)| *l);
            self.effective.insert(key, (first, r));
        } else {
            self.effective.remove(&key);
        }
    }

    /// Durably appends `record` before updating the in-memory view.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<()> {
        record.validate().map_err(Error::invalid)?;
        append_line(&mut self.file, &record).map_err(|e| Error::io(&self.path, e))?;
        self.apply(record);
        Ok(())
    }

    pub fn get(&self, pair_id: &str, annotator: &str) -> Option<&AnnotationRecord> {
        self.effective
            .get(&(pair_id.to_string(), annotator.to_string()))
            .map(|(_, r)| r)
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Effective records in store order of their first labeling.
    pub fn records(&self) -> Vec<&AnnotationRecord> {
        let mut v: Vec<&(usize, AnnotationRecord)> = self.effective.values().collect();
        v.sort_by_key(|(l, _)| *l);
        v.into_iter().map(|(_, r)| r).collect()
    }

    pub fn annotators(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&String> = self.effective.keys().map(|(_, a)| a).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub labeled: usize,
    pub none: usize,
    pub duplication: usize,
    pub repayment: usize,
    pub skip: usize,
}

impl LabelCounts {
    fn add(&mut self, l: AnnotationLabel) {
        self.labeled += 1;
        match l {
            AnnotationLabel::None => self.none += 1,
            AnnotationLabel::Duplication => self.duplication += 1,
            AnnotationLabel::Repayment => self.repayment += 1,
            AnnotationLabel::Skip => self.skip += 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub overlap: usize,
    pub kappa: f64,
    pub band: &'static str,
}

pub struct AnnotateService {
    sample: Vec<SatdPair>,
    position: HashMap<String, usize>,
    /// Pairs every annotator must label. `None` means all pairs are shared.
    overlap: Option<HashSet<String>>,
    store: Mutex<LabelStore>,
    assets: Option<PathBuf>,
}

impl AnnotateService {
    pub fn new(sample: Vec<SatdPair>, store: LabelStore) -> Result<Self> {
        let mut position = HashMap::new();
        for (i, p) in sample.iter().enumerate() {
            if position.insert(p.pair_id.clone(), i).is_some() {
                return Err(Error::InvalidRecord {
                    index: i,
                    reason: format!("duplicate pair_id `{}` in sample", p.pair_id),
                });
            }
        }
        Ok(AnnotateService {
            sample,
            position,
            overlap: None,
            store: Mutex::new(store),
            assets: None,
        })
    }

    /// Marks a seeded random `fraction` of the sample as shared by every
    /// annotator; each remaining pair goes to whoever labels it first.
    pub fn with_overlap(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config("overlap fraction must lie in [0, 1]".into()));
        }
        let n = self.sample.len();
        let k = (n as f64 * fraction).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, n, k.min(n));
        self.overlap = Some(picked.into_iter().map(|i| self.sample[i].pair_id.clone()).collect());
        Ok(self)
    }

    pub fn with_assets(mut self, dir: impl Into<PathBuf>) -> Self {
        self.assets = Some(dir.into());
        self
    }

    pub fn open(sample_path: &Path, labels_path: &Path) -> Result<Self> {
        let sample: Vec<SatdPair> = read_jsonl(sample_path)?;
        Self::new(sample, LabelStore::open(labels_path)?)
    }

    pub fn total(&self) -> usize {
        self.sample.len()
    }

    fn served_to(&self, store: &LabelStore, pair: &SatdPair, annotator: &str) -> bool {
        if store.get(&pair.pair_id, annotator).is_some() {
            return false;
        }
        match &self.overlap {
            None => true,
            Some(shared) if shared.contains(&pair.pair_id) => true,
            Some(_) => !store
                .effective
                .keys()
                .any(|(p, a)| p == &pair.pair_id && a != annotator),
        }
    }

    /// Lowest-ordered pair this annotator still has to label.
    pub fn next_pair(&self, annotator: &str) -> Option<(usize, &SatdPair)> {
        let store = self.store.lock();
        self.sample
            .iter()
            .enumerate()
            .find(|(_, p)| self.served_to(&store, p, annotator))
    }

    pub fn counts(&self, annotator: &str) -> LabelCounts {
        let store = self.store.lock();
        Self::counts_in(&store, annotator)
    }

    fn counts_in(store: &LabelStore, annotator: &str) -> LabelCounts {
        let mut c = LabelCounts::default();
        for r in store.effective.values().map(|(_, r)| r).filter(|r| r.annotator == annotator) {
            if let Some(l) = r.label {
                c.add(l);
            }
        }
        c
    }

    pub fn submit(&self, pair_id: &str, annotator: &str, label: AnnotationLabel, session: &str) -> Result<LabelCounts> {
        if !self.position.contains_key(pair_id) {
            return Err(Error::invalid(format!("unknown pair_id `{pair_id}`")));
        }
        let mut store = self.store.lock();
        store.append(AnnotationRecord {
            pair_id: pair_id.to_string(),
            annotator: annotator.to_string(),
            label: Some(label),
            labeled_at: chrono::Utc::now().to_rfc3339(),
            session: session.to_string(),
        })?;
        Ok(Self::counts_in(&store, annotator))
    }

    /// Withdraws this annotator's label for a pair; returns the label removed.
    pub fn retract(&self, pair_id: &str, annotator: &str, session: &str) -> Result<Option<AnnotationLabel>> {
        if !self.position.contains_key(pair_id) {
            return Err(Error::invalid(format!("unknown pair_id `{pair_id}`")));
        }
        let mut store = self.store.lock();
        let previous = store.get(pair_id, annotator).and_then(|r| r.label);
        if previous.is_some() {
            store.append(AnnotationRecord {
                pair_id: pair_id.to_string(),
                annotator: annotator.to_string(),
                label: None,
                labeled_at: chrono::Utc::now().to_rfc3339(),
                session: session.to_string(),
            })?;
        }
        Ok(previous)
    }

    pub fn label_of(&self, pair_id: &str, annotator: &str) -> Option<AnnotationLabel> {
        self.store.lock().get(pair_id, annotator).and_then(|r| r.label)
    }

    /// Kappa over pairs both annotators labeled with a relation (skips excluded).
    pub fn agreement(&self, a: &str, b: &str) -> Result<Agreement> {
        let store = self.store.lock();
        let mut la = Vec::new();
        let mut lb = Vec::new();
        for p in &self.sample {
            let x = store.get(&p.pair_id, a).and_then(|r| r.label).and_then(AnnotationLabel::relation);
            let y = store.get(&p.pair_id, b).and_then(|r| r.label).and_then(AnnotationLabel::relation);
            if let (Some(x), Some(y)) = (x, y) {
                la.push(x);
                lb.push(y);
            }
        }
        if la.is_empty() {
            return Err(Error::Empty("overlap between the two annotators"));
        }
        let kappa = cohens_kappa(&la, &lb)?;
        Ok(Agreement {
            overlap: la.len(),
            kappa,
            band: kappa_band(kappa),
        })
    }

    pub fn progress(&self) -> serde_json::Value {
        let store = self.store.lock();
        let annotators: BTreeMap<String, LabelCounts> = store
            .annotators()
            .into_iter()
            .map(|a| {
                let c = Self::counts_in(&store, &a);
                (a, c)
            })
            .collect();
        json!({
            "total": self.sample.len(),
            "overlap_size": self.overlap.as_ref().map_or(self.sample.len(), HashSet::len),
            "store_lines": store.lines(),
            "annotators": annotators,
        })
    }
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn pair_view(svc: &AnnotateService, index: usize, pair: &SatdPair) -> serde_json::Value {
    json!({
        "status": "pair",
        "index": index,
        "total": svc.total(),
        "similarity_bin": SimilarityBins::bin_of(pair.similarity),
        "overlap": svc.overlap.as_ref().map_or(true, |s| s.contains(&pair.pair_id)),
        "origin_label": pair.origin.source_kind.display_label(),
        "target_label": pair.target.source_kind.display_label(),
        "pair": pair,
    })
}

type Shared = Arc<AnnotateService>;

fn required<'a>(q: &'a HashMap<String, String>, key: &str) -> std::result::Result<&'a str, Response> {
    match q.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        Some(v) => Ok(v),
        None => Err(error_response(StatusCode::BAD_REQUEST, format!("missing query parameter `{key}`"))),
    }
}

async fn next_handler(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Response {
    let annotator = match required(&q, "annotator") {
        Ok(a) => a,
        Err(r) => return r,
    };
    match svc.next_pair(annotator) {
        Some((i, p)) => Json(pair_view(&svc, i, p)).into_response(),
        None => Json(json!({
            "status": "exhausted",
            "total": svc.total(),
            "counts": svc.counts(annotator),
        }))
        .into_response(),
    }
}

#[derive(Deserialize)]
struct LabelBody {
    pair_id: Option<String>,
    annotator: Option<String>,
    label: Option<serde_json::Value>,
    #[serde(default)]
    session: Option<String>,
}

fn parse_body(body: &Bytes) -> std::result::Result<(String, String, Option<serde_json::Value>, String), Response> {
    let b: LabelBody = serde_json::from_slice(body)
        .map_err(|e| error_response(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))?;
    let pair_id = b.pair_id.filter(|s| !s.is_empty());
    let annotator = b.annotator.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    match (pair_id, annotator) {
        (Some(p), Some(a)) => Ok((p, a, b.label, b.session.unwrap_or_default())),
        _ => Err(error_response(StatusCode::BAD_REQUEST, "body needs `pair_id` and `annotator`")),
    }
}

async fn label_handler(State(svc): State<Shared>, body: Bytes) -> Response {
    let (pair_id, annotator, label, session) = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let label = match label.as_ref().and_then(|v| v.as_str()).and_then(AnnotationLabel::parse) {
        Some(l) => l,
        None => {
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({
                    "error": format!(
                        "invalid label {}; allowed values are {}",
                        label.map_or("(missing)".to_string(), |v| v.to_string()),
                        AnnotationLabel::ALLOWED.join(", ")
                    ),
                    "allowed": AnnotationLabel::ALLOWED,
                })),
            )
                .into_response()
        }
    };
    if !svc.position.contains_key(&pair_id) {
        return error_response(StatusCode::NOT_FOUND, format!("unknown pair_id `{pair_id}`"));
    }
    match svc.submit(&pair_id, &annotator, label, &session) {
        Ok(counts) => Json(json!({
            "ok": true,
            "pair_id": pair_id,
            "annotator": annotator,
            "label": label.as_str(),
            "counts": counts,
            "total": svc.total(),
        }))
        .into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn undo_handler(State(svc): State<Shared>, body: Bytes) -> Response {
    let (pair_id, annotator, _, session) = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    if !svc.position.contains_key(&pair_id) {
        return error_response(StatusCode::NOT_FOUND, format!("unknown pair_id `{pair_id}`"));
    }
    match svc.retract(&pair_id, &annotator, &session) {
        Ok(previous) => Json(json!({
            "ok": true,
            "pair_id": pair_id,
            "retracted": previous.map(AnnotationLabel::as_str),
            "counts": svc.counts(&annotator),
        }))
        .into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn stored_label_handler(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Response {
    let (pair_id, annotator) = match (required(&q, "pair_id"), required(&q, "annotator")) {
        (Ok(p), Ok(a)) => (p, a),
        (Err(r), _) | (_, Err(r)) => return r,
    };
    let Some(&index) = svc.position.get(pair_id) else {
        return error_response(StatusCode::NOT_FOUND, format!("unknown pair_id `{pair_id}`"));
    };
    let mut view = pair_view(&svc, index, &svc.sample[index]);
    view["label"] = json!(svc.label_of(pair_id, annotator).map(AnnotationLabel::as_str));
    Json(view).into_response()
}

async fn progress_handler(State(svc): State<Shared>) -> Response {
    Json(svc.progress()).into_response()
}

async fn agreement_handler(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Response {
    let (a, b) = match (required(&q, "a"), required(&q, "b")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(r), _) | (_, Err(r)) => return r,
    };
    match svc.agreement(a, b) {
        Ok(ag) => Json(ag).into_response(),
        Err(Error::Empty(_)) => error_response(
            StatusCode::CONFLICT,
            format!("annotators `{a}` and `{b}` have no labeled pairs in common"),
        ),
        Err(e) => error_response(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

const FALLBACK_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>SATD pair annotation</title></head>
<body>
<h1>SATD pair annotation</h1>
<p>No UI bundle is configured. The JSON API is available:</p>
<ul>
<li><code>GET /api/pairs/next?annotator=NAME</code></li>
<li><code>POST /api/labels</code> with <code>{"pair_id","annotator","label"}</code></li>
<li><code>POST /api/labels/undo</code> with <code>{"pair_id","annotator"}</code></li>
<li><code>GET /api/labels?pair_id=ID&amp;annotator=NAME</code></li>
<li><code>GET /api/progress</code></li>
<li><code>GET /api/agreement?a=NAME&amp;b=NAME</code></li>
</ul>
</body></html>
"#;

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn asset(svc: &AnnotateService, rel: &str) -> Response {
    let Some(dir) = &svc.assets else {
        return if rel == "index.html" {
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], FALLBACK_PAGE).into_response()
        } else {
            error_response(StatusCode::NOT_FOUND, "no asset directory configured")
        };
    };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return error_response(StatusCode::BAD_REQUEST, "invalid asset path");
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => error_response(StatusCode::NOT_FOUND, format!("asset `{}` not found", rel.display())),
    }
}

async fn index_handler(State(svc): State<Shared>) -> Response {
    asset(&svc, "index.html").await
}

async fn asset_handler(State(svc): State<Shared>, axum::extract::Path(rel): axum::extract::Path<String>) -> Response {
    asset(&svc, &rel).await
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/", get(index_handler))
        .route("/assets/*path", get(asset_handler))
        .route("/api/pairs/next", get(next_handler))
        .route("/api/labels", post(label_handler).get(stored_label_handler))
        .route("/api/labels/undo", post(undo_handler))
        .route("/api/progress", get(progress_handler))
        .route("/api/agreement", get(agreement_handler))
        .with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(service: Shared, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("annotation service listening on http://{}", addr);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MergeReport {
    pub labeled_pairs: usize,
    pub disagreements: usize,
    pub skipped_only: usize,
    pub unlabeled: usize,
}

/// One label per pair. By default the annotator who labeled the pair first
/// wins; annotators listed in `prefer` take precedence in the given order.
/// Skips never count as labels.
pub fn merge_labels(sample: &[SatdPair], store: &LabelStore, prefer: &[String]) -> (Vec<SatdPair>, MergeReport) {
    let mut by_pair: HashMap<&str, Vec<&AnnotationRecord>> = HashMap::new();
    for r in store.records() {
        by_pair.entry(r.pair_id.as_str()).or_default().push(r);
    }
    let rank = |a: &str| prefer.iter().position(|p| p == a).unwrap_or(prefer.len());
    let mut report = MergeReport::default();
    let mut out = Vec::new();
    for pair in sample {
        let Some(records) = by_pair.get(pair.pair_id.as_str()) else {
            report.unlabeled += 1;
            continue;
        };
        let mut usable: Vec<(usize, usize, &AnnotationRecord, RelationLabel)> = records
            .iter()
            .enumerate()
            .filter_map(|(order, r)| r.label.and_then(AnnotationLabel::relation).map(|l| (rank(&r.annotator), order, *r, l)))
            .collect();
        if usable.is_empty() {
            report.skipped_only += 1;
            continue;
        }
        usable.sort_by_key(|(rank, order, _, _)| (*rank, *order));
        let distinct: HashSet<RelationLabel> = usable.iter().map(|u| u.3).collect();
        if distinct.len() > 1 {
            report.disagreements += 1;
        }
        let (_, _, winner, label) = usable[0];
        let mut p = pair.clone().with_label(label);
        p.annotator = Some(winner.annotator.clone());
        out.push(p);
        report.labeled_pairs += 1;
    }
    (out, report)
}
