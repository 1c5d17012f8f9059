//! Parameters, forward pass and hand-derived backward pass of the text CNN.
//!
//! A tower embeds a token sequence, runs one bank of 1-D convolutions per
//! window size, applies ReLU and max-over-time pooling, and concatenates the
//! pooled blocks. A classifier concatenates the features of its towers (one
//! for the SATD scorer, two with shared weights for the pair classifier),
//! applies dropout while training, and maps the result to class logits.
//!
//! Everything is generic over the float type. Stored models and inference use
//! `f64`; training runs in `f32`.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::PAD;
use crate::error::{Error, Result};

/// Float types the network can run in.
pub trait Real: num_traits::Float + ndarray::LinalgScalar + AddAssign + SubAssign + MulAssign + Send + Sync + Debug {
    fn of(x: f64) -> Self;
    fn wide(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn wide(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn wide(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    /// Number of towers sharing weights: 1 for single texts, 2 for pairs.
    pub inputs: usize,
    pub embedding_dim: usize,
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::pair_classifier()
    }
}

impl Architecture {
    /// 300-dimensional embeddings, windows 1 to 5 with 200 filters each, two
    /// towers, three relation classes.
    pub fn pair_classifier() -> Self {
        Architecture {
            inputs: 2,
            embedding_dim: 300,
            windows: vec![1, 2, 3, 4, 5],
            filters_per_window: 200,
            classes: 3,
            dropout: 0.5,
        }
    }

    /// Same tower as the pair classifier with a single input and a 2-class head.
    pub fn text_scorer() -> Self {
        Architecture {
            inputs: 1,
            classes: 2,
            ..Self::pair_classifier()
        }
    }

    pub fn tower_width(&self) -> usize {
        self.windows.len() * self.filters_per_window
    }

    pub fn feature_width(&self) -> usize {
        self.inputs * self.tower_width()
    }

    pub fn conv_rows(&self) -> usize {
        self.filters_per_window * self.windows.iter().sum::<usize>()
    }

    /// First row of window `wi` in the stacked convolution matrix.
    pub fn row_offset(&self, wi: usize) -> usize {
        self.filters_per_window * self.windows[..wi].iter().sum::<usize>()
    }

    pub fn widest_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.inputs == 0 || self.embedding_dim == 0 || self.filters_per_window == 0 {
            return bad("inputs, embedding_dim and filters_per_window must be positive");
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return bad("windows must be a non-empty list of positive sizes");
        }
        if self.classes < 2 {
            return bad("at least two classes are required");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// All trainable tensors. The same type holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F = f64> {
    /// vocabulary x embedding_dim; row 0 (padding) stays zero.
    pub embedding: Array2<F>,
    /// Every filter slice stacked: row `row_offset(wi) + j * filters + f` is
    /// offset `j` of filter `f` in window `wi`. Shape conv_rows x embedding_dim.
    pub conv_weight: Array2<F>,
    /// windows x filters, window-major.
    pub conv_bias: Array1<F>,
    /// feature_width x classes.
    pub out_weight: Array2<F>,
    pub out_bias: Array1<F>,
}

impl Params {
    pub fn tensor_names() -> [&'static str; 5] {
        ["embedding", "conv_weight", "conv_bias", "out_weight", "out_bias"]
    }

    pub fn zeros(arch: &Architecture, vocab_size: usize) -> Self {
        Self::zeroed(arch, vocab_size)
    }

    /// Embeddings uniform in [-0.25, 0.25] (padding row zero); convolution and
    /// output layers uniform in ±1/sqrt(fan_in).
    pub fn init(arch: &Architecture, vocab_size: usize, rng: &mut impl Rng) -> Self {
        let mut p = Params::zeros(arch, vocab_size);
        for (r, mut row) in p.embedding.rows_mut().into_iter().enumerate() {
            if r != PAD {
                row.mapv_inplace(|_| rng.gen_range(-0.25..=0.25));
            }
        }
        for (wi, &w) in arch.windows.iter().enumerate() {
            let bound = 1.0 / ((w * arch.embedding_dim) as f64).sqrt();
            let rows = arch.row_offset(wi)..arch.row_offset(wi) + w * arch.filters_per_window;
            for r in rows {
                p.conv_weight.row_mut(r).mapv_inplace(|_| rng.gen_range(-bound..bound));
            }
            let f = arch.filters_per_window;
            for b in p.conv_bias.slice_mut(ndarray::s![wi * f..(wi + 1) * f]) {
                *b = rng.gen_range(-bound..bound);
            }
        }
        let bound = 1.0 / (arch.feature_width() as f64).sqrt();
        p.out_weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
        p.out_bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
        p
    }
}

impl<F: Real> Params<F> {
    pub(crate) fn zeroed(arch: &Architecture, vocab_size: usize) -> Self {
        Params {
            embedding: Array2::zeros((vocab_size, arch.embedding_dim)),
            conv_weight: Array2::zeros((arch.conv_rows(), arch.embedding_dim)),
            conv_bias: Array1::zeros(arch.tower_width()),
            out_weight: Array2::zeros((arch.feature_width(), arch.classes)),
            out_bias: Array1::zeros(arch.classes),
        }
    }

    /// The same parameters in another float type.
    pub fn cast<G: Real>(&self) -> Params<G> {
        let c = |x: &F| G::of(x.wide());
        Params {
            embedding: self.embedding.map(c),
            conv_weight: self.conv_weight.map(c),
            conv_bias: self.conv_bias.map(c),
            out_weight: self.out_weight.map(c),
            out_bias: self.out_bias.map(c),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn tensors(&self) -> [&[F]; 5] {
        [
            self.embedding.as_slice().expect("standard layout"),
            self.conv_weight.as_slice().expect("standard layout"),
            self.conv_bias.as_slice().expect("standard layout"),
            self.out_weight.as_slice().expect("standard layout"),
            self.out_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [F]; 5] {
        [
            self.embedding.as_slice_mut().expect("standard layout"),
            self.conv_weight.as_slice_mut().expect("standard layout"),
            self.conv_bias.as_slice_mut().expect("standard layout"),
            self.out_weight.as_slice_mut().expect("standard layout"),
            self.out_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_indices(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.vocab_size()) {
            Some(i) => Err(Error::invalid(format!(
                "token index {i} out of range for a vocabulary of {}",
                self.vocab_size()
            ))),
            None => Ok(()),
        }
    }
}

/// Each distinct token's embedding multiplied by every filter slice, computed
/// once per batch with a single matrix product.
pub(crate) struct Projections<F> {
    /// Table row per token index, `NO_SLOT` for tokens absent from the batch.
    slot: Vec<usize>,
    table: Array2<F>,
}

const NO_SLOT: usize = usize::MAX;

impl<F: Real> Projections<F> {
    pub(crate) fn compute<'a>(params: &Params<F>, sequences: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut slot = vec![NO_SLOT; params.vocab_size()];
        let mut order = Vec::new();
        for seq in sequences {
            for &t in seq {
                if t != PAD && t < slot.len() && slot[t] == NO_SLOT {
                    slot[t] = order.len();
                    order.push(t);
                }
            }
        }
        let dim = params.embedding.ncols();
        let mut gathered = Array2::zeros((order.len(), dim));
        for (i, &t) in order.iter().enumerate() {
            gathered.row_mut(i).assign(&params.embedding.row(t));
        }
        let table = gathered.dot(&params.conv_weight.t());
        Projections { slot, table }
    }

    fn row(&self, token: usize) -> Option<&[F]> {
        match self.slot.get(token) {
            Some(&s) if s != NO_SLOT => Some(self.table.row(s).to_slice().expect("standard layout")),
            _ => None,
        }
    }
}

/// Pooled features of one tower plus the argmax positions needed for backprop.
#[derive(Debug, Clone)]
pub struct TowerTrace<F = f64> {
    pub features: Vec<F>,
    pub argmax: Vec<usize>,
}

pub(crate) fn tower<F: Real>(
    arch: &Architecture,
    params: &Params<F>,
    proj: &Projections<F>,
    indices: &[usize],
) -> TowerTrace<F> {
    let f_count = arch.filters_per_window;
    let width = arch.tower_width();
    let mut features = vec![F::zero(); width];
    let mut argmax = vec![0usize; width];
    let last_real = indices.iter().rposition(|&t| t != PAD);
    let mut pre = vec![F::zero(); f_count];
    let mut best = vec![F::zero(); f_count];

    for (wi, &w) in arch.windows.iter().enumerate() {
        let off = arch.row_offset(wi);
        let bias = &params.conv_bias.as_slice().expect("standard layout")[wi * f_count..(wi + 1) * f_count];
        let positions = indices.len() + 1 - w;
        // Windows past the last real token are all padding and equal the bias;
        // only the first of them can be an argmax under lowest-index ties.
        let limit = last_real.map_or(0, |r| (r + 1).min(positions - 1));
        best.fill(F::neg_infinity());
        let arg = &mut argmax[wi * f_count..(wi + 1) * f_count];
        for p in 0..=limit {
            pre.copy_from_slice(bias);
            for j in 0..w {
                if let Some(row) = proj.row(indices[p + j]) {
                    let seg = &row[off + j * f_count..off + (j + 1) * f_count];
                    for (a, &b) in pre.iter_mut().zip(seg) {
                        *a += b;
                    }
                }
            }
            for f in 0..f_count {
                if pre[f] > best[f] {
                    best[f] = pre[f];
                    arg[f] = p;
                }
            }
        }
        for f in 0..f_count {
            features[wi * f_count + f] = best[f].max(F::zero());
        }
    }
    TowerTrace { features, argmax }
}

/// One tower's share of the backward pass: its input, forward trace and the
/// gradient arriving at its pooled features.
struct TowerGrad<'a, F> {
    indices: &'a [usize],
    trace: &'a TowerTrace<F>,
    upstream: &'a [F],
}

fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Routes pooled-feature gradients through ReLU and max-pool to the filters
/// and embeddings. Iterates filter rows in the outer loop and towers in the
/// inner one so that each filter row and its gradient stay in cache.
/// Towers whose max lands on the same token share one update per row.
fn towers_backward<F: Real>(arch: &Architecture, params: &Params<F>, towers: &[TowerGrad<'_, F>], grads: &mut Params<F>) {
    let f_count = arch.filters_per_window;
    let dim = arch.embedding_dim;
    let emb = params.embedding.as_slice().expect("standard layout");
    let weight = params.conv_weight.as_slice().expect("standard layout");
    let Params {
        embedding: d_emb,
        conv_weight: d_weight,
        conv_bias: d_bias,
        ..
    } = grads;
    let d_emb = d_emb.as_slice_mut().expect("standard layout");
    let d_weight = d_weight.as_slice_mut().expect("standard layout");
    let mut live: Vec<(usize, F)> = Vec::with_capacity(towers.len());
    let mut hits: Vec<(usize, F)> = Vec::with_capacity(towers.len());
    for (wi, &w) in arch.windows.iter().enumerate() {
        let off = arch.row_offset(wi);
        for f in 0..f_count {
            let k = wi * f_count + f;
            live.clear();
            for (ti, t) in towers.iter().enumerate() {
                if t.upstream[k] != F::zero() && t.trace.features[k] > F::zero() {
                    live.push((ti, t.upstream[k]));
                    d_bias[k] += t.upstream[k];
                }
            }
            if live.is_empty() {
                continue;
            }
            for j in 0..w {
                hits.clear();
                for &(ti, g) in &live {
                    let t = &towers[ti];
                    let tok = t.indices[t.trace.argmax[k] + j];
                    if tok != PAD {
                        hits.push((tok, g));
                    }
                }
                hits.sort_unstable_by_key(|h| h.0);
                hits.dedup_by(|next, kept| {
                    let same = next.0 == kept.0;
                    if same {
                        kept.1 += next.1;
                    }
                    same
                });
                let r = off + j * f_count + f;
                let w_row = &weight[r * dim..(r + 1) * dim];
                let dw_row = &mut d_weight[r * dim..(r + 1) * dim];
                for &(tok, g) in &hits {
                    axpy(dw_row, g, &emb[tok * dim..(tok + 1) * dim]);
                    axpy(&mut d_emb[tok * dim..(tok + 1) * dim], g, w_row);
                }
            }
        }
    }
}

/// One labeled training example: one index sequence per tower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub inputs: Vec<Vec<usize>>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<F = f64> {
    pub towers: Vec<TowerTrace<F>>,
    /// Inverted-dropout multipliers, present only in training mode.
    pub mask: Option<Vec<F>>,
    /// Concatenated tower features after dropout.
    pub hidden: Vec<F>,
    pub logits: Vec<F>,
}

impl<F: Real> ForwardTrace<F> {
    fn wide_logits(&self) -> Vec<f64> {
        self.logits.iter().map(|l| l.wide()).collect()
    }
}

fn forward_with<F: Real>(
    arch: &Architecture,
    params: &Params<F>,
    proj: &Projections<F>,
    inputs: &[Vec<usize>],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> ForwardTrace<F> {
    let towers: Vec<TowerTrace<F>> = inputs.iter().map(|seq| tower(arch, params, proj, seq)).collect();
    let mut hidden: Vec<F> = towers.iter().flat_map(|t| t.features.iter().copied()).collect();
    let mask = match dropout_rng {
        Some(rng) if arch.dropout > 0.0 => {
            let keep = F::of(1.0 / (1.0 - arch.dropout));
            let m: Vec<F> = (0..hidden.len())
                .map(|_| if rng.gen::<f64>() < arch.dropout { F::zero() } else { keep })
                .collect();
            for (h, &k) in hidden.iter_mut().zip(&m) {
                *h *= k;
            }
            Some(m)
        }
        _ => None,
    };
    let logits = affine(&params.out_weight, &params.out_bias, &hidden);
    ForwardTrace {
        towers,
        mask,
        hidden,
        logits,
    }
}

pub(crate) fn affine<F: Real>(weight: &Array2<F>, bias: &Array1<F>, x: &[F]) -> Vec<F> {
    let mut out = bias.to_vec();
    for (i, &h) in x.iter().enumerate() {
        if h == F::zero() {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(weight.row(i)) {
            *o += h * w;
        }
    }
    out
}

fn check_inputs<F: Real>(arch: &Architecture, params: &Params<F>, inputs: &[Vec<usize>]) -> Result<()> {
    if inputs.len() != arch.inputs {
        return Err(Error::invalid(format!("expected {} input sequences, got {}", arch.inputs, inputs.len())));
    }
    for seq in inputs {
        if seq.len() < arch.widest_window() {
            return Err(Error::invalid(format!(
                "sequence of length {} is shorter than the widest window {}",
                seq.len(),
                arch.widest_window()
            )));
        }
        params.check_indices(seq)?;
    }
    Ok(())
}

/// Pooled features of a single tower (width `tower_width`).
pub fn tower_forward<F: Real>(indices: &[usize], arch: &Architecture, params: &Params<F>) -> Result<Vec<F>> {
    if indices.len() < arch.widest_window() {
        return Err(Error::invalid("sequence shorter than the widest window"));
    }
    params.check_indices(indices)?;
    let proj = Projections::compute(params, [indices]);
    Ok(tower(arch, params, &proj, indices).features)
}

/// Full forward pass for one example. `training` enables dropout with a mask
/// drawn from `seed`.
pub fn forward<F: Real>(
    inputs: &[Vec<usize>],
    arch: &Architecture,
    params: &Params<F>,
    training: bool,
    seed: u64,
) -> Result<ForwardTrace<F>> {
    check_inputs(arch, params, inputs)?;
    let proj = Projections::compute(params, inputs.iter().map(Vec::as_slice));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(forward_with(arch, params, &proj, inputs, training.then_some(&mut rng)))
}

/// Siamese forward pass on a pair of sequences.
pub fn pair_forward<F: Real>(
    indices_a: &[usize],
    indices_b: &[usize],
    arch: &Architecture,
    params: &Params<F>,
    training: bool,
    seed: u64,
) -> Result<ForwardTrace<F>> {
    forward(&[indices_a.to_vec(), indices_b.to_vec()], arch, params, training, seed)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln softmax(logits)[label]`, computed through log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `batch` and the gradient of every tensor, in
/// training mode (dropout masks drawn in batch order from `seed`).
pub fn loss_and_gradients<F: Real>(
    batch: &[Example],
    arch: &Architecture,
    params: &Params<F>,
    seed: u64,
) -> Result<(f64, Params<F>)> {
    batch_pass(batch, arch, params, Some(seed)).map(|b| (b.loss, b.grads))
}

pub(crate) struct BatchPass<F> {
    pub loss: f64,
    pub grads: Params<F>,
    /// Examples whose training-mode logits already pick the gold class.
    pub correct: usize,
}

pub(crate) fn batch_pass<F: Real>(
    batch: &[Example],
    arch: &Architecture,
    params: &Params<F>,
    dropout_seed: Option<u64>,
) -> Result<BatchPass<F>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    for ex in batch {
        check_inputs(arch, params, &ex.inputs)?;
        if ex.label >= arch.classes {
            return Err(Error::invalid(format!("label {} outside 0..{}", ex.label, arch.classes)));
        }
    }
    let proj = Projections::compute(params, batch.iter().flat_map(|e| e.inputs.iter().map(Vec::as_slice)));
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let mut grads = Params::zeroed(arch, params.vocab_size());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let tw = arch.tower_width();
    let mut traces = Vec::with_capacity(batch.len());
    let mut upstream = Vec::with_capacity(batch.len());

    for ex in batch {
        let trace = forward_with(arch, params, &proj, &ex.inputs, rng.as_mut());
        let logits = trace.wide_logits();
        loss += cross_entropy(&logits, ex.label);
        correct += usize::from(argmax(&logits) == ex.label);
        let mut probs = softmax(&logits);
        probs[ex.label] -= 1.0;
        let dlogits: Vec<F> = probs.iter().map(|&d| F::of(d * scale)).collect();
        for (g, &d) in grads.out_bias.iter_mut().zip(&dlogits) {
            *g += d;
        }
        let mut dhidden = vec![F::zero(); arch.feature_width()];
        for (i, (&h, dh)) in trace.hidden.iter().zip(dhidden.iter_mut()).enumerate() {
            let w_row = params.out_weight.row(i);
            let mut acc = F::zero();
            for (c, &d) in dlogits.iter().enumerate() {
                acc += w_row[c] * d;
            }
            *dh = acc;
            if h != F::zero() {
                let mut g_row = grads.out_weight.row_mut(i);
                for (c, &d) in dlogits.iter().enumerate() {
                    g_row[c] += h * d;
                }
            }
        }
        if let Some(mask) = &trace.mask {
            for (d, &m) in dhidden.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        traces.push(trace);
        upstream.push(dhidden);
    }
    let towers: Vec<TowerGrad<'_, F>> = batch
        .iter()
        .zip(&traces)
        .zip(&upstream)
        .flat_map(|((ex, trace), up)| {
            ex.inputs.iter().zip(&trace.towers).enumerate().map(move |(s, (seq, t))| TowerGrad {
                indices: seq,
                trace: t,
                upstream: &up[s * tw..(s + 1) * tw],
            })
        })
        .collect();
    towers_backward(arch, params, &towers, &mut grads);
    grads.embedding.row_mut(PAD).fill(F::zero());
    Ok(BatchPass {
        loss: loss * scale,
        grads,
        correct,
    })
}

/// Mean cross-entropy in inference mode (no dropout).
pub fn mean_loss<F: Real>(examples: &[Example], arch: &Architecture, params: &Params<F>) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("examples"));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(64) {
        let proj = Projections::compute(params, chunk.iter().flat_map(|e| e.inputs.iter().map(Vec::as_slice)));
        for ex in chunk {
            check_inputs(arch, params, &ex.inputs)?;
            let trace = forward_with(arch, params, &proj, &ex.inputs, None);
            total += cross_entropy(&trace.wide_logits(), ex.label);
        }
    }
    Ok(total / examples.len() as f64)
}

/// Class probabilities for many examples in inference mode.
pub fn predict_batch<F: Real>(
    inputs: &[Vec<Vec<usize>>],
    arch: &Architecture,
    params: &Params<F>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        for seqs in chunk {
            check_inputs(arch, params, seqs)?;
        }
        let proj = Projections::compute(params, chunk.iter().flat_map(|s| s.iter().map(Vec::as_slice)));
        for seqs in chunk {
            out.push(softmax(&forward_with(arch, params, &proj, seqs, None).wide_logits()));
        }
    }
    Ok(out)
}
