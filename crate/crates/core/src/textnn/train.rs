use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::network::{batch_pass, mean_loss, predict_batch, argmax, Architecture, Example, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub min_frequency: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            validation_fraction: 0.1,
            min_frequency: 1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("batch_size", self.batch_size as f64),
            ("patience", self.patience as f64),
            ("min_frequency", self.min_frequency as f64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Share of training examples classified correctly during the epoch's
    /// own (dropout-enabled) forward passes.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub warnings: Vec<String>,
}

/// Seeded stratified holdout of `round(n * fraction)` items, each class
/// contributing in proportion to its size. Returns (train, validation) index lists.
pub fn holdout_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n = labels.len();
    if n < 2 || fraction <= 0.0 {
        return ((0..n).collect(), Vec::new());
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    // round(n * fraction) in total, split across classes by largest remainder.
    let target = (n as f64 * fraction).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|m| m.len() as f64 * fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = target.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(classes * 2) {
        if missing == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }
    let mut val = Vec::new();
    for (members, t) in by_class.iter_mut().zip(&take) {
        members.shuffle(&mut rng);
        val.extend(members.drain(..*t));
    }
    if val.is_empty() {
        let largest = (0..classes).max_by_key(|&c| (by_class[c].len(), std::cmp::Reverse(c))).unwrap();
        val.push(by_class[largest].pop().expect("non-empty class"));
    }
    if val.len() == n {
        val.sort_unstable();
        let back = val.pop().unwrap();
        by_class[labels[back]].push(back);
    }
    let mut train: Vec<usize> = by_class.into_iter().flatten().collect();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains `params` in place on encoded examples and returns the parameters of
/// the epoch with the lowest validation loss.
pub fn train_examples(
    examples: &[Example],
    arch: &Architecture,
    initial: Params,
    config: &TrainConfig,
) -> Result<(Params, History)> {
    config.validate()?;
    arch.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let mut history = History::default();
    if examples.len() < 10 {
        history
            .warnings
            .push(format!("only {} training examples; at least 10 are recommended", examples.len()));
    }
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let (train_idx, val_idx) = holdout_split(&labels, config.validation_fraction, config.seed);
    history.train_examples = train_idx.len();
    history.validation_examples = val_idx.len();
    for c in 0..arch.classes {
        if !train_idx.iter().any(|&i| labels[i] == c) {
            history.warnings.push(format!("class {c} is absent from the training split"));
        }
    }
    let train: Vec<Example> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let val: Vec<Example> = val_idx.iter().map(|&i| examples[i].clone()).collect();

    if config.max_epochs == 0 {
        return Ok((initial, history));
    }
    let mut params: Params<f32> = initial.cast();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam: Adam<f32> = Adam::new(config.adam(), &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Params<f32>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
            let dropout_seed = rand::Rng::gen::<u64>(&mut rng);
            let pass = batch_pass(&batch, arch, &params, Some(dropout_seed))?;
            total += pass.loss * batch.len() as f64;
            correct += pass.correct;
            let g = pass.grads.tensors();
            adam.step(&mut params.tensors_mut(), &g);
            params.embedding.row_mut(super::vocab::PAD).fill(0.0);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() { None } else { Some(mean_loss(&val, arch, &params)?) };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_accuracy: correct as f64 / train.len() as f64,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, params.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params.cast(), history))
}

pub fn accuracy(examples: &[Example], arch: &Architecture, params: &Params) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let inputs: Vec<Vec<Vec<usize>>> = examples.iter().map(|e| e.inputs.clone()).collect();
    let probs = predict_batch(&inputs, arch, params)?;
    let hits = probs.iter().zip(examples).filter(|(p, e)| argmax(p) == e.label).count();
    Ok(hits as f64 / examples.len() as f64)
}
