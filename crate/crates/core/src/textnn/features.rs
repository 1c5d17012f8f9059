//! Attachment point for other pair encoders. Anything that maps a pair to a
//! fixed-width feature vector (for example one computed offline by a
//! transformer) can be paired with a [`FeatureHead`] in place of the CNN
//! towers.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::classifier::Classifier;
use super::network::{affine, argmax, softmax, tower_forward};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::model::SatdPair;

pub trait PairFeatureExtractor {
    fn width(&self) -> usize;
    fn extract(&self, pair: &SatdPair) -> Result<Vec<f64>>;
}

/// The CNN's own concatenated tower features (before dropout).
impl PairFeatureExtractor for Classifier {
    fn width(&self) -> usize {
        self.architecture.feature_width()
    }

    fn extract(&self, pair: &SatdPair) -> Result<Vec<f64>> {
        if self.architecture.inputs != 2 {
            return Err(Error::invalid("feature extraction needs a two-tower model"));
        }
        let mut out = tower_forward(&self.encode(&pair.origin.text), &self.architecture, &self.params)?;
        out.extend(tower_forward(&self.encode(&pair.target.text), &self.architecture, &self.params)?);
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureLine {
    pair_id: String,
    features: Vec<f64>,
}

/// Feature vectors keyed by pair id, loaded from JSON lines of the form
/// `{"pair_id": "...", "features": [..]}`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedFeatures {
    width: usize,
    by_pair: HashMap<String, Vec<f64>>,
}

impl PrecomputedFeatures {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut out = PrecomputedFeatures::default();
        for (i, (id, f)) in entries.into_iter().enumerate() {
            if i == 0 {
                out.width = f.len();
            } else if f.len() != out.width {
                return Err(Error::InvalidRecord {
                    index: i,
                    reason: format!("width {} differs from {}", f.len(), out.width),
                });
            }
            out.by_pair.insert(id, f);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: FeatureLine = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                line: n + 1,
                reason: e.to_string(),
            })?;
            entries.push((l.pair_id, l.features));
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.by_pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_pair.is_empty()
    }
}

impl PairFeatureExtractor for PrecomputedFeatures {
    fn width(&self) -> usize {
        self.width
    }

    fn extract(&self, pair: &SatdPair) -> Result<Vec<f64>> {
        self.by_pair
            .get(&pair.pair_id)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no features for pair `{}`", pair.pair_id)))
    }
}

/// Softmax regression over extracted features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl FeatureHead {
    pub fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.weight.nrows() {
            return Err(Error::invalid(format!(
                "feature width {} does not match head width {}",
                features.len(),
                self.weight.nrows()
            )));
        }
        Ok(softmax(&affine(&self.weight, &self.bias, features)))
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.probabilities(features)?))
    }

    /// Minibatch Adam on mean cross-entropy for `config.max_epochs` epochs.
    pub fn train(data: &[(Vec<f64>, usize)], classes: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let width = data.first().ok_or(Error::Empty("feature examples"))?.0.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (width.max(1) as f64).sqrt();
        let mut head = FeatureHead {
            weight: Array2::from_shape_fn((width, classes), |_| rng.gen_range(-bound..bound)),
            bias: Array1::zeros(classes),
        };
        let mut adam = Adam::new(config.adam(), &[width * classes, classes]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..config.max_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                let mut gw = Array2::<f64>::zeros((width, classes));
                let mut gb = Array1::<f64>::zeros(classes);
                for &i in chunk {
                    let (x, y) = &data[i];
                    let mut d = head.probabilities(x)?;
                    if *y >= classes {
                        return Err(Error::invalid(format!("label {y} outside 0..{classes}")));
                    }
                    d[*y] -= 1.0;
                    for (c, dc) in d.iter().enumerate() {
                        let dc = dc / chunk.len() as f64;
                        gb[c] += dc;
                        for (k, xk) in x.iter().enumerate() {
                            gw[[k, c]] += xk * dc;
                        }
                    }
                }
                adam.step(
                    &mut [head.weight.as_slice_mut().unwrap(), head.bias.as_slice_mut().unwrap()],
                    &[gw.as_slice().unwrap(), gb.as_slice().unwrap()],
                );
            }
        }
        Ok(head)
    }
}
