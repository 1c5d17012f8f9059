//! Trained text-CNN bundles: parameters together with the architecture,
//! tokenizer and vocabulary that produced them, plus the binary file format.
//!
//! File layout (little-endian): 8-byte magic, u32 format version, u64 header
//! length, UTF-8 JSON header, then every tensor as raw f64 in header order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, predict_batch, Architecture, Example, Params};
use super::train::{train_examples, History, TrainConfig};
use super::vocab::{Vocabulary, VocabularyFile};
use crate::error::{Error, Result};
use crate::model::{RelationLabel, SatdPair};
use crate::pairgen::{tokenize, TokenizerConfig};

pub const MAGIC: &[u8; 8] = b"SATDCNN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub architecture: Architecture,
    pub tokenizer: TokenizerConfig,
    pub vocabulary: Vocabulary,
    pub params: Params,
    pub trained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub label: RelationLabel,
    pub probabilities: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    tokenizer: TokenizerConfig,
    vocabulary: VocabularyFile,
    trained: bool,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Classifier {
    /// Freshly initialized, untrained classifier.
    pub fn new(architecture: Architecture, tokenizer: TokenizerConfig, vocabulary: Vocabulary, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&architecture, vocabulary.len(), &mut rng);
        Ok(Classifier {
            architecture,
            tokenizer,
            vocabulary,
            params,
            trained: false,
        })
    }

    pub fn sequence_length(&self) -> usize {
        self.tokenizer.max_sequence_length.max(self.architecture.widest_window())
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.vocabulary.encode(&tokenize(text, &self.tokenizer), self.sequence_length())
    }

    fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::NotTrained)
        }
    }

    /// Class probabilities for many inputs; each item holds one text per tower.
    pub fn probabilities(&self, items: &[Vec<&str>]) -> Result<Vec<Vec<f64>>> {
        self.require_trained()?;
        let encoded: Vec<Vec<Vec<usize>>> = items
            .iter()
            .map(|texts| texts.iter().map(|t| self.encode(t)).collect())
            .collect();
        predict_batch(&encoded, &self.architecture, &self.params)
    }

    fn require_pair_model(&self) -> Result<()> {
        if self.architecture.inputs != 2 || self.architecture.classes != 3 {
            return Err(Error::invalid("not a pair relation classifier"));
        }
        Ok(())
    }

    pub fn predict_pair(&self, origin_text: &str, target_text: &str) -> Result<Prediction> {
        Ok(self.predict_texts(&[(origin_text, target_text)])?.remove(0))
    }

    pub fn predict_texts(&self, pairs: &[(&str, &str)]) -> Result<Vec<Prediction>> {
        self.require_pair_model()?;
        let items: Vec<Vec<&str>> = pairs.iter().map(|(a, b)| vec![*a, *b]).collect();
        Ok(self.probabilities(&items)?.into_iter().map(to_prediction).collect())
    }

    pub fn predict_pairs(&self, pairs: &[SatdPair]) -> Result<Vec<Prediction>> {
        let texts: Vec<(&str, &str)> = pairs
            .iter()
            .map(|p| (p.origin.text.as_str(), p.target.text.as_str()))
            .collect();
        self.predict_texts(&texts)
    }

    /// Probability of class 1 for a single-input, 2-class scorer.
    pub fn score_text(&self, text: &str) -> Result<f64> {
        Ok(self.score_texts(&[text])?[0])
    }

    pub fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>> {
        if self.architecture.inputs != 1 || self.architecture.classes != 2 {
            return Err(Error::invalid("not a single-text scorer"));
        }
        let items: Vec<Vec<&str>> = texts.iter().map(|t| vec![*t]).collect();
        Ok(self.probabilities(&items)?.into_iter().map(|p| p[1]).collect())
    }

    fn expected_tensors(&self) -> Vec<TensorEntry> {
        let a = &self.architecture;
        let entry = |name: String, shape: Vec<usize>| TensorEntry { name, shape };
        let mut out = vec![entry("embedding".into(), vec![self.vocabulary.len(), a.embedding_dim])];
        for &w in &a.windows {
            out.push(entry(format!("conv_w{w}"), vec![w, a.filters_per_window, a.embedding_dim]));
        }
        for &w in &a.windows {
            out.push(entry(format!("conv_b{w}"), vec![a.filters_per_window]));
        }
        out.push(entry("out_weight".into(), vec![a.feature_width(), a.classes]));
        out.push(entry("out_bias".into(), vec![a.classes]));
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            architecture: self.architecture.clone(),
            tokenizer: self.tokenizer.clone(),
            vocabulary: VocabularyFile::from(&self.vocabulary),
            trained: self.trained,
            tensors: self.expected_tensors(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let floats: usize = self.params.tensors().iter().map(|t| t.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + floats * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        // Stacked convolution rows are window-major, so the per-window tensors
        // are consecutive slices; biases split the same way.
        for t in self.params.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::ModelFormat("file is truncated".into());
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::ModelFormat("not a classifier file (bad magic)".into()));
        }
        let mut pos = MAGIC.len();
        let version = u32::from_le_bytes(bytes.get(pos..pos + 4).ok_or_else(truncated)?.try_into().unwrap());
        pos += 4;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes.get(pos..pos + 8).ok_or_else(truncated)?.try_into().unwrap());
        pos += 8;
        let header_end = pos
            .checked_add(usize::try_from(header_len).map_err(|_| truncated())?)
            .ok_or_else(truncated)?;
        let header: Header =
            serde_json::from_slice(bytes.get(pos..header_end).ok_or_else(truncated)?).map_err(|e| {
                Error::ModelFormat(format!("bad header: {e}"))
            })?;
        pos = header_end;
        header.architecture.validate()?;

        let vocabulary = Vocabulary::from_tokens(header.vocabulary.tokens, header.vocabulary.min_frequency);
        let mut model = Classifier {
            params: Params::zeros(&header.architecture, vocabulary.len()),
            architecture: header.architecture,
            tokenizer: header.tokenizer,
            vocabulary,
            trained: header.trained,
        };
        let expected = model.expected_tensors();
        if header.tensors.len() != expected.len() {
            return Err(Error::ModelFormat(format!(
                "header lists {} tensors, expected {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        for (got, want) in header.tensors.iter().zip(&expected) {
            if got.name != want.name {
                return Err(Error::ModelFormat(format!("tensor `{}` found where `{}` belongs", got.name, want.name)));
            }
            if got.shape != want.shape {
                return Err(Error::DimensionMismatch {
                    name: got.name.clone(),
                    found: got.shape.clone(),
                    expected: want.shape.clone(),
                });
            }
        }
        let body = &bytes[pos..];
        let floats: usize = model.params.tensors().iter().map(|t| t.len()).sum();
        if body.len() < floats * 8 {
            return Err(truncated());
        }
        if body.len() > floats * 8 {
            return Err(Error::ModelFormat(format!("{} trailing bytes", body.len() - floats * 8)));
        }
        let mut chunks = body.chunks_exact(8);
        for t in model.params.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn to_prediction(p: Vec<f64>) -> Prediction {
    let label = RelationLabel::from_index(argmax(&p)).expect("three classes");
    Prediction {
        label,
        probabilities: [p[0], p[1], p[2]],
    }
}

/// Builds the vocabulary from `texts` (one list of tower texts per example),
/// encodes and trains. Shared by the pair classifier and the text scorer.
pub fn train_classifier(
    texts: &[Vec<&str>],
    labels: &[usize],
    architecture: Architecture,
    tokenizer: TokenizerConfig,
    config: &TrainConfig,
) -> Result<(Classifier, History)> {
    if texts.is_empty() {
        return Err(Error::Empty("labeled training data"));
    }
    assert_eq!(texts.len(), labels.len());
    tokenizer.validate(architecture.widest_window())?;
    let tokens: Vec<Vec<Vec<String>>> = texts
        .iter()
        .map(|item| item.iter().map(|t| tokenize(t, &tokenizer)).collect())
        .collect();
    let vocabulary = Vocabulary::build(tokens.iter().flatten(), config.min_frequency);
    let mut model = Classifier::new(architecture, tokenizer, vocabulary, config.seed)?;
    let len = model.sequence_length();
    let examples: Vec<Example> = tokens
        .iter()
        .zip(labels)
        .map(|(item, &label)| Example {
            inputs: item.iter().map(|t| model.vocabulary.encode(t, len)).collect(),
            label,
        })
        .collect();
    let initial = model.params.clone();
    let (params, history) = train_examples(&examples, &model.architecture, initial, config)?;
    model.trained = true;
    model.params = params;
    Ok((model, history))
}

/// Trains the Siamese relation classifier on labeled pairs.
pub fn train_pair_classifier(
    pairs: &[SatdPair],
    architecture: Architecture,
    tokenizer: TokenizerConfig,
    config: &TrainConfig,
) -> Result<(Classifier, History)> {
    let mut texts = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let label = p.label.ok_or_else(|| Error::InvalidRecord {
            index: i,
            reason: format!("pair `{}` has no label", p.pair_id),
        })?;
        texts.push(vec![p.origin.text.as_str(), p.target.text.as_str()]);
        labels.push(label.index());
    }
    if architecture.inputs != 2 || architecture.classes != RelationLabel::ALL.len() {
        return Err(Error::Config("pair classifier needs 2 inputs and 3 classes".into()));
    }
    train_classifier(&texts, &labels, architecture, tokenizer, config)
}

/// Trains a single-tower SATD scorer on (text, is_satd) examples.
pub fn train_text_scorer(
    examples: &[(String, bool)],
    architecture: Architecture,
    tokenizer: TokenizerConfig,
    config: &TrainConfig,
) -> Result<(Classifier, History)> {
    if architecture.inputs != 1 || architecture.classes != 2 {
        return Err(Error::Config("text scorer needs 1 input and 2 classes".into()));
    }
    let texts: Vec<Vec<&str>> = examples.iter().map(|(t, _)| vec![t.as_str()]).collect();
    let labels: Vec<usize> = examples.iter().map(|(_, s)| usize::from(*s)).collect();
    train_classifier(&texts, &labels, architecture, tokenizer, config)
}
