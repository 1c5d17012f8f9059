//! Siamese text-CNN relation classifier and its single-tower SATD scorer
//! variant, with hand-written gradients and Adam.

pub mod adam;
pub mod classifier;
pub mod features;
pub mod network;
pub mod synthetic;
pub mod train;
pub mod vocab;

pub use classifier::{train_classifier, train_pair_classifier, train_text_scorer, Classifier, Prediction};
pub use features::{FeatureHead, PairFeatureExtractor, PrecomputedFeatures};
pub use network::{loss_and_gradients, pair_forward, tower_forward, Architecture, Example, Params};
pub use train::{EpochRecord, History, TrainConfig};
pub use vocab::Vocabulary;
