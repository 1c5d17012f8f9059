//! Mining, linking and relation classification of self-admitted technical
//! debt (SATD) across source comments, commits, issues and pull requests.

pub mod annotate;
pub mod census;
pub mod detect;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod jsonl;
pub mod linker;
pub mod model;
pub mod pairgen;
pub mod textnn;

pub use error::{Error, Result};
