//! Cross-model pseudo-labeling for semi-supervised clip classification on
//! synthetic data: a large primary network and a small auxiliary network see
//! the same unlabeled videos at different frame rates and supervise each other.

pub mod augment;
pub mod config;
pub mod error;
pub mod metrics;
pub mod netcore;
pub mod par;
pub mod pseudolabel;
pub mod runner;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
pub use par::Exec;
