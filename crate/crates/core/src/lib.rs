//! Retrieval-guided test-time adaptation of a multimodal fake news video
//! classifier over a stream of unlabeled target batches.

pub mod adaptation;
pub mod alignment;
pub mod cli;
pub mod error;
pub mod feature_io;
pub mod memory_bank;
pub mod mmd;
pub mod pseudo_label;
pub mod retrieval;
pub mod source_model;

pub use error::{RadarError, Result};
