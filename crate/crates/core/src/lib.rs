//! Multitask surgical workflow recognition.
//!
//! Frame-level phase and tool classification trained with a weighted
//! cross-entropy, a weighted multi-label soft margin loss and a joint
//! tool/phase co-occurrence loss, followed by a bidirectional LSTM over
//! whitened frame features and median-filtered phase predictions.

pub mod cli;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
