//! Hybrid recurrent/convolutional attention forecaster for drive-shaft
//! torsional resonance.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`] and [`autograd`]: a small dense tensor engine with a
//!   reverse-mode gradient tape.
//! - [`nn`]: LSTM, dilated causal TCN, multi-head attention, GLU,
//!   positional encoding and post-norm transformer blocks.
//! - [`model`]: the fused LSTM/TCN attention model, the comparison baselines
//!   and checkpoint persistence.
//! - [`data`]: a two-inertia torsional simulator, dataset generation,
//!   normalization and sliding windows.
//! - [`train`]: Adam, learning-rate schedules, metrics, training and
//!   evaluation.
//! - [`cli`]: the command-line workflows.

pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
