//! Recurrent neural network sequence labelers built from scratch.
//!
//! Four architectures share one parameterization: Elman (hidden-state
//! history), Jordan (output history), I-RNN (previous labels fed back as
//! embeddings next to the word window) and I+E-RNN (both). Each can run
//! forward, backward or as a bidirectional pair, is trained with manual
//! backpropagation and momentum SGD, and persists to a single binary file.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod math;
pub mod models;
pub mod serialization;
pub mod training;

pub use error::{Error, Result};
