//! Multimodal time-series anomaly detection with an LSTM variational
//! autoencoder, a latent-state-dependent threshold, comparison baselines and
//! a cross-validated ROC evaluation harness.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod svm;

pub use error::{Error, Result};
