//! Comparison detectors: RANDOM, one-class SVM, a windowed autoencoder and
//! an LSTM encoder-decoder with an error-vector Gaussian.

pub mod ae;
pub mod encdec;
mod fit;
pub mod osvm;
pub mod random;
pub mod windows;

pub use ae::{AeConfig, AeDetector, WindowAutoencoder};
pub use encdec::{EncDecConfig, EncDecDetector, EncDecModel, ErrorModel};
pub use fit::WindowTrainConfig;
pub use osvm::{OsvmConfig, OsvmDetector, OsvmKnob, SweepVerdicts};
pub use random::RandomDetector;
pub use windows::{sliding_windows, stack_windows, window_ends, ResidualTrace};
