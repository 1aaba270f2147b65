//! The LSTM variational autoencoder: denoising objective with a
//! progress-based prior, and its training loop.

pub mod config;
pub mod gradcheck;
pub mod loss;
pub mod lstm_vae;
pub mod prior;
pub mod train;

pub use config::{Endpoint, LstmVaeConfig};
pub use loss::{gaussian_nll, kl_term, DiagGaussian};
pub use lstm_vae::{corrupt, LstmVae, SequenceNoise, SequenceState, StepOutput};
pub use prior::PriorSchedule;
pub use train::{pretrain_then_finetune, train, train_from, EarlyStopping, EpochStats, Progress, TrainingHistory};
