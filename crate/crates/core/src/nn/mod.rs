//! Dense and recurrent building blocks with exact reverse-mode gradients.

pub mod adam;
pub mod layers;
pub mod matrix;
pub mod sampling;
pub mod tape;

pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use layers::{sigmoid, softplus, Activation, Dense, LstmCell, Parameters};
pub use matrix::Matrix;
pub use sampling::{sample_diag_gaussian, standard_normal};
pub use tape::{DenseVars, Gradients, LstmVars, Tape, Var};
