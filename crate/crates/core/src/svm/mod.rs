//! Kernel machines on a shared SMO solver: epsilon-SVR for the state-based
//! threshold and the one-class SVM baseline.

pub mod kernel;
pub mod one_class;
mod smo;
pub mod svr;

pub use kernel::Rbf;
pub use one_class::{GammaRule, OneClassProblem, OneClassSolution, OneClassSvm};
pub use svr::{Svr, SvrConfig};
