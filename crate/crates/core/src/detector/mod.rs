//! Anomaly scoring, the state-based threshold and online detection.

mod online;
mod pipeline;
mod regressor;

pub use online::{anomaly_score, Detection, DetectorState, ScoreRecord, ScoreTrace, ScoringModel};
pub use pipeline::{
    fit_scoring_model, train_detector, Calibration, DetectorConfig, PreprocessConfig, Preprocessor, TrainedDetector, TrainingReport,
};
pub use regressor::{
    collect_scores, fit_threshold_regressor, select_svr, sequence_scores, ScoreSamples, SvrCandidate, SvrSearch,
    ThresholdRegressor,
};
