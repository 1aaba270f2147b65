//! ROC analysis and leave-one-group-out cross-validation.

pub mod cv;
pub mod report;
pub mod roc;

pub use cv::{
    cross_validate, derive_seed, detector_traces, group_folds, threshold_ablation, EvalConfig, Fold, MethodConfigs,
    MethodKind, FIXED_THRESHOLD,
};
pub use report::{roc_csv, CrossValidation, DelayReport, DelayStats, EvalReport, FoldReport, SCHEMA_VERSION};
pub use roc::{auc, exact_roc, rates, roc_curve, roc_from_flags, threshold_grid, RocPoint};
