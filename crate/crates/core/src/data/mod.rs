//! Executions, file formats, preprocessing and the synthetic benchmark.

pub mod csv;
pub mod execution;
pub mod generator;
pub mod manifest;
pub mod preprocess;

pub use csv::{execution_to_string, load_execution, parse_execution, save_execution};
pub use execution::{Execution, Label, Layout, FEATURE_CHANNELS, RAW_CHANNELS};
pub use generator::{generate_benchmark, generate_with_clean, AnomalyFamily, BenchmarkConfig, GeneratedExecution};
pub use manifest::{
    generate_dataset, load_dataset, load_manifest, write_dataset, Dataset, Manifest, ManifestEntry, Split,
    MANIFEST_FILE,
};
pub use preprocess::{extract_features, map_index, resample, resample_execution, to_layout, NormStats};
