use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::{load_execution, save_execution};
use super::execution::{Execution, Label};
use super::generator::{generate_with_clean, BenchmarkConfig};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub id: String,
    pub group: String,
    pub label: Label,
    pub anomaly_type: Option<String>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
    pub executions: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.executions {
            let path = Path::new(&e.file);
            if e.file.is_empty()
                || path.is_absolute()
                || path.components().any(|c| !matches!(c, std::path::Component::Normal(_)))
            {
                return Err(Error::Config(format!("manifest file entry '{}' must be a plain relative path", e.file)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate execution id '{}' in manifest", e.id)));
            }
        }
        Ok(())
    }
}

/// Executions with their manifest entries, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub executions: Vec<Execution>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Execution> {
        self.manifest
            .executions
            .iter()
            .zip(&self.executions)
            .filter(move |(m, _)| m.split == split)
            .map(|(_, e)| e)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ManifestEntry, &Execution)> {
        self.manifest.executions.iter().zip(&self.executions)
    }
}

pub fn default_split(e: &Execution, validation: bool) -> Split {
    match (e.label, validation) {
        (Label::Anomalous, _) => Split::Test,
        (Label::NonAnomalous, true) => Split::Val,
        (Label::NonAnomalous, false) => Split::Train,
    }
}

/// Generates a benchmark in memory with its manifest.
pub fn generate_dataset(config: &BenchmarkConfig) -> Result<Dataset> {
    let generated = generate_with_clean(config)?;
    let mut entries = Vec::with_capacity(generated.len());
    let mut executions = Vec::with_capacity(generated.len());
    for g in generated {
        let e = g.execution;
        entries.push(ManifestEntry {
            file: format!("{}.csv", e.id),
            id: e.id.clone(),
            group: e.group.clone(),
            label: e.label,
            anomaly_type: e.anomaly_type.clone(),
            split: default_split(&e, g.validation),
        });
        executions.push(e);
    }
    Ok(Dataset {
        manifest: Manifest {
            version: MANIFEST_VERSION,
            benchmark: Some(config.clone()),
            executions: entries,
        },
        executions,
    })
}

pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for (entry, exec) in dataset.entries() {
        save_execution(exec, dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dataset.manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Manifest::parse(&text)
}

/// Loads a dataset directory, checking each file against its manifest entry.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    let manifest = load_manifest(dir.join(MANIFEST_FILE))?;
    let mut executions = Vec::with_capacity(manifest.executions.len());
    for entry in &manifest.executions {
        let exec = load_execution(dir.join(&entry.file))?;
        if exec.id != entry.id || exec.group != entry.group || exec.label != entry.label {
            return Err(Error::Config(format!(
                "{} does not match its manifest entry (id, group or label differ)",
                entry.file
            )));
        }
        executions.push(exec);
    }
    Ok(Dataset { manifest, executions })
}
