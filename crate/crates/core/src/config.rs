use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, MethodConfigs};

/// Everything a run depends on. Parsed from TOML; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for training and evaluation. The benchmark has its own
    /// seed so one dataset can be reused across training seeds.
    pub seed: u64,
    pub output: PathBuf,
    pub benchmark: BenchmarkConfig,
    pub methods: MethodConfigs,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("runs"),
            benchmark: BenchmarkConfig::default(),
            methods: MethodConfigs::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies `key.path=value`
    /// overrides in order. Values are TOML literals; anything that does not
    /// parse as one is taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        self.methods.preprocess.validate()?;
        self.methods.detector.model.validate()?;
        self.methods.detector.svr.validate()?;
        self.methods.detector.svr_search.validate()?;
        self.methods.ae.train.validate()?;
        self.methods.encdec.train.validate()?;
        self.methods.osvm.validate()?;
        self.eval.validate()
    }
}

/// Sets `a.b.c = value` in a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("split yields at least one segment");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Layout;
    use crate::eval::MethodKind;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("sede = 3"), Err(Error::Config(_))));
        assert!(RunConfig::parse("[methods.detector.model]\nlatent = 2").is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let o = [
            "seed=7".to_string(),
            "methods.preprocess.layout=features4".to_string(),
            "eval.methods=[\"random\"]".to_string(),
            "benchmark.groups = 3".to_string(),
            "seed=9".to_string(),
        ];
        let cfg = RunConfig::load(None, &o).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.methods.preprocess.layout, Layout::Features4);
        assert_eq!(cfg.eval.methods, vec![MethodKind::Random]);
        assert_eq!(cfg.benchmark.groups, 3);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let o = ["benchmark.anomaly_fraction=1.5".to_string()];
        assert!(matches!(RunConfig::load(None, &o), Err(Error::Config(_))));
        assert!(apply_override(&mut toml::Table::new(), "no_equals").is_err());
        assert!(apply_override(&mut toml::Table::new(), "a..b=1").is_err());
    }
}
