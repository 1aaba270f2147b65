use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{sliding_windows, window_ends, AeDetector, EncDecDetector, ResidualTrace};
use crate::data::Layout;
use crate::detector::{Preprocessor, TrainedDetector};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::svm::OneClassSvm;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON serialization. Field order is fixed by the type and
/// floats print in shortest round-trip form, so equal values hash equally.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeCheckpoint {
    pub preprocessor: Preprocessor,
    pub detector: AeDetector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncDecCheckpoint {
    pub preprocessor: Preprocessor,
    pub detector: EncDecDetector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsvmCheckpoint {
    pub preprocessor: Preprocessor,
    pub window: usize,
    pub model: OneClassSvm,
}

/// Trained model of any method, tagged by method name on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CheckpointModel {
    LstmVae(TrainedDetector),
    Ae(AeCheckpoint),
    EncdecAd(EncDecCheckpoint),
    Osvm(OsvmCheckpoint),
}

impl CheckpointModel {
    pub fn method(&self) -> &'static str {
        match self {
            CheckpointModel::LstmVae(_) => "lstm_vae",
            CheckpointModel::Ae(_) => "ae",
            CheckpointModel::EncdecAd(_) => "encdec_ad",
            CheckpointModel::Osvm(_) => "osvm",
        }
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        match self {
            CheckpointModel::LstmVae(d) => &d.preprocessor,
            CheckpointModel::Ae(c) => &c.preprocessor,
            CheckpointModel::EncdecAd(c) => &c.preprocessor,
            CheckpointModel::Osvm(c) => &c.preprocessor,
        }
    }

    pub fn layout(&self) -> Layout {
        self.preprocessor().layout()
    }

    /// Threshold that no validation execution exceeds (`0` for the one-class
    /// SVM, whose boundary is the decision sign).
    pub fn default_c(&self) -> f64 {
        match self {
            CheckpointModel::LstmVae(d) => d.default_c,
            CheckpointModel::Ae(c) => c.detector.residual_range.1,
            CheckpointModel::EncdecAd(c) => c.detector.residual_range.1,
            CheckpointModel::Osvm(_) => 0.0,
        }
    }

    /// Residual trace of an already preprocessed sequence under a windowed
    /// baseline; `None` for the LSTM-VAE, which is scored step by step.
    pub fn window_trace(&self, seq: &Matrix) -> Result<Option<ResidualTrace>> {
        Ok(Some(match self {
            CheckpointModel::LstmVae(_) => return Ok(None),
            CheckpointModel::Ae(c) => c.detector.trace(seq)?,
            CheckpointModel::EncdecAd(c) => c.detector.trace(seq)?,
            CheckpointModel::Osvm(c) => {
                let w = sliding_windows(seq, c.window)?;
                ResidualTrace {
                    residuals: w
                        .iter_rows()
                        .map(|r| Ok(-c.model.decision(r)?))
                        .collect::<Result<_>>()?,
                    steps: window_ends(seq.rows(), c.window),
                }
            }
        }))
    }
}

/// Versioned on-disk container. `config` carries the run configuration that
/// produced the model and is excluded from [`Checkpoint::hash`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub model: CheckpointModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: CheckpointModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            model,
            config: None,
        }
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self> {
        self.config = Some(serde_json::to_value(config)?);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                ck.format
            )));
        }
        ck.validate()?;
        Ok(ck)
    }

    /// Cross-checks that the stored parts fit together.
    pub fn validate(&self) -> Result<()> {
        let pre = self.model.preprocessor();
        let dim = pre.layout().dim();
        if pre.norm.dim() != dim {
            return Err(Error::Checkpoint(format!(
                "normalization covers {} channels but layout {} has {dim}",
                pre.norm.dim(),
                pre.layout()
            )));
        }
        let model_dim = match &self.model {
            CheckpointModel::LstmVae(d) => d.scoring.model.input_dim(),
            CheckpointModel::Ae(c) => c.detector.model.width() / c.detector.model.window.max(1),
            CheckpointModel::EncdecAd(c) => c.detector.model.input_dim(),
            CheckpointModel::Osvm(c) => c.model.support.cols() / c.window.max(1),
        };
        if model_dim != dim {
            return Err(Error::Checkpoint(format!(
                "model expects {model_dim} channels but layout {} has {dim}",
                pre.layout()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    /// Hash of the trained model alone.
    pub fn hash(&self) -> Result<String> {
        digest(&self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn garbage_is_a_checkpoint_error() {
        assert!(matches!(Checkpoint::from_json("{"), Err(Error::Checkpoint(_))));
        assert!(matches!(
            Checkpoint::from_json(r#"{"format":1,"model":{"method":"hmm_gp"}}"#),
            Err(Error::Checkpoint(_))
        ));
    }
}
