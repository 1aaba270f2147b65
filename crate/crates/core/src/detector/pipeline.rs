use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::online::ScoringModel;
use super::regressor::{collect_scores, select_svr, sequence_scores, ScoreSamples, SvrCandidate, SvrSearch, ThresholdRegressor};
use crate::data::{resample_execution, to_layout, Execution, Layout, NormStats};
use crate::error::{check_dim, Error, Result};
use crate::model::{corrupt, train_from, LstmVaeConfig, TrainingHistory};
use crate::nn::Matrix;
use crate::svm::{Svr, SvrConfig};

/// Layout conversion and fixed-length resampling applied to every execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub layout: Layout,
    pub sequence_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Raw17,
            sequence_len: 140,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_len < 2 {
            return Err(Error::Config("sequence_len must be at least 2".into()));
        }
        Ok(())
    }

    /// Converts the layout, then resamples to `sequence_len` rows.
    pub fn shape(&self, e: &Execution) -> Result<Execution> {
        resample_execution(&to_layout(e, self.layout)?, self.sequence_len)
    }
}

/// Shaping plus min/max scaling fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub norm: NormStats,
}

impl Preprocessor {
    pub fn fit<'a>(config: &PreprocessConfig, train: impl IntoIterator<Item = &'a Execution>) -> Result<Self> {
        config.validate()?;
        let shaped = train
            .into_iter()
            .map(|e| config.shape(e))
            .collect::<Result<Vec<_>>>()?;
        let norm = NormStats::fit(shaped.iter().map(|e| &e.signals))?;
        Ok(Self {
            config: config.clone(),
            norm,
        })
    }

    pub fn layout(&self) -> Layout {
        self.config.layout
    }

    /// Shaped and scaled execution, onset mapped onto the new time axis.
    pub fn apply(&self, e: &Execution) -> Result<Execution> {
        let mut shaped = self.config.shape(e)?;
        shaped.signals = self.norm.apply(&shaped.signals)?;
        Ok(shaped)
    }

    pub fn apply_all<'a>(&self, es: impl IntoIterator<Item = &'a Execution>) -> Result<Vec<Matrix>> {
        es.into_iter().map(|e| Ok(self.apply(e)?.signals)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub model: LstmVaeConfig,
    pub svr: SvrConfig,
    /// Overrides `svr.gamma` and `svr.c` by cross-validation when enabled.
    pub svr_search: SvrSearch,
    /// Corrupt validation inputs (with the model's noise level) when
    /// gathering regressor training scores.
    pub fit_with_corruption: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            model: LstmVaeConfig::default(),
            svr: SvrConfig::default(),
            svr_search: SvrSearch::default(),
            fit_with_corruption: false,
        }
    }
}

/// Score statistics on the validation split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean_score: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub residual_min: f64,
    pub residual_max: f64,
}

impl Calibration {
    /// Residual range once the expected score is pinned to the mean.
    pub fn fixed_residual_range(&self) -> (f64, f64) {
        (self.score_min - self.mean_score, self.score_max - self.mean_score)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub preprocessor: Preprocessor,
    pub scoring: ScoringModel,
    pub calibration: Calibration,
    /// Sensitivity used when none is given: the largest validation residual.
    pub default_c: f64,
}

impl TrainedDetector {
    /// The same model with the state-based threshold replaced by the mean
    /// validation score.
    pub fn with_fixed_threshold(&self) -> Self {
        let mut d = self.clone();
        d.scoring.regressor = ThresholdRegressor::Constant(self.calibration.mean_score);
        d
    }

    pub fn layout(&self) -> Layout {
        self.preprocessor.layout()
    }

    pub fn input_dim(&self) -> usize {
        self.scoring.model.input_dim()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub pretrain: Option<TrainingHistory>,
    pub history: TrainingHistory,
    /// Held-out error of every regressor candidate, empty without a search.
    pub svr_candidates: Vec<SvrCandidate>,
}

fn require_normal(set: &[Execution], what: &str) -> Result<()> {
    if let Some(e) = set.iter().find(|e| e.is_anomalous()) {
        return Err(Error::Contract(format!(
            "{what} split contains anomalous execution {}; detectors train on non-anomalous data only",
            e.id
        )));
    }
    Ok(())
}

/// Trains the LSTM-VAE on preprocessed sequences, fits the threshold
/// regressor on the validation sequences and calibrates residuals.
pub fn fit_scoring_model(
    train: &[Matrix],
    val: &[Matrix],
    pretrain: Option<&[Matrix]>,
    config: &DetectorConfig,
) -> Result<(ScoringModel, Calibration, TrainingReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training and validation splits must be non-empty".into()));
    }
    let model_cfg = &config.model;
    let mut report = TrainingReport::default();
    let init = match pretrain {
        Some(pool) if !pool.is_empty() => {
            let (m, h) = train_from(None, pool, val, model_cfg)?;
            report.pretrain = Some(h);
            Some(m)
        }
        _ => None,
    };
    let (model, history) = train_from(init.as_ref(), train, val, model_cfg)?;
    report.history = history;

    let fit_inputs: Vec<Matrix> = if config.fit_with_corruption {
        let mut rng = ChaCha8Rng::seed_from_u64(model_cfg.seed ^ 0xc0ffee);
        val.iter()
            .map(|m| {
                let data = corrupt(m.as_slice(), model.config.noise_std, &mut rng);
                Matrix::from_vec(m.rows(), m.cols(), data)
            })
            .collect::<Result<_>>()?
    } else {
        val.to_vec()
    };
    let parts = fit_inputs
        .iter()
        .map(|s| sequence_scores(&model, s))
        .collect::<Result<Vec<_>>>()?;
    let (svr_config, candidates) = select_svr(&parts, &config.svr, &config.svr_search)?;
    report.svr_candidates = candidates;
    let samples = ScoreSamples::concat(&parts.iter().collect::<Vec<_>>())?;
    let svr = Svr::fit(&samples.z, &samples.scores, &svr_config)?;
    let scoring = ScoringModel {
        model,
        regressor: ThresholdRegressor::Svr(svr),
    };

    let clean = if config.fit_with_corruption {
        collect_scores(&scoring.model, val)?
    } else {
        samples
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (z, s) in clean.z.iter_rows().zip(&clean.scores) {
        let r = s - scoring.regressor.expected_score(z)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let calibration = Calibration {
        mean_score: clean.mean_score(),
        score_min: clean.scores.iter().copied().fold(f64::INFINITY, f64::min),
        score_max: clean.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        residual_min: lo,
        residual_max: hi,
    };
    Ok((scoring, calibration, report))
}

/// Fits preprocessing on the training split, then trains the scoring model.
/// The pre-training pool, if any, is scaled with the training statistics.
pub fn train_detector(
    train: &[Execution],
    val: &[Execution],
    pretrain: Option<&[Execution]>,
    preprocess: &PreprocessConfig,
    config: &DetectorConfig,
) -> Result<(TrainedDetector, TrainingReport)> {
    require_normal(train, "training")?;
    require_normal(val, "validation")?;
    if let Some(pool) = pretrain {
        require_normal(pool, "pre-training")?;
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training and validation splits must be non-empty".into()));
    }
    let pre = Preprocessor::fit(preprocess, train)?;
    let train_m = pre.apply_all(train)?;
    let val_m = pre.apply_all(val)?;
    let pool_m = pretrain.map(|p| pre.apply_all(p)).transpose()?;
    let mut config = config.clone();
    if config.model.input_dim == 0 {
        config.model.input_dim = pre.layout().dim();
    }
    check_dim("model input", pre.layout().dim(), config.model.input_dim)?;
    let (scoring, calibration, report) = fit_scoring_model(&train_m, &val_m, pool_m.as_deref(), &config)?;
    Ok((
        TrainedDetector {
            preprocessor: pre,
            scoring,
            default_c: calibration.residual_max,
            calibration,
        },
        report,
    ))
}
