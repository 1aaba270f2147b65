use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LstmVae;
use crate::nn::Matrix;
use crate::svm::{Svr, SvrConfig};

/// Expected anomaly score as a function of the latent state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRegressor {
    Svr(Svr),
    /// Fixed expected score, independent of the state.
    Constant(f64),
}

impl ThresholdRegressor {
    pub fn expected_score(&self, z: &[f64]) -> Result<f64> {
        match self {
            ThresholdRegressor::Svr(svr) => svr.predict(z),
            ThresholdRegressor::Constant(v) => Ok(*v),
        }
    }
}

/// Latent states and scores gathered on validation sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSamples {
    pub z: Matrix,
    pub scores: Vec<f64>,
}

impl ScoreSamples {
    pub fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    pub fn concat(parts: &[&ScoreSamples]) -> Result<Self> {
        let k = parts.first().map_or(0, |p| p.z.cols());
        let mut z = Vec::new();
        let mut scores = Vec::new();
        for p in parts {
            if p.z.cols() != k {
                return Err(Error::dim("latent samples", k, p.z.cols()));
            }
            z.extend_from_slice(p.z.as_slice());
            scores.extend_from_slice(&p.scores);
        }
        Ok(Self {
            z: Matrix::from_vec(scores.len(), k, z)?,
            scores,
        })
    }
}

/// Cross-validated choice of the regressor's kernel width and box
/// constraint, scored by held-out squared error on validation sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrSearch {
    /// Candidate widths as multiples of `1 / latent_dim`; empty disables
    /// the search and the base configuration is used as is.
    pub gamma_scales: Vec<f64>,
    pub c_values: Vec<f64>,
    /// Sequence `i` is held out in fold `i % folds`; fewer sequences than
    /// folds reduce the fold count, and a single sequence skips the search.
    pub folds: usize,
}

impl Default for SvrSearch {
    fn default() -> Self {
        Self {
            gamma_scales: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            c_values: vec![1.0, 10.0],
            folds: 3,
        }
    }
}

impl SvrSearch {
    pub fn disabled() -> Self {
        Self {
            gamma_scales: Vec::new(),
            ..Self::default()
        }
    }

    pub fn is_enabled(&self) -> bool {
        !self.gamma_scales.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_enabled() {
            return Ok(());
        }
        if self.c_values.is_empty() {
            return Err(Error::Config("svr search needs at least one c value".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("svr search needs at least 2 folds".into()));
        }
        if self.gamma_scales.iter().chain(&self.c_values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("svr search values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrCandidate {
    pub gamma: f64,
    pub c: f64,
    pub mse: f64,
}

/// Picks the candidate with the lowest held-out mean squared error (the
/// first one on ties). `parts` holds one entry per validation sequence.
pub fn select_svr(parts: &[ScoreSamples], base: &SvrConfig, search: &SvrSearch) -> Result<(SvrConfig, Vec<SvrCandidate>)> {
    search.validate()?;
    if !search.is_enabled() {
        return Ok((base.clone(), Vec::new()));
    }
    let folds = search.folds.min(parts.len());
    if folds < 2 {
        warn!("{} validation sequence(s) are too few to cross-validate the regressor; using the base settings", parts.len());
        return Ok((base.clone(), Vec::new()));
    }
    let k = parts[0].z.cols().max(1) as f64;
    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let (train, test): (Vec<_>, Vec<_>) = parts.iter().enumerate().partition(|(i, _)| i % folds != f);
        let train: Vec<&ScoreSamples> = train.into_iter().map(|(_, p)| p).collect();
        let test: Vec<&ScoreSamples> = test.into_iter().map(|(_, p)| p).collect();
        splits.push((ScoreSamples::concat(&train)?, ScoreSamples::concat(&test)?));
    }
    let mut candidates = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &g in &search.gamma_scales {
        for &c in &search.c_values {
            let cfg = SvrConfig {
                gamma: Some(g / k),
                c,
                ..base.clone()
            };
            let (mut se, mut n) = (0.0, 0usize);
            for (train, test) in &splits {
                let svr = Svr::fit(&train.z, &train.scores, &cfg)?;
                for (z, s) in test.z.iter_rows().zip(&test.scores) {
                    se += (svr.predict(z)? - s).powi(2);
                    n += 1;
                }
            }
            let mse = se / n as f64;
            if best.is_none_or(|(_, m)| mse < m) {
                best = Some((candidates.len(), mse));
            }
            candidates.push(SvrCandidate { gamma: g / k, c, mse });
        }
    }
    let chosen = &candidates[best.map_or(0, |b| b.0)];
    let config = SvrConfig {
        gamma: Some(chosen.gamma),
        c: chosen.c,
        ..base.clone()
    };
    Ok((config, candidates))
}

/// `(posterior mean, score)` at every step of one sequence, from a fresh state.
pub fn sequence_scores(model: &LstmVae, seq: &Matrix) -> Result<ScoreSamples> {
    let mut z = Vec::with_capacity(seq.rows() * model.latent_dim());
    let mut scores = Vec::with_capacity(seq.rows());
    let mut state = model.initial_state();
    for x in seq.iter_rows() {
        let (s, zt) = super::anomaly_score(model, x, &mut state)?;
        z.extend_from_slice(&zt);
        scores.push(s);
    }
    Ok(ScoreSamples {
        z: Matrix::from_vec(scores.len(), model.latent_dim(), z)?,
        scores,
    })
}

/// [`sequence_scores`] over every sequence, concatenated.
pub fn collect_scores(model: &LstmVae, sequences: &[Matrix]) -> Result<ScoreSamples> {
    if sequences.is_empty() {
        return Err(Error::Empty("no validation sequences for the threshold regressor".into()));
    }
    let parts = sequences
        .iter()
        .map(|s| sequence_scores(model, s))
        .collect::<Result<Vec<_>>>()?;
    let all = ScoreSamples::concat(&parts.iter().collect::<Vec<_>>())?;
    if all.scores.is_empty() {
        return Err(Error::Empty("validation sequences have no steps".into()));
    }
    Ok(all)
}

/// Fits the state-to-expected-score map on validation sequences.
pub fn fit_threshold_regressor(model: &LstmVae, val: &[Matrix], config: &SvrConfig) -> Result<(ThresholdRegressor, ScoreSamples)> {
    let samples = collect_scores(model, val)?;
    let svr = Svr::fit(&samples.z, &samples.scores, config)?;
    Ok((ThresholdRegressor::Svr(svr), samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wiggle(offset: f64) -> ScoreSamples {
        let z: Vec<f64> = (0..40).map(|i| offset + i as f64 / 40.0).collect();
        let scores = z.iter().map(|v| (12.0 * v).sin()).collect();
        ScoreSamples {
            z: Matrix::column(z),
            scores,
        }
    }

    #[test]
    fn search_prefers_a_kernel_that_can_follow_the_target() {
        let parts: Vec<ScoreSamples> = (0..6).map(|i| wiggle(i as f64 * 0.004)).collect();
        let search = SvrSearch {
            gamma_scales: vec![0.01, 100.0],
            c_values: vec![1.0],
            folds: 3,
        };
        let (cfg, cands) = select_svr(&parts, &SvrConfig::default(), &search).unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(cfg.gamma, Some(100.0));
        assert!(cands[1].mse < cands[0].mse);
    }

    #[test]
    fn disabled_search_keeps_the_base_config() {
        let parts = vec![wiggle(0.0)];
        let base = SvrConfig {
            c: 3.0,
            ..SvrConfig::default()
        };
        let (cfg, cands) = select_svr(&parts, &base, &SvrSearch::disabled()).unwrap();
        assert_eq!(cfg, base);
        assert!(cands.is_empty());
        let (cfg, cands) = select_svr(&parts, &base, &SvrSearch::default()).unwrap();
        assert_eq!(cfg, base);
        assert!(cands.is_empty());
    }
}
