use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{train_on_windows, WindowTrainConfig};
use super::windows::{sliding_windows, stack_windows, window_ends, ResidualTrace};
use crate::error::{check_dim, Error, Result};
use crate::model::TrainingHistory;
use crate::nn::{Activation, Dense, Matrix, Parameters, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub window: usize,
    pub hidden: usize,
    pub bottleneck: usize,
    pub train: WindowTrainConfig,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            window: 3,
            hidden: 16,
            bottleneck: 3,
            train: WindowTrainConfig::default(),
        }
    }
}

/// Feed-forward autoencoder over flattened windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowAutoencoder {
    pub window: usize,
    pub layers: [Dense; 4],
}

impl Parameters for WindowAutoencoder {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

impl WindowAutoencoder {
    pub fn new(input: usize, config: &AeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = input * config.window;
        Self {
            window: config.window,
            layers: [
                Dense::new(width, config.hidden, Activation::Tanh, &mut rng),
                Dense::new(config.hidden, config.bottleneck, Activation::Tanh, &mut rng),
                Dense::new(config.bottleneck, config.hidden, Activation::Tanh, &mut rng),
                Dense::new(config.hidden, width, Activation::Identity, &mut rng),
            ],
        }
    }

    pub fn width(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn reconstruct(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut h = w.to_vec();
        for l in &self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Squared reconstruction error of one flattened window.
    pub fn score(&self, w: &[f64]) -> Result<f64> {
        let r = self.reconstruct(w)?;
        Ok(r.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum())
    }

    fn loss_grad(&self, w: &[f64]) -> Result<(f64, Vec<Matrix>)> {
        check_dim("autoencoder window", self.width(), w.len())?;
        let mut tape = Tape::new();
        let vars: Vec<_> = self.layers.iter().map(|l| tape.bind_dense(l)).collect();
        let mut h = tape.constant(w);
        for v in &vars {
            h = tape.dense(*v, h)?;
        }
        let loss = tape.squared_error(h, w)?;
        let grads = tape.backward(loss)?;
        let mut out = Vec::with_capacity(8);
        for (v, l) in vars.iter().zip(&self.layers) {
            out.extend(grads.dense(v, l));
        }
        Ok((tape.scalar(loss)?, out))
    }
}

/// Fitted autoencoder baseline; residual = window score minus the mean
/// validation window score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeDetector {
    pub model: WindowAutoencoder,
    pub mean_validation_score: f64,
    pub residual_range: (f64, f64),
}

impl AeDetector {
    pub fn fit(train: &[Matrix], val: &[Matrix], config: &AeConfig, seed: u64) -> Result<(Self, TrainingHistory)> {
        if config.window == 0 || config.hidden == 0 || config.bottleneck == 0 {
            return Err(Error::Config("autoencoder sizes must be positive".into()));
        }
        let tw = stack_windows(train, config.window)?;
        let vw = stack_windows(val, config.window)?;
        let dim = train[0].cols();
        let mut model = WindowAutoencoder::new(dim, config, seed);
        let history = train_on_windows(
            &mut model,
            &tw,
            &vw,
            &config.train,
            seed.wrapping_add(1),
            |m, w| m.loss_grad(w),
            |m, w| m.score(w),
        )?;
        let scores = vw.iter_rows().map(|w| model.score(w)).collect::<Result<Vec<_>>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let (lo, hi) = scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s - mean), b.max(s - mean)));
        Ok((
            Self {
                model,
                mean_validation_score: mean,
                residual_range: (lo, hi),
            },
            history,
        ))
    }

    pub fn trace(&self, seq: &Matrix) -> Result<ResidualTrace> {
        let w = sliding_windows(seq, self.model.window)?;
        let residuals = w
            .iter_rows()
            .map(|r| Ok(self.model.score(r)? - self.mean_validation_score))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualTrace {
            residuals,
            steps: window_ends(seq.rows(), self.model.window),
        })
    }
}
