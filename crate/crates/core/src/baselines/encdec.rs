use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{train_on_windows, WindowTrainConfig};
use super::windows::{sliding_windows, stack_windows, window_ends, ResidualTrace};
use crate::error::{check_dim, Error, Result};
use crate::model::TrainingHistory;
use crate::nn::{Activation, Dense, LstmCell, Matrix, Parameters, Tape};

pub const MIN_ERROR_VARIANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncDecConfig {
    pub window: usize,
    pub hidden: usize,
    pub train: WindowTrainConfig,
}

impl Default for EncDecConfig {
    fn default() -> Self {
        Self {
            window: 3,
            hidden: 32,
            train: WindowTrainConfig {
                windows_per_epoch: 2048,
                ..WindowTrainConfig::default()
            },
        }
    }
}

/// LSTM encoder-decoder that rebuilds a window in reverse order: the
/// decoder starts from the encoder's final state, emits the last
/// observation first and feeds each reconstruction back as its next input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncDecModel {
    pub window: usize,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub output: Dense,
}

impl Parameters for EncDecModel {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.encoder.tensors();
        v.extend(self.decoder.tensors());
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.decoder.tensors_mut());
        v.extend(self.output.tensors_mut());
        v
    }
}

impl EncDecModel {
    pub fn new(input: usize, config: &EncDecConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            window: config.window,
            encoder: LstmCell::new(input, config.hidden, &mut rng),
            decoder: LstmCell::new(input, config.hidden, &mut rng),
            output: Dense::new(config.hidden, input, Activation::Identity, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_size()
    }

    /// Reconstruction of a flattened window, in the original order.
    pub fn reconstruct(&self, w: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        check_dim("encoder-decoder window", self.window * d, w.len())?;
        let hsize = self.encoder.hidden_size();
        let (mut h, mut c) = (vec![0.0; hsize], vec![0.0; hsize]);
        for x in w.chunks(d) {
            (h, c) = self.encoder.step(x, &h, &c)?;
        }
        let mut out = vec![0.0; w.len()];
        let mut prev = self.output.forward(&h)?;
        out[(self.window - 1) * d..].copy_from_slice(&prev);
        for i in (0..self.window - 1).rev() {
            (h, c) = self.decoder.step(&prev, &h, &c)?;
            prev = self.output.forward(&h)?;
            out[i * d..(i + 1) * d].copy_from_slice(&prev);
        }
        Ok(out)
    }

    pub fn abs_error(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.reconstruct(w)?.iter().zip(w).map(|(a, b)| (a - b).abs()).collect())
    }

    fn squared_error(&self, w: &[f64]) -> Result<f64> {
        Ok(self.reconstruct(w)?.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum())
    }

    fn loss_grad(&self, w: &[f64]) -> Result<(f64, Vec<Matrix>)> {
        let d = self.input_dim();
        check_dim("encoder-decoder window", self.window * d, w.len())?;
        let hsize = self.encoder.hidden_size();
        let mut tape = Tape::new();
        let enc = tape.bind_lstm(&self.encoder);
        let dec = tape.bind_lstm(&self.decoder);
        let out = tape.bind_dense(&self.output);
        let mut state = tape.constant(&vec![0.0; 2 * hsize]);
        for x in w.chunks(d) {
            let xv = tape.constant(x);
            state = tape.lstm(enc, xv, state)?;
        }
        let h = tape.slice(state, 0, hsize)?;
        let mut prev = tape.dense(out, h)?;
        let mut loss = tape.squared_error(prev, &w[(self.window - 1) * d..])?;
        for i in (0..self.window - 1).rev() {
            state = tape.lstm(dec, prev, state)?;
            let h = tape.slice(state, 0, hsize)?;
            prev = tape.dense(out, h)?;
            let term = tape.squared_error(prev, &w[i * d..(i + 1) * d])?;
            loss = tape.add(loss, term)?;
        }
        let grads = tape.backward(loss)?;
        let mut g: Vec<Matrix> = grads.lstm(&enc, &self.encoder).into();
        g.extend(grads.lstm(&dec, &self.decoder));
        g.extend(grads.dense(&out, &self.output));
        Ok((tape.scalar(loss)?, g))
    }
}

/// Diagonal Gaussian over reconstruction-error vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ErrorModel {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        check_dim("error model variance", mean.len(), var.len())?;
        let var = var.into_iter().map(|v| v.max(MIN_ERROR_VARIANCE)).collect();
        Ok(Self { mean, var })
    }

    pub fn fit(errors: &Matrix) -> Result<Self> {
        if errors.rows() == 0 {
            return Err(Error::Empty("no error vectors to fit".into()));
        }
        let n = errors.rows() as f64;
        let mut mean = vec![0.0; errors.cols()];
        for r in errors.iter_rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; errors.cols()];
        for r in errors.iter_rows() {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        Self::new(mean, var)
    }

    /// `(e - mean)' diag(var)^-1 (e - mean)`.
    pub fn mahalanobis(&self, e: &[f64]) -> Result<f64> {
        check_dim("error vector", self.mean.len(), e.len())?;
        Ok(e.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| (x - m).powi(2) / v)
            .sum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncDecDetector {
    pub model: EncDecModel,
    pub errors: ErrorModel,
    pub mean_validation_score: f64,
    pub residual_range: (f64, f64),
}

impl EncDecDetector {
    pub fn fit(train: &[Matrix], val: &[Matrix], config: &EncDecConfig, seed: u64) -> Result<(Self, TrainingHistory)> {
        if config.window == 0 || config.hidden == 0 {
            return Err(Error::Config("encoder-decoder sizes must be positive".into()));
        }
        let tw = stack_windows(train, config.window)?;
        let vw = stack_windows(val, config.window)?;
        let mut model = EncDecModel::new(train[0].cols(), config, seed);
        let history = train_on_windows(
            &mut model,
            &tw,
            &vw,
            &config.train,
            seed.wrapping_add(1),
            |m, w| m.loss_grad(w),
            |m, w| m.squared_error(w),
        )?;
        let mut err = Vec::with_capacity(vw.len());
        for w in vw.iter_rows() {
            err.extend(model.abs_error(w)?);
        }
        let err = Matrix::from_vec(vw.rows(), vw.cols(), err)?;
        let errors = ErrorModel::fit(&err)?;
        let scores = err
            .iter_rows()
            .map(|e| errors.mahalanobis(e))
            .collect::<Result<Vec<_>>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let (lo, hi) = scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s - mean), b.max(s - mean)));
        Ok((
            Self {
                model,
                errors,
                mean_validation_score: mean,
                residual_range: (lo, hi),
            },
            history,
        ))
    }

    pub fn score_window(&self, w: &[f64]) -> Result<f64> {
        self.errors.mahalanobis(&self.model.abs_error(w)?)
    }

    pub fn trace(&self, seq: &Matrix) -> Result<ResidualTrace> {
        let w = sliding_windows(seq, self.model.window)?;
        let residuals = w
            .iter_rows()
            .map(|r| Ok(self.score_window(r)? - self.mean_validation_score))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualTrace {
            residuals,
            steps: window_ends(seq.rows(), self.model.window),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mahalanobis_fixtures() {
        let em = ErrorModel::new(vec![1.0, -2.0, 0.5], vec![4.0, 1.0, 0.25]).unwrap();
        assert_eq!(em.mahalanobis(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
        assert!((em.mahalanobis(&[3.0, -1.0, 1.0]).unwrap() - 3.0).abs() < 1e-12);
        let floored = ErrorModel::new(vec![0.0], vec![0.0]).unwrap();
        assert_eq!(floored.var[0], MIN_ERROR_VARIANCE);
    }
}
