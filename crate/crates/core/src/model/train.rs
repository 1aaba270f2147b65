use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::LstmVaeConfig;
use super::lstm_vae::{LstmVae, SequenceNoise};
use crate::error::{Error, Result};
use crate::nn::layers::Parameters;
use crate::nn::{clip_global_norm, Adam, AdamConfig, Matrix};

/// Patience-based early stopping on a loss that should decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    epochs_seen: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Stale,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience: patience.max(1),
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs_seen: 0,
            stale: 0,
        }
    }

    /// Records one epoch's loss. Returns `Stop` once `patience` consecutive
    /// epochs failed to beat the best loss by more than `min_delta`.
    pub fn observe(&mut self, loss: f64) -> Progress {
        self.epochs_seen += 1;
        if loss.is_finite() && loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = self.epochs_seen;
            self.stale = 0;
            Progress::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Progress::Stop
            } else {
                Progress::Stale
            }
        }
    }

    /// 1-based epoch of the best loss so far (0 before any improvement).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .get(self.best_epoch.checked_sub(1)?)
            .map(|e| e.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }
}

pub(crate) fn check_sequences(sets: &[(&str, &[Matrix])]) -> Result<(usize, usize)> {
    let mut shape = None;
    for (name, set) in sets {
        if set.is_empty() {
            return Err(Error::Empty(format!("{name} set has no sequences")));
        }
        for s in set.iter() {
            let this = (s.rows(), s.cols());
            if this.0 == 0 {
                return Err(Error::Empty(format!("{name} set contains an empty sequence")));
            }
            match shape {
                None => shape = Some(this),
                Some(expected) if expected != this => {
                    return Err(Error::Contract(format!(
                        "sequences must share one length and channel count: {}x{} vs {}x{}",
                        expected.0, expected.1, this.0, this.1
                    )))
                }
                _ => {}
            }
        }
    }
    shape.ok_or_else(|| Error::Empty("no sequences".into()))
}

/// Mean deterministic loss over `set`.
pub fn mean_validation_loss(model: &LstmVae, set: &[Matrix]) -> Result<f64> {
    let mut total = 0.0;
    for s in set {
        total += model.deterministic_loss(s)?;
    }
    Ok(total / set.len() as f64)
}

/// Trains an LSTM-VAE from scratch on non-anomalous sequences.
pub fn train(train_set: &[Matrix], val_set: &[Matrix], config: &LstmVaeConfig) -> Result<(LstmVae, TrainingHistory)> {
    train_from(None, train_set, val_set, config)
}

/// Trains starting from `init` when given (fine-tuning), otherwise from a
/// fresh model. Returns the parameters of the best validation epoch.
pub fn train_from(
    init: Option<&LstmVae>,
    train_set: &[Matrix],
    val_set: &[Matrix],
    config: &LstmVaeConfig,
) -> Result<(LstmVae, TrainingHistory)> {
    let (len, dim) = check_sequences(&[("training", train_set), ("validation", val_set)])?;
    let mut config = config.clone();
    if config.input_dim == 0 {
        config.input_dim = dim;
    }
    config.validate()?;
    if config.input_dim != dim {
        return Err(Error::dim("training channels", config.input_dim, dim));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = match init {
        Some(m) => {
            if m.input_dim() != dim || m.sequence_len() != len {
                return Err(Error::Contract(
                    "initial model does not match the fine-tuning data shape".into(),
                ));
            }
            let mut m = m.clone();
            m.config = LstmVaeConfig {
                input_dim: dim,
                ..config.clone()
            };
            m
        }
        None => LstmVae::with_rng(config.clone(), len, &mut rng)?,
    };

    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut history = TrainingHistory::default();
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let k = config.latent_dim;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut sum: Option<Vec<Matrix>> = None;
            for &i in batch {
                let noise = SequenceNoise::sample(len, dim, k, config.noise_std, &mut rng);
                let (loss, grads) = model.loss_and_gradient(&train_set[i], &noise)?;
                epoch_loss += loss;
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = sum.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            grads
                .iter_mut()
                .flat_map(|g| g.as_mut_slice().iter_mut())
                .for_each(|v| *v *= scale);
            clip_global_norm(&mut grads, config.grad_clip);
            adam.update(&mut model.tensors_mut(), &grads)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = mean_validation_loss(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Domain(format!("validation loss diverged at epoch {epoch}")));
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4}");
        match stopper.observe(val_loss) {
            Progress::Improved => best = model.clone(),
            Progress::Stale => {}
            Progress::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((best, history))
}

/// Two-phase regime: train on a pre-training pool, then fine-tune on the
/// target training set with a fresh optimizer.
pub fn pretrain_then_finetune(
    pretrain_set: &[Matrix],
    train_set: &[Matrix],
    val_set: &[Matrix],
    config: &LstmVaeConfig,
) -> Result<(LstmVae, TrainingHistory, TrainingHistory)> {
    let (pre, pre_hist) = train_from(None, pretrain_set, val_set, config)?;
    let (tuned, hist) = train_from(Some(&pre), train_set, val_set, config)?;
    Ok((tuned, pre_hist, hist))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_counts_consecutive_stale_epochs() {
        let mut es = EarlyStopping::new(4, 1e-4);
        let outcome: Vec<Progress> = [5.0; 5].iter().map(|l| es.observe(*l)).collect();
        assert_eq!(
            outcome,
            vec![Progress::Improved, Progress::Stale, Progress::Stale, Progress::Stale, Progress::Stop]
        );
        assert_eq!(es.best_epoch(), 1);
    }

    #[test]
    fn improvements_below_tolerance_do_not_reset() {
        let mut es = EarlyStopping::new(2, 1e-4);
        assert_eq!(es.observe(1.0), Progress::Improved);
        assert_eq!(es.observe(1.0 - 5e-5), Progress::Stale);
        assert_eq!(es.observe(0.5), Progress::Improved);
        assert_eq!(es.observe(f64::NAN), Progress::Stale);
        assert_eq!(es.observe(0.6), Progress::Stop);
        assert_eq!(es.best_epoch(), 3);
    }

    #[test]
    fn rejects_empty_and_ragged_sets() {
        let a = Matrix::zeros(5, 2);
        let b = Matrix::zeros(6, 2);
        let cfg = LstmVaeConfig::default();
        assert!(matches!(train(&[], &[a.clone()], &cfg), Err(Error::Empty(_))));
        assert!(matches!(train(&[a.clone()], &[], &cfg), Err(Error::Empty(_))));
        assert!(matches!(train(&[a.clone(), b], &[a], &cfg), Err(Error::Contract(_))));
    }
}
