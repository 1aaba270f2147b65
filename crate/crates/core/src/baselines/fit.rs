use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EarlyStopping, EpochStats, Progress, TrainingHistory};
use crate::nn::{clip_global_norm, Adam, AdamConfig, Matrix, Parameters};
use crate::svm::svr::stride_indices;

/// Minibatch schedule shared by the window-based baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowTrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    /// Windows drawn (without replacement) per epoch.
    pub windows_per_epoch: usize,
    /// Validation windows, thinned by an even stride.
    pub validation_windows: usize,
    pub grad_clip: f64,
}

impl Default for WindowTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 60,
            patience: 4,
            min_delta: 1e-5,
            batch_size: 32,
            windows_per_epoch: 4096,
            validation_windows: 2048,
            grad_clip: 5.0,
        }
    }
}

impl WindowTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "window training needs positive learning_rate, max_epochs, patience and batch_size".into(),
            ));
        }
        if self.windows_per_epoch == 0 || self.validation_windows == 0 {
            return Err(Error::Config("window counts must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with early stopping on the mean per-window validation loss.
pub(crate) fn train_on_windows<M, G, L>(
    model: &mut M,
    train: &Matrix,
    val: &Matrix,
    config: &WindowTrainConfig,
    seed: u64,
    loss_grad: G,
    loss: L,
) -> Result<TrainingHistory>
where
    M: Parameters + Clone,
    G: Fn(&M, &[f64]) -> Result<(f64, Vec<Matrix>)>,
    L: Fn(&M, &[f64]) -> Result<f64>,
{
    config.validate()?;
    if train.rows() == 0 || val.rows() == 0 {
        return Err(Error::Empty("no windows to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let val_rows = stride_indices(val.rows(), config.validation_windows);
    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut history = TrainingHistory::default();
    let mut best = model.clone();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let take = config.windows_per_epoch.min(order.len());
        let mut total = 0.0;
        for batch in order[..take].chunks(config.batch_size) {
            let mut acc: Option<Vec<Matrix>> = None;
            for &i in batch {
                let (l, g) = loss_grad(model, train.row(i))?;
                total += l;
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => {
                        for (x, y) in a.iter_mut().zip(&g) {
                            x.as_mut_slice().iter_mut().zip(y.as_slice()).for_each(|(p, q)| *p += q);
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            grads
                .iter_mut()
                .flat_map(|g| g.as_mut_slice().iter_mut())
                .for_each(|v| *v *= scale);
            clip_global_norm(&mut grads, config.grad_clip);
            adam.update(&mut model.tensors_mut(), &grads)?;
        }
        let mut val_loss = 0.0;
        for &i in &val_rows {
            val_loss += loss(model, val.row(i))?;
        }
        val_loss /= val_rows.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Domain(format!("validation loss diverged at epoch {epoch}")));
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss: total / take as f64,
            val_loss,
        });
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
    *model = best;
    Ok(history)
}
