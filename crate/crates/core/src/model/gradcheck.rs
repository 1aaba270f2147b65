use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::LstmVaeConfig;
use super::lstm_vae::{LstmVae, SequenceNoise};
use crate::error::Result;
use crate::nn::{Matrix, Parameters};

/// Worst relative error between the analytic gradient of the training loss
/// and central differences with step `h`, noise held fixed. Magnitudes
/// below `floor` are compared absolutely.
pub fn max_relative_error(model: &LstmVae, seq: &Matrix, noise: &SequenceNoise, h: f64, floor: f64) -> Result<f64> {
    let (_, grads) = model.loss_and_gradient(seq, noise)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors()[k].as_slice()[i];
            probe.tensors_mut()[k].as_mut_slice()[i] = orig + h;
            let plus = probe.loss_and_gradient(seq, noise)?.0;
            probe.tensors_mut()[k].as_mut_slice()[i] = orig - h;
            let minus = probe.loss_and_gradient(seq, noise)?.0;
            probe.tensors_mut()[k].as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = g.as_slice()[i];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// A random small model, sequence and frozen noise draw.
pub fn random_instance(seed: u64) -> Result<(LstmVae, Matrix, SequenceNoise)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..=5);
    let dim = rng.random_range(1..=3);
    let latent = rng.random_range(1..=2);
    let config = LstmVaeConfig {
        input_dim: dim,
        latent_dim: latent,
        encoder_hidden: rng.random_range(latent..=4),
        decoder_hidden: rng.random_range(latent..=4),
        seed,
        ..LstmVaeConfig::default()
    };
    let model = LstmVae::with_rng(config, len, &mut rng)?;
    let data = (0..len * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let seq = Matrix::from_vec(len, dim, data)?;
    let noise = SequenceNoise::sample(len, dim, latent, 0.1, &mut rng);
    Ok((model, seq, noise))
}
