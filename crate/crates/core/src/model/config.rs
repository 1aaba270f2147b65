use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prior endpoint: either one value repeated across latent dimensions or
/// an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Fill(f64),
    Vector(Vec<f64>),
}

impl Endpoint {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Endpoint::Fill(v) => Ok(vec![*v; dim]),
            Endpoint::Vector(v) if v.len() == dim => Ok(v.clone()),
            Endpoint::Vector(v) => Err(Error::Config(format!(
                "prior endpoint has {} entries but the latent dimension is {dim}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmVaeConfig {
    /// Input channels; 0 means "infer from the training data".
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Standard deviation of the Gaussian input corruption during training.
    pub noise_std: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum validation improvement that resets the patience counter.
    pub min_delta: f64,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub prior_start: Endpoint,
    pub prior_end: Endpoint,
    pub seed: u64,
}

impl Default for LstmVaeConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            latent_dim: 3,
            encoder_hidden: 32,
            decoder_hidden: 32,
            noise_std: 0.1,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 4,
            min_delta: 1e-4,
            batch_size: 16,
            grad_clip: 5.0,
            prior_start: Endpoint::Fill(0.0),
            prior_end: Endpoint::Fill(2.0),
            seed: 0,
        }
    }
}

impl LstmVaeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1");
        }
        if self.encoder_hidden < self.latent_dim || self.decoder_hidden < self.latent_dim {
            return fail("hidden sizes must be at least latent_dim");
        }
        if !(self.noise_std >= 0.0) {
            return fail("noise_std must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be at least 1");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip must be positive");
        }
        self.prior_start.resolve(self.latent_dim)?;
        self.prior_end.resolve(self.latent_dim)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        LstmVaeConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bad = [
            LstmVaeConfig { latent_dim: 0, ..Default::default() },
            LstmVaeConfig { encoder_hidden: 2, ..Default::default() },
            LstmVaeConfig { noise_std: -0.1, ..Default::default() },
            LstmVaeConfig { patience: 0, ..Default::default() },
            LstmVaeConfig { prior_end: Endpoint::Vector(vec![1.0]), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn endpoint_forms_parse() {
        #[derive(Deserialize)]
        struct W {
            a: Endpoint,
            b: Endpoint,
        }
        let w: W = toml::from_str("a = 2.0\nb = [0.0, 1.0, 2.0]").unwrap();
        assert_eq!(w.a.resolve(3).unwrap(), vec![2.0; 3]);
        assert_eq!(w.b.resolve(3).unwrap(), vec![0.0, 1.0, 2.0]);
    }
}
