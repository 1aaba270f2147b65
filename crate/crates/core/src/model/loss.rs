use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        check_dim("gaussian variance", mean.len(), var.len())?;
        check_positive(&var)?;
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_positive(var: &[f64]) -> Result<()> {
    match var.iter().find(|v| !(**v > 0.0)) {
        Some(v) => Err(Error::Domain(format!("variance must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// `KL(N(mean, diag(var)) || N(prior, I))`.
pub fn kl_term(q: &DiagGaussian, prior_mean: &[f64]) -> Result<f64> {
    kl_raw(&q.mean, &q.var, prior_mean)
}

/// Negative log-likelihood of `x` under `r`.
pub fn gaussian_nll(x: &[f64], r: &DiagGaussian) -> Result<f64> {
    gaussian_nll_raw(x, &r.mean, &r.var)
}

pub(crate) fn kl_raw(mean: &[f64], var: &[f64], prior: &[f64]) -> Result<f64> {
    check_dim("kl variance", mean.len(), var.len())?;
    check_dim("prior mean", mean.len(), prior.len())?;
    check_positive(var)?;
    let total: f64 = mean
        .iter()
        .zip(var)
        .zip(prior)
        .map(|((m, v), p)| v + (p - m) * (p - m) - 1.0 - v.ln())
        .sum();
    Ok(0.5 * total)
}

pub(crate) fn gaussian_nll_raw(x: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    check_dim("likelihood mean", x.len(), mean.len())?;
    check_dim("likelihood variance", x.len(), var.len())?;
    check_positive(var)?;
    let total: f64 = x
        .iter()
        .zip(mean)
        .zip(var)
        .map(|((xi, m), v)| v.ln() + (xi - m) * (xi - m) / v + LN_2PI)
        .sum();
    Ok(0.5 * total)
}
