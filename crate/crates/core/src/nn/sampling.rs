use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Standard normal draws.
pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Reparameterized draw from `N(mean, diag(var))`: `mean + sqrt(var) * eps`.
pub fn sample_diag_gaussian<R: Rng + ?Sized>(
    mean: &[f64],
    var: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim("gaussian variance", mean.len(), var.len())?;
    if let Some(v) = var.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("variance must be non-negative, got {v}")));
    }
    let eps = standard_normal(mean.len(), rng);
    Ok(mean
        .iter()
        .zip(var)
        .zip(&eps)
        .map(|((m, v), e)| m + v.sqrt() * e)
        .collect())
}
