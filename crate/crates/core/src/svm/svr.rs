use serde::{Deserialize, Serialize};

use super::kernel::Rbf;
use super::smo::{solve, SignedGram, SmoSettings};
use crate::error::{check_dim, Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    /// Box constraint on the dual coefficients.
    pub c: f64,
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// Kernel width; `None` means `1 / input_dim`.
    pub gamma: Option<f64>,
    /// Training pairs beyond this are thinned by an even stride.
    pub max_points: usize,
    pub tolerance: f64,
    /// Fit on targets scaled to zero mean and unit variance, so `c` and
    /// `epsilon` are in units of the target spread.
    pub standardize: bool,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: None,
            max_points: 1000,
            tolerance: 1e-3,
            standardize: true,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("svr c must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("svr epsilon must be non-negative, got {}", self.epsilon)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("svr gamma must be positive, got {g}")));
            }
        }
        if self.max_points < 2 {
            return Err(Error::Config("svr max_points must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("svr tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted epsilon-SVR: `f(z) = sum_i coef_i k(z, sv_i) + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Svr {
    pub kernel: Rbf,
    pub support: Matrix,
    pub coef: Vec<f64>,
    pub bias: f64,
}

/// Even-stride subset of `0..n` with at most `max` elements.
pub(crate) fn stride_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|k| k * n / max).collect()
}

impl Svr {
    pub fn from_parts(kernel: Rbf, support: Matrix, coef: Vec<f64>, bias: f64) -> Result<Self> {
        check_dim("svr coefficients", support.rows(), coef.len())?;
        Ok(Self {
            kernel,
            support,
            coef,
            bias,
        })
    }

    pub fn fit(x: &Matrix, y: &[f64], config: &SvrConfig) -> Result<Self> {
        config.validate()?;
        check_dim("svr targets", x.rows(), y.len())?;
        if x.rows() == 0 {
            return Err(Error::Empty("svr training set is empty".into()));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("svr training data must be finite".into()));
        }
        let keep = stride_indices(x.rows(), config.max_points);
        let rows: Vec<&[f64]> = keep.iter().map(|&i| x.row(i)).collect();
        let xs = Matrix::from_rows(&rows)?;
        let mut ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
        let n = xs.rows();
        let (offset, scale) = if config.standardize {
            let mean = ys.iter().sum::<f64>() / n as f64;
            let sd = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        ys.iter_mut().for_each(|v| *v = (*v - offset) / scale);
        let kernel = Rbf::new(config.gamma.unwrap_or(1.0 / x.cols().max(1) as f64));
        let gram = kernel.gram(&xs);

        let q = SignedGram {
            gram: &gram,
            n,
            index: (0..2 * n).map(|i| i % n).collect(),
            sign: (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect(),
        };
        let p: Vec<f64> = (0..2 * n)
            .map(|i| if i < n { config.epsilon - ys[i] } else { config.epsilon + ys[i - n] })
            .collect();
        let sol = solve(
            &q,
            &p,
            config.c,
            vec![0.0; 2 * n],
            SmoSettings {
                tolerance: config.tolerance,
                max_iter: 10_000_000.max(200 * n),
            },
        );
        if !sol.converged {
            log::warn!("svr solver hit its iteration cap");
        }

        let mut support = Vec::new();
        let mut coef = Vec::new();
        for i in 0..n {
            let c = sol.alpha[i] - sol.alpha[i + n];
            if c != 0.0 {
                support.push(xs.row(i));
                coef.push(c * scale);
            }
        }
        let support = if support.is_empty() {
            Matrix::zeros(0, xs.cols())
        } else {
            Matrix::from_rows(&support)?
        };
        Ok(Self {
            kernel,
            support,
            coef,
            bias: offset - scale * sol.rho,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.support.cols()
    }

    pub fn num_support(&self) -> usize {
        self.coef.len()
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        check_dim("svr query", self.support.cols(), z.len())?;
        Ok(self
            .support
            .iter_rows()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_targets_fit_within_tube() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<f64> = (0..200 * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Matrix::from_vec(200, 3, data).unwrap();
        let svr = Svr::fit(&x, &vec![1.7; 200], &SvrConfig::default()).unwrap();
        for probe in [[0.0, 0.0, 0.0], [1.5, -1.0, 0.3], [5.0, 5.0, 5.0]] {
            assert!((svr.predict(&probe).unwrap() - 1.7).abs() <= 0.1 + 1e-9);
        }
    }

    #[test]
    fn separated_clusters_recover_their_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (center, level) in [(-3.0, 1.0), (3.0, 3.0)] {
            for _ in 0..100 {
                rows.push(vec![center + rng.random_range(-0.3..0.3), center + rng.random_range(-0.3..0.3)]);
                y.push(level);
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = Matrix::from_rows(&refs).unwrap();
        let svr = Svr::fit(&x, &y, &SvrConfig::default()).unwrap();
        assert!((svr.predict(&[-3.0, -3.0]).unwrap() - 1.0).abs() < 0.2);
        assert!((svr.predict(&[3.0, 3.0]).unwrap() - 3.0).abs() < 0.2);
        let again = Svr::fit(&x, &y, &SvrConfig::default()).unwrap();
        assert_eq!(svr, again);
    }

    #[test]
    fn prediction_is_a_kernel_sum() {
        let support = Matrix::from_rows(&[&[-1.0][..], &[1.0][..]]).unwrap();
        let svr = Svr::from_parts(Rbf::new(1.0), support, vec![1.0, 1.0], 0.25).unwrap();
        assert!((svr.predict(&[0.0]).unwrap() - (2.0 * (-1.0f64).exp() + 0.25)).abs() < 1e-12);
        assert!((svr.predict(&[1e6]).unwrap() - 0.25).abs() < 1e-12);
        let single = Svr::from_parts(Rbf::new(1.0), Matrix::from_rows(&[&[2.0][..]]).unwrap(), vec![1.0], 0.0).unwrap();
        assert_eq!(single.predict(&[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn stride_thins_evenly() {
        assert_eq!(stride_indices(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(stride_indices(10, 5), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn rejects_bad_input() {
        let x = Matrix::zeros(3, 2);
        assert!(Svr::fit(&x, &[1.0, 2.0], &SvrConfig::default()).is_err());
        assert!(Svr::fit(&Matrix::zeros(0, 2), &[], &SvrConfig::default()).is_err());
        let bad = SvrConfig {
            c: -1.0,
            ..SvrConfig::default()
        };
        assert!(Svr::fit(&x, &[1.0; 3], &bad).is_err());
    }
}
