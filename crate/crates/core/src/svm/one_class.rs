use serde::{Deserialize, Serialize};

use super::kernel::Rbf;
use super::smo::{solve, SignedGram, SmoSettings};
use crate::error::{check_dim, Error, Result};
use crate::nn::Matrix;

/// Kernel width selection for the one-class SVM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `1 / (dim * var(x))` over all training entries.
    Scale,
    Fixed(f64),
}

impl GammaRule {
    pub fn resolve(&self, x: &Matrix) -> f64 {
        match *self {
            GammaRule::Fixed(g) => g,
            GammaRule::Scale => {
                let n = x.len() as f64;
                let mean = x.as_slice().iter().sum::<f64>() / n;
                let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (x.cols() as f64 * var)
                } else {
                    1.0
                }
            }
        }
    }
}

/// Training set with its Gram matrix, reusable across many `nu` values.
pub struct OneClassProblem {
    x: Matrix,
    kernel: Rbf,
    gram: Vec<f64>,
    tolerance: f64,
}

/// Dual solution over the full training set.
#[derive(Clone, Debug, PartialEq)]
pub struct OneClassSolution {
    pub nu: f64,
    pub alpha: Vec<f64>,
    pub rho: f64,
}

impl OneClassSolution {
    pub fn num_support(&self) -> usize {
        self.alpha.iter().filter(|a| **a > 0.0).count()
    }

    /// Decision values for queries whose kernel rows against the training
    /// set are given (`rows x n`, row-major).
    pub fn decisions_from_cross(&self, cross: &[f64]) -> Vec<f64> {
        cross
            .chunks(self.alpha.len())
            .map(|k| k.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>() - self.rho)
            .collect()
    }
}

impl OneClassProblem {
    pub fn new(x: Matrix, gamma: GammaRule) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Empty("one-class training set is empty".into()));
        }
        if !x.is_finite() {
            return Err(Error::Domain("one-class training data must be finite".into()));
        }
        let kernel = Rbf::new(gamma.resolve(&x));
        if !(kernel.gamma > 0.0 && kernel.gamma.is_finite()) {
            return Err(Error::Config(format!("kernel gamma must be positive, got {}", kernel.gamma)));
        }
        let gram = kernel.gram(&x);
        Ok(Self {
            x,
            kernel,
            gram,
            tolerance: 1e-3,
        })
    }

    pub fn kernel(&self) -> Rbf {
        self.kernel
    }

    pub fn training(&self) -> &Matrix {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Kernel rows of `queries` against the training set.
    pub fn cross(&self, queries: &Matrix) -> Result<Vec<f64>> {
        check_dim("one-class query", self.x.cols(), queries.cols())?;
        Ok(self.kernel.cross(queries, &self.x))
    }

    pub fn solve(&self, nu: f64) -> Result<OneClassSolution> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Domain(format!("nu must lie in (0, 1], got {nu}")));
        }
        let n = self.x.rows();
        let budget = nu * n as f64;
        let full = (budget.floor() as usize).min(n);
        let mut alpha = vec![0.0; n];
        alpha[..full].iter_mut().for_each(|a| *a = 1.0);
        if full < n {
            alpha[full] = budget - full as f64;
        }
        let q = SignedGram {
            gram: &self.gram,
            n,
            index: (0..n).collect(),
            sign: vec![1.0; n],
        };
        let sol = solve(
            &q,
            &vec![0.0; n],
            1.0,
            alpha,
            SmoSettings {
                tolerance: self.tolerance,
                max_iter: 10_000_000.max(200 * n),
            },
        );
        if !sol.converged {
            log::warn!("one-class solver hit its iteration cap at nu={nu}");
        }
        Ok(OneClassSolution {
            nu,
            alpha: sol.alpha,
            rho: sol.rho,
        })
    }

    pub fn model(&self, sol: &OneClassSolution) -> Result<OneClassSvm> {
        check_dim("one-class coefficients", self.x.rows(), sol.alpha.len())?;
        let mut rows = Vec::new();
        let mut coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                rows.push(self.x.row(i));
                coef.push(a);
            }
        }
        let support = if rows.is_empty() {
            Matrix::zeros(0, self.x.cols())
        } else {
            Matrix::from_rows(&rows)?
        };
        Ok(OneClassSvm {
            kernel: self.kernel,
            support,
            coef,
            rho: sol.rho,
            nu: sol.nu,
        })
    }
}

/// Fitted one-class SVM; `decision >= 0` inside the learned support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvm {
    pub kernel: Rbf,
    pub support: Matrix,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
}

impl OneClassSvm {
    pub fn fit(x: &Matrix, nu: f64, gamma: GammaRule) -> Result<Self> {
        let problem = OneClassProblem::new(x.clone(), gamma)?;
        let sol = problem.solve(nu)?;
        problem.model(&sol)
    }

    pub fn decision(&self, q: &[f64]) -> Result<f64> {
        check_dim("one-class query", self.support.cols(), q.len())?;
        Ok(self
            .support
            .iter_rows()
            .zip(&self.coef)
            .map(|(sv, a)| a * self.kernel.eval(sv, q))
            .sum::<f64>()
            - self.rho)
    }

    pub fn num_support(&self) -> usize {
        self.coef.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cluster(n: usize, sigma: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 2)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                sigma * e
            })
            .collect();
        Matrix::from_vec(n, 2, data).unwrap()
    }

    #[test]
    fn outlier_is_rejected_and_centroid_accepted() {
        let x = cluster(200, 0.1, 0);
        let svm = OneClassSvm::fit(&x, 0.05, GammaRule::Scale).unwrap();
        assert!(svm.decision(&[1.0, 0.0]).unwrap() < 0.0);
        assert!(svm.decision(&[0.0, 0.0]).unwrap() >= 0.0);
    }

    #[test]
    fn nu_one_makes_every_point_a_support_vector() {
        let x = cluster(50, 1.0, 1);
        let svm = OneClassSvm::fit(&x, 1.0, GammaRule::Scale).unwrap();
        assert_eq!(svm.num_support(), 50);
        assert!(svm.coef.iter().all(|a| (*a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dual_constraints_hold() {
        let problem = OneClassProblem::new(cluster(120, 1.0, 2), GammaRule::Fixed(0.5)).unwrap();
        let sol = problem.solve(0.3).unwrap();
        let total: f64 = sol.alpha.iter().sum();
        assert!((total - 0.3 * 120.0).abs() < 1e-9);
        assert!(sol.alpha.iter().all(|a| (0.0..=1.0).contains(a)));
        let direct = problem.model(&sol).unwrap();
        let q = Matrix::from_rows(&[&[0.4, -0.2][..]]).unwrap();
        let via_cross = sol.decisions_from_cross(&problem.cross(&q).unwrap());
        assert!((via_cross[0] - direct.decision(&[0.4, -0.2]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_nu() {
        let problem = OneClassProblem::new(cluster(10, 1.0, 3), GammaRule::Scale).unwrap();
        assert!(problem.solve(0.0).is_err());
        assert!(problem.solve(1.5).is_err());
    }
}
