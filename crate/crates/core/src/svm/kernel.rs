use serde::{Deserialize, Serialize};

use crate::nn::matrix::sq_dist;
use crate::nn::Matrix;

/// Gaussian RBF kernel `exp(-gamma * |a - b|^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rbf {
    pub gamma: f64,
}

impl Rbf {
    pub fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.gamma * sq_dist(a, b)).exp()
    }

    /// Symmetric `n x n` Gram matrix of the rows of `x`, row-major.
    pub fn gram(&self, x: &Matrix) -> Vec<f64> {
        let n = x.rows();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in 0..i {
                let v = self.eval(x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// `a.rows() x b.rows()` cross-kernel, row-major.
    pub fn cross(&self, a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut k = Vec::with_capacity(a.rows() * b.rows());
        for ra in a.iter_rows() {
            k.extend(b.iter_rows().map(|rb| self.eval(ra, rb)));
        }
        k
    }
}
