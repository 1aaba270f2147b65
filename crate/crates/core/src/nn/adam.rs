use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{check_dim, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated lazily on the first
/// update so one state can follow any parameter list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        check_dim("adam gradient count", params.len(), grads.len())?;
        for (p, g) in params.iter().zip(grads) {
            p.shape_matches(g)?;
        }
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.second_moment = self.first_moment.clone();
        }
        check_dim("adam state", self.first_moment.len(), grads.len())?;

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let iter = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
            for ((pi, gi), (mi, vi)) in iter {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.as_slice())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads
            .iter_mut()
            .flat_map(|g| g.as_mut_slice().iter_mut())
            .for_each(|v| *v *= k);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::column(vec![v])
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Matrix::column(vec![0.5, -1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.update(&mut [&mut p], &[Matrix::zeros(3, 1)]).unwrap();
        }
        assert_eq!(p.as_slice(), &[0.5, -1.0, 2.0]);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.3, -7.0, 1e-3] {
            let mut p = scalar(1.0);
            let mut adam = Adam::new(AdamConfig::default());
            adam.update(&mut [&mut p], &[scalar(g)]).unwrap();
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            let delta = 1.0 - p.as_slice()[0];
            assert!((delta.abs() - expected).abs() < 1e-12, "g={g}");
            assert_eq!(delta.signum(), g.signum());
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default());
        let mut last = 0.0;
        for _ in 0..2 {
            adam.update(&mut [&mut p], &[scalar(2.0)]).unwrap();
            let now = p.as_slice()[0];
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Matrix::zeros(2, 2);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.update(&mut [&mut p], &[Matrix::zeros(4, 1)]).is_err());
        assert!(adam.update(&mut [&mut p], &[]).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![Matrix::column(vec![3.0, 0.0]), Matrix::column(vec![4.0])];
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![Matrix::column(vec![0.1])];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small[0].as_slice(), &[0.1]);
    }
}
