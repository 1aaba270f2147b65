use serde::{Deserialize, Serialize};

use super::windows::{sliding_windows, stack_windows, window_ends, ResidualTrace};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::svm::svr::stride_indices;
use crate::svm::{GammaRule, OneClassProblem, OneClassSolution, OneClassSvm};

/// What the sensitivity sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsvmKnob {
    /// Re-solve over a grid of `nu` (support-vector fraction bound).
    Nu,
    /// Fixed `nu`, shift the decision boundary.
    Offset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OsvmConfig {
    pub window: usize,
    /// Training windows beyond this are thinned by an even stride.
    pub max_train_windows: usize,
    pub gamma: GammaRule,
    pub knob: OsvmKnob,
    pub nu_min: f64,
    pub nu_max: f64,
    pub sweep_points: usize,
    /// `nu` used by the offset sweep.
    pub offset_nu: f64,
}

impl Default for OsvmConfig {
    fn default() -> Self {
        Self {
            window: 3,
            max_train_windows: 1000,
            gamma: GammaRule::Scale,
            knob: OsvmKnob::Nu,
            nu_min: 1e-3,
            nu_max: 1.0,
            sweep_points: 41,
            offset_nu: 0.05,
        }
    }
}

impl OsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.max_train_windows < 2 || self.sweep_points < 2 {
            return Err(Error::Config("osvm window, max_train_windows and sweep_points are too small".into()));
        }
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(self.nu_min) || !ok(self.nu_max) || self.nu_min > self.nu_max || !ok(self.offset_nu) {
            return Err(Error::Config("osvm nu bounds must satisfy 0 < nu_min <= nu_max <= 1".into()));
        }
        Ok(())
    }

    /// Log-spaced `nu` values from `nu_min` to `nu_max`.
    pub fn nu_grid(&self) -> Vec<f64> {
        let (a, b) = (self.nu_min.ln(), self.nu_max.ln());
        let n = self.sweep_points;
        (0..n)
            .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp().min(1.0))
            .collect()
    }
}

/// Execution-level verdicts along a method-specific sensitivity grid;
/// `flags[k][i]` is the verdict for execution `i` at grid point `k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepVerdicts {
    pub knob: Vec<f64>,
    pub flags: Vec<Vec<bool>>,
    pub first: Vec<Vec<Option<usize>>>,
}

/// One-class SVM over flattened windows; an execution is flagged when any
/// window falls outside the learned support.
pub struct OsvmDetector {
    pub window: usize,
    problem: OneClassProblem,
    solutions: Vec<OneClassSolution>,
    offset: OneClassSolution,
    offset_residual_range: (f64, f64),
}

impl OsvmDetector {
    pub fn fit(train: &[Matrix], val: &[Matrix], config: &OsvmConfig) -> Result<Self> {
        config.validate()?;
        let all = stack_windows(train, config.window)?;
        let keep = stride_indices(all.rows(), config.max_train_windows);
        let rows: Vec<&[f64]> = keep.iter().map(|&i| all.row(i)).collect();
        let problem = OneClassProblem::new(Matrix::from_rows(&rows)?, config.gamma)?;
        let offset = problem.solve(config.offset_nu)?;
        let vw = stack_windows(val, config.window)?;
        let cross = problem.cross(&vw)?;
        let range = offset
            .decisions_from_cross(&cross)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(-d), b.max(-d)));
        let solutions = match config.knob {
            OsvmKnob::Nu => config
                .nu_grid()
                .iter()
                .map(|&nu| problem.solve(nu))
                .collect::<Result<Vec<_>>>()?,
            OsvmKnob::Offset => vec![offset.clone()],
        };
        Ok(Self {
            window: config.window,
            problem,
            solutions,
            offset,
            offset_residual_range: range,
        })
    }

    pub fn training_size(&self) -> usize {
        self.problem.len()
    }

    pub fn solutions(&self) -> &[OneClassSolution] {
        &self.solutions
    }

    /// Verdicts for each execution at every `nu` of the grid.
    pub fn sweep(&self, test: &[Matrix]) -> Result<SweepVerdicts> {
        let k = self.solutions.len();
        let mut out = SweepVerdicts {
            knob: self.solutions.iter().map(|s| s.nu).collect(),
            flags: vec![Vec::with_capacity(test.len()); k],
            first: vec![Vec::with_capacity(test.len()); k],
        };
        for seq in test {
            let w = sliding_windows(seq, self.window)?;
            let ends = window_ends(seq.rows(), self.window);
            let cross = self.problem.cross(&w)?;
            for (j, sol) in self.solutions.iter().enumerate() {
                let first = sol.decisions_from_cross(&cross).iter().position(|d| *d < 0.0);
                out.flags[j].push(first.is_some());
                out.first[j].push(first.map(|i| ends[i]));
            }
        }
        Ok(out)
    }

    /// Residual `-decision` under the fixed-`nu` model of the offset sweep.
    pub fn offset_trace(&self, seq: &Matrix) -> Result<ResidualTrace> {
        let sol = &self.offset;
        let w = sliding_windows(seq, self.window)?;
        let cross = self.problem.cross(&w)?;
        Ok(ResidualTrace {
            residuals: sol.decisions_from_cross(&cross).into_iter().map(|d| -d).collect(),
            steps: window_ends(seq.rows(), self.window),
        })
    }

    /// Standalone model at the offset-sweep `nu`, for checkpointing.
    pub fn offset_model(&self) -> Result<OneClassSvm> {
        self.problem.model(&self.offset)
    }

    pub fn offset_residual_range(&self) -> (f64, f64) {
        self.offset_residual_range
    }
}
