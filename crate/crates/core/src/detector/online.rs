use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::regressor::ThresholdRegressor;
use crate::error::{check_dim, Error, Result};
use crate::model::loss::gaussian_nll_raw;
use crate::model::{LstmVae, SequenceState};
use crate::nn::Matrix;

/// Negative log-likelihood of `x` under the reconstruction, with the
/// encoder's posterior mean as the latent state. Advances `state`.
pub fn anomaly_score(model: &LstmVae, x: &[f64], state: &mut SequenceState) -> Result<(f64, Vec<f64>)> {
    let out = model.step(x, state)?;
    let s = gaussian_nll_raw(x, &out.reconstruction.mean, &out.reconstruction.var)?;
    Ok((s, out.posterior.mean))
}

/// Per-stream detection state: recurrent state, step counter and latch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorState {
    sequence: SequenceState,
    t: usize,
    first_detection: Option<usize>,
}

impl DetectorState {
    pub fn new(model: &LstmVae) -> Self {
        let mut s = Self::default();
        s.reset(model);
        s
    }

    pub fn reset(&mut self, model: &LstmVae) {
        model.reset(&mut self.sequence);
        self.t = 0;
        self.first_detection = None;
    }

    /// Steps processed since the last reset.
    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn latched(&self) -> bool {
        self.first_detection.is_some()
    }

    pub fn first_detection(&self) -> Option<usize> {
        self.first_detection
    }
}

/// One processed step. `t` is the 0-based row index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub t: usize,
    pub z: Vec<f64>,
    pub score: f64,
    pub expected: f64,
    pub threshold: f64,
    /// Whether this step's score crossed the threshold.
    pub fired: bool,
    /// Latched execution-level decision after this step.
    pub decision: bool,
}

impl ScoreRecord {
    pub fn residual(&self) -> f64 {
        self.score - self.expected
    }

    pub fn csv_header(latent_dim: usize) -> String {
        let mut h = String::from("t,s,s_hat,threshold,decision");
        for k in 1..=latent_dim {
            write!(h, ",z_{k}").expect("writing to a string");
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{:?},{:?},{:?},{}",
            self.t, self.score, self.expected, self.threshold, self.decision as u8
        );
        for v in &self.z {
            write!(row, ",{v:?}").expect("writing to a string");
        }
        row
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub records: Vec<ScoreRecord>,
}

impl ScoreTrace {
    pub fn to_csv(&self) -> String {
        let k = self.records.first().map_or(0, |r| r.z.len());
        let mut out = ScoreRecord::csv_header(k);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub verdict: bool,
    pub first_detection: Option<usize>,
    pub trace: ScoreTrace,
}

/// A trained model with its state-to-score regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    pub model: LstmVae,
    pub regressor: ThresholdRegressor,
}

impl ScoringModel {
    pub fn new_state(&self) -> DetectorState {
        DetectorState::new(&self.model)
    }

    pub fn expected_score(&self, z: &[f64]) -> Result<f64> {
        self.regressor.expected_score(z)
    }

    /// Scores one preprocessed observation and applies `s > expected + c`.
    pub fn detect_step(&self, x: &[f64], state: &mut DetectorState, c: f64) -> Result<ScoreRecord> {
        check_dim("observation", self.model.input_dim(), x.len())?;
        let (score, z) = anomaly_score(&self.model, x, &mut state.sequence)?;
        let expected = self.regressor.expected_score(&z)?;
        let threshold = expected + c;
        let fired = score > threshold;
        let t = state.t;
        state.t += 1;
        if fired && state.first_detection.is_none() {
            state.first_detection = Some(t);
        }
        Ok(ScoreRecord {
            t,
            z,
            score,
            expected,
            threshold,
            fired,
            decision: state.first_detection.is_some(),
        })
    }

    pub fn run_detection(&self, seq: &Matrix, c: f64) -> Result<Detection> {
        if seq.rows() == 0 {
            return Err(Error::Empty("cannot run detection on an empty sequence".into()));
        }
        let mut state = self.new_state();
        let records = seq
            .iter_rows()
            .map(|x| self.detect_step(x, &mut state, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Detection {
            verdict: state.latched(),
            first_detection: state.first_detection(),
            trace: ScoreTrace { records },
        })
    }

    /// `score - expected` for every step of a sequence.
    pub fn residuals(&self, seq: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .run_detection(seq, f64::INFINITY)?
            .trace
            .records
            .iter()
            .map(ScoreRecord::residual)
            .collect())
    }
}
