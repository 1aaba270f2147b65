use crate::error::{Error, Result};
use crate::nn::Matrix;

/// All windows of `len` consecutive rows, flattened row-major; one output
/// row per window, `T - len + 1` in total.
pub fn sliding_windows(seq: &Matrix, len: usize) -> Result<Matrix> {
    if len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    if seq.rows() < len {
        return Err(Error::Domain(format!(
            "sequence of {} rows is shorter than the window {len}",
            seq.rows()
        )));
    }
    let count = seq.rows() - len + 1;
    let width = len * seq.cols();
    let src = seq.as_slice();
    let mut data = Vec::with_capacity(count * width);
    for start in 0..count {
        data.extend_from_slice(&src[start * seq.cols()..start * seq.cols() + width]);
    }
    Matrix::from_vec(count, width, data)
}

/// Row index of the last observation in each window.
pub fn window_ends(rows: usize, len: usize) -> Vec<usize> {
    if rows < len || len == 0 {
        return Vec::new();
    }
    (len - 1..rows).collect()
}

/// Windows of every sequence stacked together; never spans two sequences.
pub fn stack_windows(seqs: &[Matrix], len: usize) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut width = None;
    for s in seqs {
        let w = sliding_windows(s, len)?;
        if *width.get_or_insert(w.cols()) != w.cols() {
            return Err(Error::Contract("sequences differ in channel count".into()));
        }
        rows += w.rows();
        data.extend_from_slice(w.as_slice());
    }
    let width = width.ok_or_else(|| Error::Empty("no sequences to window".into()))?;
    Matrix::from_vec(rows, width, data)
}

/// Scores indexed by the step at which they become available.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualTrace {
    pub residuals: Vec<f64>,
    pub steps: Vec<usize>,
}

impl ResidualTrace {
    pub fn per_step(residuals: Vec<f64>) -> Self {
        let steps = (0..residuals.len()).collect();
        Self { residuals, steps }
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Step of the first residual strictly above `c`.
    pub fn first_above(&self, c: f64) -> Option<usize> {
        self.residuals.iter().position(|r| *r > c).map(|i| self.steps[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_slide_one_step() {
        let seq = Matrix::from_vec(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let w = sliding_windows(&seq, 3).unwrap();
        assert_eq!(w.rows(), 2);
        assert_eq!(w.row(0), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(w.row(1), &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(window_ends(4, 3), vec![2, 3]);
        assert!(sliding_windows(&seq, 5).is_err());
    }

    #[test]
    fn stacking_keeps_sequences_apart() {
        let a = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Matrix::from_vec(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        let w = stack_windows(&[a, b], 2).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 2.0, 2.0, 3.0, 10.0, 20.0, 20.0, 30.0]);
    }

    #[test]
    fn first_crossing_reports_its_step() {
        let trace = ResidualTrace {
            residuals: vec![0.1, 0.5, 2.0, 3.0],
            steps: vec![2, 3, 4, 5],
        };
        assert_eq!(trace.first_above(1.0), Some(4));
        assert_eq!(trace.first_above(3.0), None);
        assert_eq!(trace.max(), 3.0);
    }
}
