use serde::{Deserialize, Serialize};

use super::execution::{Execution, Layout};
use crate::error::{check_dim, Error, Result};
use crate::nn::Matrix;

/// Per-channel linear interpolation onto `len` evenly spaced points over the
/// original time span.
pub fn resample(signals: &Matrix, len: usize) -> Result<Matrix> {
    let src = signals.rows();
    if src < 2 {
        return Err(Error::Domain(format!("cannot resample a sequence of length {src}")));
    }
    if len < 2 {
        return Err(Error::Domain(format!("target length must be at least 2, got {len}")));
    }
    if src == len {
        return Ok(signals.clone());
    }
    let d = signals.cols();
    let mut out = Matrix::zeros(len, d);
    let scale = (src - 1) as f64 / (len - 1) as f64;
    for t in 0..len {
        let pos = t as f64 * scale;
        let lo = (pos.floor() as usize).min(src - 2);
        let frac = pos - lo as f64;
        let (a, b) = (signals.row(lo), signals.row(lo + 1));
        for (o, (x, y)) in out.row_mut(t).iter_mut().zip(a.iter().zip(b)) {
            *o = if frac == 0.0 { *x } else if frac == 1.0 { *y } else { x + frac * (y - x) };
        }
    }
    Ok(out)
}

/// Maps a row index on a `src`-row time axis to the nearest row of a
/// `len`-row resampling of it.
pub fn map_index(index: usize, src: usize, len: usize) -> usize {
    if src < 2 || len < 2 {
        return 0;
    }
    let pos = index as f64 * (len - 1) as f64 / (src - 1) as f64;
    (pos.round() as usize).min(len - 1)
}

/// Resamples the execution and carries its onset along.
pub fn resample_execution(e: &Execution, len: usize) -> Result<Execution> {
    let src = e.len();
    let signals = resample(&e.signals, len)?;
    let span = (src - 1) as f64 / e.rate_hz;
    Ok(Execution {
        signals,
        rate_hz: (len - 1) as f64 / span,
        onset: e.onset.map(|o| map_index(o, src, len)),
        ..e.clone()
    })
}

/// Per-channel min/max of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn fit<'a>(sets: impl IntoIterator<Item = &'a Matrix>) -> Result<Self> {
        let mut stats: Option<Self> = None;
        for m in sets {
            let s = stats.get_or_insert_with(|| Self {
                min: vec![f64::INFINITY; m.cols()],
                max: vec![f64::NEG_INFINITY; m.cols()],
            });
            check_dim("normalization channels", s.min.len(), m.cols())?;
            for row in m.iter_rows() {
                for ((lo, hi), v) in s.min.iter_mut().zip(s.max.iter_mut()).zip(row) {
                    *lo = lo.min(*v);
                    *hi = hi.max(*v);
                }
            }
        }
        let stats = stats.ok_or_else(|| Error::Empty("no training data for normalization".into()))?;
        if stats.min.iter().any(|v| !v.is_finite()) {
            return Err(Error::Empty("normalization data has no rows".into()));
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)` per channel, unclipped; constant channels map to 0.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        check_dim("normalization channels", self.dim(), m.cols())?;
        let mut out = m.clone();
        for r in 0..out.rows() {
            self.apply_row(out.row_mut(r));
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
}

/// Reduces the 17-channel layout to sound energy, first joint torque,
/// accumulated force magnitude and spoon-mouth distance.
pub fn extract_features(e: &Execution) -> Result<Execution> {
    if e.layout != Layout::Raw17 {
        return Err(Error::Contract(format!(
            "feature extraction needs the raw17 layout, execution {} is {}",
            e.id, e.layout
        )));
    }
    check_dim("raw channels", Layout::Raw17.dim(), e.dim())?;
    let dt = 1.0 / e.rate_hz;
    let mut acc = 0.0;
    let mut data = Vec::with_capacity(e.len() * 4);
    for row in e.signals.iter_rows() {
        acc += (row[1] * row[1] + row[2] * row[2] + row[3] * row[3]).sqrt() * dt;
        let dist = (0..3).map(|k| (row[11 + k] - row[14 + k]).powi(2)).sum::<f64>().sqrt();
        data.extend_from_slice(&[row[0], row[4], acc, dist]);
    }
    Ok(Execution {
        layout: Layout::Features4,
        signals: Matrix::from_vec(e.len(), 4, data)?,
        ..e.clone()
    })
}

/// Brings an execution into the requested layout, deriving features from
/// raw signals when needed.
pub fn to_layout(e: &Execution, layout: Layout) -> Result<Execution> {
    match (e.layout, layout) {
        (a, b) if a == b => Ok(e.clone()),
        (Layout::Raw17, Layout::Features4) => extract_features(e),
        (a, b) => Err(Error::Contract(format!("cannot convert layout {a} to {b}"))),
    }
}
