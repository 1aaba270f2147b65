use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// One operating point. `knob` is the sensitivity value that produced it
/// (`None` for the appended endpoints).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub knob: Option<f64>,
    pub tpr: f64,
    pub fpr: f64,
}

impl RocPoint {
    pub fn new(knob: Option<f64>, tpr: f64, fpr: f64) -> Self {
        Self { knob, tpr, fpr }
    }
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(Error::Undefined("true-positive rate needs at least one anomalous execution".into()));
    }
    if neg == 0 {
        return Err(Error::Undefined("false-positive rate needs at least one non-anomalous execution".into()));
    }
    Ok((pos, neg))
}

/// Rates at one sweep value from execution-level verdicts.
pub fn rates(flags: &[bool], labels: &[bool]) -> Result<(f64, f64)> {
    check_dim("verdicts", labels.len(), flags.len())?;
    let (pos, neg) = class_counts(labels)?;
    let tp = flags.iter().zip(labels).filter(|(f, l)| **f && **l).count();
    let fp = flags.iter().zip(labels).filter(|(f, l)| **f && !**l).count();
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}

/// ROC from verdicts along a sweep (`flags[k][i]` for sweep value `k`),
/// with the `(0,0)` and `(1,1)` endpoints appended.
pub fn roc_from_flags(knob: &[f64], flags: &[Vec<bool>], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_dim("sweep", knob.len(), flags.len())?;
    let mut pts = Vec::with_capacity(knob.len() + 2);
    pts.push(RocPoint::new(None, 0.0, 0.0));
    for (k, f) in knob.iter().zip(flags) {
        let (tpr, fpr) = rates(f, labels)?;
        pts.push(RocPoint::new(Some(*k), tpr, fpr));
    }
    pts.push(RocPoint::new(None, 1.0, 1.0));
    Ok(pts)
}

/// ROC for a threshold sweep: execution `i` is flagged at `c` iff
/// `scores[i] > c`.
pub fn roc_curve(scores: &[f64], labels: &[bool], sweep: &[f64]) -> Result<Vec<RocPoint>> {
    check_dim("scores", labels.len(), scores.len())?;
    let flags: Vec<Vec<bool>> = sweep
        .iter()
        .map(|c| scores.iter().map(|s| s > c).collect())
        .collect();
    roc_from_flags(sweep, &flags, labels)
}

/// ROC at every distinct score (flagged when `score >= knob`), i.e. the
/// finest possible sweep.
pub fn exact_roc(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_dim("scores", labels.len(), scores.len())?;
    let mut cuts = scores.to_vec();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let flags: Vec<Vec<bool>> = cuts
        .iter()
        .map(|c| scores.iter().map(|s| s >= c).collect())
        .collect();
    roc_from_flags(&cuts, &flags, labels)
}

/// Trapezoidal area under FPR-sorted points; `(0,0)` and `(1,1)` are
/// included if absent.
pub fn auc(points: &[RocPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Undefined(format!("AUC needs at least 2 points, got {}", points.len())));
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    if pts.iter().any(|(f, t)| !(0.0..=1.0).contains(f) || !(0.0..=1.0).contains(t)) {
        return Err(Error::Domain("ROC rates must lie in [0, 1]".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum())
}

/// `n` evenly spaced sensitivity values over `[lo - pad, hi + pad]`, with
/// `pad = padding * (hi - lo)`.
pub fn threshold_grid(lo: f64, hi: f64, n: usize, padding: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::Domain(format!("invalid residual range [{lo}, {hi}]")));
    }
    if n < 2 {
        return Err(Error::Config("sweep needs at least 2 points".into()));
    }
    let span = (hi - lo).max(1e-12);
    let (a, b) = (lo - padding * span, hi + padding * span);
    Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<RocPoint> {
        v.iter().map(|&(f, t)| RocPoint::new(None, t, f)).collect()
    }

    #[test]
    fn auc_fixtures() {
        assert_eq!(auc(&pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)])).unwrap(), 1.0);
        assert_eq!(auc(&pts(&[(0.0, 0.0), (1.0, 1.0)])).unwrap(), 0.5);
        let bulge = auc(&pts(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.2, 0.8)])).unwrap();
        assert!((bulge - 0.65).abs() < 1e-12);
        assert!(auc(&pts(&[(0.3, 0.3)])).is_err());
    }

    #[test]
    fn separating_scores_reach_the_corner() {
        let labels = [true, true, false, false];
        let roc = roc_curve(&[5.0, 4.0, 1.0, 0.0], &labels, &[0.5, 2.0, 4.5]).unwrap();
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&roc).unwrap(), 1.0);
        assert!(roc_curve(&[1.0], &[true], &[0.0]).is_err());
    }

    #[test]
    fn exact_roc_matches_rank_statistic() {
        let scores = [0.9, 0.3, 0.5, 0.5, 0.1, 0.7];
        let labels = [true, false, true, false, false, true];
        let roc = exact_roc(&scores, &labels).unwrap();
        let mut wins = 0.0;
        for (s, l) in scores.iter().zip(&labels) {
            for (t, m) in scores.iter().zip(&labels) {
                if *l && !*m {
                    wins += if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&roc).unwrap() - wins / 9.0).abs() < 1e-12);
    }

    #[test]
    fn grid_pads_relative_to_range() {
        let g = threshold_grid(0.0, 10.0, 41, 0.05).unwrap();
        assert_eq!(g.len(), 41);
        assert!((g[0] + 0.5).abs() < 1e-12 && (g[40] - 10.5).abs() < 1e-12);
    }
}
