use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::roc::{auc, exact_roc, roc_curve, roc_from_flags, RocPoint};
use crate::baselines::{ResidualTrace, SweepVerdicts};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// How a method responds to its sensitivity knob on one fold.
#[derive(Clone, Debug)]
pub enum Response {
    /// Residual traces swept by a threshold `c`, plus the validation
    /// residual range used to place the grid.
    Traces {
        traces: Vec<ResidualTrace>,
        range: (f64, f64),
    },
    /// Verdicts already evaluated along a method-specific knob.
    Sweep(SweepVerdicts),
}

/// Everything one held-out group contributes to the reports.
#[derive(Clone, Debug)]
pub struct FoldResponses {
    pub group: String,
    pub labels: Vec<bool>,
    pub onsets: Vec<Option<usize>>,
    pub families: Vec<Option<String>>,
    pub responses: BTreeMap<String, Response>,
    pub hashes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub group: String,
    pub anomalous: usize,
    pub non_anomalous: usize,
    pub auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    /// Detected anomalous executions with a known onset.
    pub detected: usize,
    pub total: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    /// Fraction of detections at or after the onset.
    pub after_onset: Option<f64>,
}

impl DelayStats {
    fn from_delays(delays: &[i64], total: usize) -> Self {
        if delays.is_empty() {
            return Self {
                total,
                ..Self::default()
            };
        }
        let mut v: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Self {
            detected: n,
            total,
            median: Some(median),
            mean: Some(v.iter().sum::<f64>() / n as f64),
            after_onset: Some(delays.iter().filter(|d| **d >= 0).count() as f64 / n as f64),
        }
    }
}

/// First-detection delay (steps after onset) at one operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub knob: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub overall: DelayStats,
    pub by_family: BTreeMap<String, DelayStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub layout: String,
    pub folds: Vec<FoldReport>,
    pub pooled_auc: f64,
    pub mean_fold_auc: f64,
    /// Pooled AUC at every distinct per-execution score rather than on the
    /// grid; threshold-type methods only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_auc: Option<f64>,
    pub roc: Vec<RocPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayReport>,
}

/// All reports of one cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub schema_version: u32,
    pub layout: String,
    pub seed: u64,
    pub groups: Vec<String>,
    pub skipped_groups: Vec<String>,
    pub reports: Vec<EvalReport>,
}

impl CrossValidation {
    pub fn report(&self, method: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cv: CrossValidation = serde_json::from_str(text)?;
        if cv.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "report schema {} is not the supported version {SCHEMA_VERSION}",
                cv.schema_version
            )));
        }
        Ok(cv)
    }
}

/// Plot-ready ROC points, one row per point.
pub fn roc_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,layout,knob,fpr,tpr\n");
    for r in reports {
        for p in &r.roc {
            let knob = p.knob.map(|k| format!("{k:?}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{knob},{:?},{:?}", r.method, r.layout, p.fpr, p.tpr);
        }
    }
    out
}

/// Sweep index with the highest TPR among points with FPR at most
/// `max_fpr`; the first such index on ties.
fn operating_point(points: &[RocPoint], max_fpr: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in points.iter().enumerate() {
        if p.fpr <= max_fpr && best.is_none_or(|(_, t)| p.tpr > t) {
            best = Some((k, p.tpr));
        }
    }
    best.map(|(k, _)| k)
}

/// Per-fold and pooled ROC for one method. `grid` is required for
/// threshold-type responses; swept responses carry their own knob.
pub(crate) fn summarize(
    method: &str,
    layout: &str,
    runs: &[FoldResponses],
    grid: Option<&[f64]>,
    max_fpr: f64,
) -> Result<EvalReport> {
    let mut folds = Vec::with_capacity(runs.len());
    let mut pooled_labels = Vec::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_flags: Vec<Vec<bool>> = Vec::new();
    let mut knob: Option<Vec<f64>> = None;

    for run in runs {
        let response = run
            .responses
            .get(method)
            .ok_or_else(|| Error::Contract(format!("fold {} has no response for {method}", run.group)))?;
        let roc = match response {
            Response::Traces { traces, .. } => {
                let grid = grid.ok_or_else(|| Error::Contract(format!("{method} needs a threshold grid")))?;
                let scores: Vec<f64> = traces.iter().map(ResidualTrace::max).collect();
                pooled_scores.extend_from_slice(&scores);
                roc_curve(&scores, &run.labels, grid)?
            }
            Response::Sweep(sv) => {
                match &knob {
                    None => {
                        knob = Some(sv.knob.clone());
                        pooled_flags = vec![Vec::new(); sv.knob.len()];
                    }
                    Some(k) if *k != sv.knob => {
                        return Err(Error::Contract(format!("{method} sweeps differ across folds")));
                    }
                    Some(_) => {}
                }
                for (acc, f) in pooled_flags.iter_mut().zip(&sv.flags) {
                    acc.extend_from_slice(f);
                }
                roc_from_flags(&sv.knob, &sv.flags, &run.labels)?
            }
        };
        pooled_labels.extend_from_slice(&run.labels);
        let anomalous = run.labels.iter().filter(|l| **l).count();
        folds.push(FoldReport {
            group: run.group.clone(),
            anomalous,
            non_anomalous: run.labels.len() - anomalous,
            auc: auc(&roc)?,
            model_hash: run.hashes.get(method).cloned(),
        });
    }

    let (sweep, roc) = match &knob {
        Some(k) => (k.clone(), roc_from_flags(k, &pooled_flags, &pooled_labels)?),
        None => {
            let g = grid.ok_or_else(|| Error::Contract(format!("{method} needs a threshold grid")))?;
            (g.to_vec(), roc_curve(&pooled_scores, &pooled_labels, g)?)
        }
    };
    let exact_auc = if knob.is_none() {
        Some(auc(&exact_roc(&pooled_scores, &pooled_labels)?)?)
    } else {
        None
    };
    let delay = delay_report(method, runs, &sweep, &roc, max_fpr);
    let mean_fold_auc = folds.iter().map(|f| f.auc).sum::<f64>() / folds.len().max(1) as f64;
    Ok(EvalReport {
        method: method.to_string(),
        layout: layout.to_string(),
        pooled_auc: auc(&roc)?,
        mean_fold_auc,
        exact_auc,
        folds,
        roc,
        delay,
    })
}

fn delay_report(method: &str, runs: &[FoldResponses], sweep: &[f64], roc: &[RocPoint], max_fpr: f64) -> Option<DelayReport> {
    // roc[0] and roc[last] are the appended endpoints
    let inner = &roc[1..roc.len() - 1];
    let k = operating_point(inner, max_fpr)?;
    let mut all = Vec::new();
    let mut total = 0;
    let mut fam: BTreeMap<String, (Vec<i64>, usize)> = BTreeMap::new();
    let mut timed = false;
    for run in runs {
        let response = run.responses.get(method)?;
        for i in 0..run.labels.len() {
            let (true, Some(onset)) = (run.labels[i], run.onsets[i]) else {
                continue;
            };
            let first = match response {
                Response::Traces { traces, .. } => {
                    timed = true;
                    traces[i].first_above(sweep[k])
                }
                Response::Sweep(sv) => {
                    let f = sv.first[k][i];
                    timed |= sv.first.iter().any(|v| v.iter().any(Option::is_some));
                    f
                }
            };
            let family = run.families[i].clone().unwrap_or_else(|| "unknown".into());
            let entry = fam.entry(family).or_default();
            entry.1 += 1;
            total += 1;
            if let Some(f) = first {
                let d = f as i64 - onset as i64;
                all.push(d);
                entry.0.push(d);
            }
        }
    }
    if !timed {
        return None;
    }
    Some(DelayReport {
        knob: sweep[k],
        tpr: inner[k].tpr,
        fpr: inner[k].fpr,
        overall: DelayStats::from_delays(&all, total),
        by_family: fam
            .into_iter()
            .map(|(name, (d, n))| (name, DelayStats::from_delays(&d, n)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(scores: &[(f64, bool, Option<usize>)]) -> FoldResponses {
        let traces = scores
            .iter()
            .map(|&(s, _, _)| ResidualTrace::per_step(vec![0.0, s, s]))
            .collect();
        let mut responses = BTreeMap::new();
        responses.insert("m".to_string(), Response::Traces { traces, range: (0.0, 1.0) });
        FoldResponses {
            group: "g".into(),
            labels: scores.iter().map(|s| s.1).collect(),
            onsets: scores.iter().map(|s| s.2).collect(),
            families: scores.iter().map(|s| s.2.map(|_| "f".to_string())).collect(),
            responses,
            hashes: BTreeMap::new(),
        }
    }

    #[test]
    fn separable_fold_scores_one_with_delays() {
        let r = run(&[(0.2, false, None), (0.3, false, None), (0.9, true, Some(0)), (0.8, true, Some(1))]);
        let grid: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let rep = summarize("m", "raw17", &[r], Some(&grid), 0.1).unwrap();
        assert_eq!(rep.pooled_auc, 1.0);
        assert_eq!(rep.exact_auc, Some(1.0));
        assert_eq!(rep.folds[0].auc, 1.0);
        let d = rep.delay.unwrap();
        assert_eq!(d.tpr, 1.0);
        assert_eq!(d.fpr, 0.0);
        // both first cross at step 1; onsets 0 and 1
        assert_eq!(d.overall.median, Some(0.5));
        assert_eq!(d.by_family["f"].detected, 2);
    }

    #[test]
    fn pooling_differs_from_fold_average() {
        // each fold separable on its own, but fold scales differ
        let a = run(&[(0.1, false, None), (0.2, true, Some(0))]);
        let b = run(&[(0.8, false, None), (0.9, true, Some(0))]);
        let grid: Vec<f64> = (0..21).map(|k| k as f64 / 20.0).collect();
        let rep = summarize("m", "raw17", &[a, b], Some(&grid), 0.1).unwrap();
        assert_eq!(rep.mean_fold_auc, 1.0);
        assert!(rep.pooled_auc < 1.0);
    }

    #[test]
    fn missing_grid_is_contract_error() {
        let r = run(&[(0.2, false, None), (0.9, true, Some(0))]);
        assert!(matches!(summarize("m", "raw17", &[r], None, 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn roc_csv_has_header_and_rows() {
        let r = run(&[(0.2, false, None), (0.9, true, Some(0))]);
        let rep = summarize("m", "raw17", &[r], Some(&[0.5]), 0.1).unwrap();
        let csv = roc_csv(&[rep]);
        assert_eq!(csv.lines().count(), 1 + 3);
        assert!(csv.starts_with("method,layout,knob,fpr,tpr\nm,raw17,,0.0,0.0\n"));
    }
}
