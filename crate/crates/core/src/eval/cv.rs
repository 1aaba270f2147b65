use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{summarize, CrossValidation, EvalReport, FoldResponses, Response, SCHEMA_VERSION};
use super::roc::threshold_grid;
use crate::baselines::{
    AeConfig, AeDetector, EncDecConfig, EncDecDetector, OsvmConfig, OsvmDetector, OsvmKnob, RandomDetector,
    ResidualTrace, SweepVerdicts,
};
use crate::checkpoint::{digest, AeCheckpoint, CheckpointModel, EncDecCheckpoint, OsvmCheckpoint};
use crate::data::{Dataset, Execution, Split};
use crate::detector::{fit_scoring_model, DetectorConfig, PreprocessConfig, Preprocessor, TrainedDetector};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    LstmVae,
    Random,
    Osvm,
    Ae,
    EncdecAd,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::LstmVae,
        MethodKind::EncdecAd,
        MethodKind::Ae,
        MethodKind::Osvm,
        MethodKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::LstmVae => "lstm_vae",
            MethodKind::Random => "random",
            MethodKind::Osvm => "osvm",
            MethodKind::Ae => "ae",
            MethodKind::EncdecAd => "encdec_ad",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Report name of the LSTM-VAE with its regressor replaced by a constant.
pub const FIXED_THRESHOLD: &str = "lstm_vae_fixed";

/// Per-method hyperparameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfigs {
    pub preprocess: PreprocessConfig,
    pub detector: DetectorConfig,
    pub ae: AeConfig,
    pub encdec: EncDecConfig,
    pub osvm: OsvmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<MethodKind>,
    /// Also report the LSTM-VAE under a fixed threshold.
    pub ablation: bool,
    pub grid_points: usize,
    /// Padding of the threshold grid beyond the validation residual range,
    /// as a fraction of that range.
    pub grid_padding: f64,
    pub random_points: usize,
    /// Detection delays are measured at the highest-TPR sweep point whose
    /// pooled FPR does not exceed this.
    pub delay_max_fpr: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: MethodKind::ALL.to_vec(),
            ablation: true,
            grid_points: 41,
            grid_padding: 0.05,
            random_points: 41,
            delay_max_fpr: 0.1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods to evaluate".into()));
        }
        if self.grid_points < 2 || self.random_points < 2 {
            return Err(Error::Config("sweeps need at least 2 points".into()));
        }
        if !(self.grid_padding >= 0.0 && self.grid_padding.is_finite()) {
            return Err(Error::Config("grid_padding must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.delay_max_fpr) {
            return Err(Error::Config("delay_max_fpr must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Held-out group and the executions each role draws from.
#[derive(Clone, Debug)]
pub struct Fold<'a> {
    pub group: String,
    pub train: Vec<&'a Execution>,
    pub val: Vec<&'a Execution>,
    pub test: Vec<&'a Execution>,
}

/// Leave-one-group-out folds in group order. Groups whose executions do not
/// cover both classes are returned separately and skipped.
pub fn group_folds(dataset: &Dataset) -> Result<(Vec<Fold<'_>>, Vec<String>)> {
    let groups: BTreeSet<&str> = dataset.executions.iter().map(|e| e.group.as_str()).collect();
    if groups.len() < 2 {
        return Err(Error::Domain(format!(
            "leave-one-group-out needs at least 2 groups, found {}",
            groups.len()
        )));
    }
    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for g in groups {
        let test: Vec<&Execution> = dataset.executions.iter().filter(|e| e.group == g).collect();
        if !test.iter().any(|e| e.is_anomalous()) || test.iter().all(|e| e.is_anomalous()) {
            warn!("group {g} lacks one of the two classes; fold skipped");
            skipped.push(g.to_string());
            continue;
        }
        let pick = |split: Split| -> Vec<&Execution> {
            dataset
                .entries()
                .filter(|(m, e)| m.split == split && e.group != g && !e.is_anomalous())
                .map(|(_, e)| e)
                .collect()
        };
        let (train, val) = (pick(Split::Train), pick(Split::Val));
        if train.is_empty() || val.is_empty() {
            return Err(Error::Empty(format!(
                "fold holding out {g} has {} training and {} validation executions",
                train.len(),
                val.len()
            )));
        }
        folds.push(Fold {
            group: g.to_string(),
            train,
            val,
            test,
        });
    }
    Ok((folds, skipped))
}

/// Decorrelated per-fold, per-method seed.
pub fn derive_seed(master: u64, fold: usize, stream: u64) -> u64 {
    let mut x = master ^ (fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream.rotate_left(32);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

struct Prepared {
    pre: Preprocessor,
    train: Vec<Matrix>,
    val: Vec<Matrix>,
    test: Vec<Execution>,
}

fn prepare(fold: &Fold<'_>, config: &PreprocessConfig) -> Result<Prepared> {
    let pre = Preprocessor::fit(config, fold.train.iter().copied())?;
    Ok(Prepared {
        train: pre.apply_all(fold.train.iter().copied())?,
        val: pre.apply_all(fold.val.iter().copied())?,
        test: fold.test.iter().map(|e| pre.apply(e)).collect::<Result<_>>()?,
        pre,
    })
}

fn traces<F>(test: &[Execution], mut f: F) -> Result<Vec<ResidualTrace>>
where
    F: FnMut(&Matrix) -> Result<ResidualTrace>,
{
    test.iter().map(|e| f(&e.signals)).collect()
}

/// Residual traces of every test execution under a trained LSTM-VAE.
pub fn detector_traces(detector: &TrainedDetector, test: &[Execution]) -> Result<Vec<ResidualTrace>> {
    test.iter()
        .map(|e| {
            let x = detector.preprocessor.apply(e)?;
            Ok(ResidualTrace::per_step(detector.scoring.residuals(&x.signals)?))
        })
        .collect()
}

fn random_sweep(n: usize, points: usize, seed: u64) -> Result<SweepVerdicts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knob: Vec<f64> = (0..points).map(|k| k as f64 / (points - 1) as f64).collect();
    let mut flags = Vec::with_capacity(points);
    for &w in &knob {
        let det = RandomDetector::new(w)?;
        flags.push((0..n).map(|_| det.verdict(&mut rng)).collect());
    }
    Ok(SweepVerdicts {
        first: vec![vec![None; n]; points],
        knob,
        flags,
    })
}

fn run_fold(
    index: usize,
    fold: &Fold<'_>,
    methods: &MethodConfigs,
    config: &EvalConfig,
    seed: u64,
) -> Result<FoldResponses> {
    let p = prepare(fold, &methods.preprocess)?;
    let mut out = FoldResponses {
        group: fold.group.clone(),
        labels: p.test.iter().map(|e| e.is_anomalous()).collect(),
        onsets: p.test.iter().map(|e| e.onset).collect(),
        families: p.test.iter().map(|e| e.anomaly_type.clone()).collect(),
        responses: BTreeMap::new(),
        hashes: BTreeMap::new(),
    };
    for (stream, &kind) in config.methods.iter().enumerate() {
        let mseed = derive_seed(seed, index, stream as u64 + 1);
        let name = kind.name().to_string();
        let started = std::time::Instant::now();
        match kind {
            MethodKind::LstmVae => {
                let mut dc = methods.detector.clone();
                dc.model.seed = mseed;
                dc.model.input_dim = p.pre.layout().dim();
                let (scoring, calibration, report) = fit_scoring_model(&p.train, &p.val, None, &dc)?;
                let det = TrainedDetector {
                    preprocessor: p.pre.clone(),
                    scoring,
                    default_c: calibration.residual_max,
                    calibration,
                };
                info!(
                    "fold {}: lstm_vae trained {} epochs (best {})",
                    fold.group,
                    report.history.epochs.len(),
                    report.history.best_epoch
                );
                let ck = CheckpointModel::LstmVae(det.clone());
                out.hashes.insert(name.clone(), digest(&ck)?);
                let state = traces(&p.test, |x| Ok(ResidualTrace::per_step(det.scoring.residuals(x)?)))?;
                let c = &det.calibration;
                out.responses.insert(
                    name,
                    Response::Traces {
                        traces: state,
                        range: (c.residual_min, c.residual_max),
                    },
                );
                if config.ablation {
                    let fixed = det.with_fixed_threshold();
                    let t = traces(&p.test, |x| Ok(ResidualTrace::per_step(fixed.scoring.residuals(x)?)))?;
                    out.responses.insert(
                        FIXED_THRESHOLD.to_string(),
                        Response::Traces {
                            traces: t,
                            range: c.fixed_residual_range(),
                        },
                    );
                }
            }
            MethodKind::Random => {
                out.responses.insert(
                    name,
                    Response::Sweep(random_sweep(p.test.len(), config.random_points, mseed)?),
                );
            }
            MethodKind::Osvm => {
                let det = OsvmDetector::fit(&p.train, &p.val, &methods.osvm)?;
                let ck = CheckpointModel::Osvm(OsvmCheckpoint {
                    preprocessor: p.pre.clone(),
                    window: det.window,
                    model: det.offset_model()?,
                });
                out.hashes.insert(name.clone(), digest(&ck)?);
                let response = match methods.osvm.knob {
                    OsvmKnob::Nu => {
                        let test: Vec<Matrix> = p.test.iter().map(|e| e.signals.clone()).collect();
                        Response::Sweep(det.sweep(&test)?)
                    }
                    OsvmKnob::Offset => Response::Traces {
                        traces: traces(&p.test, |x| det.offset_trace(x))?,
                        range: det.offset_residual_range(),
                    },
                };
                out.responses.insert(name, response);
            }
            MethodKind::Ae => {
                let (det, _) = AeDetector::fit(&p.train, &p.val, &methods.ae, mseed)?;
                let ck = CheckpointModel::Ae(AeCheckpoint {
                    preprocessor: p.pre.clone(),
                    detector: det.clone(),
                });
                out.hashes.insert(name.clone(), digest(&ck)?);
                out.responses.insert(
                    name,
                    Response::Traces {
                        traces: traces(&p.test, |x| det.trace(x))?,
                        range: det.residual_range,
                    },
                );
            }
            MethodKind::EncdecAd => {
                let (det, _) = EncDecDetector::fit(&p.train, &p.val, &methods.encdec, mseed)?;
                let ck = CheckpointModel::EncdecAd(EncDecCheckpoint {
                    preprocessor: p.pre.clone(),
                    detector: det.clone(),
                });
                out.hashes.insert(name.clone(), digest(&ck)?);
                out.responses.insert(
                    name,
                    Response::Traces {
                        traces: traces(&p.test, |x| det.trace(x))?,
                        range: det.residual_range,
                    },
                );
            }
        }
        info!("fold {}: {} done in {:.1?}", fold.group, kind, started.elapsed());
    }
    Ok(out)
}

fn union_range(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.max(b.1))
}

fn pooled_range(folds: &[FoldResponses], names: &[&str]) -> Option<(f64, f64)> {
    let mut acc: Option<(f64, f64)> = None;
    for f in folds {
        for n in names {
            if let Some(Response::Traces { range, .. }) = f.responses.get(*n) {
                acc = Some(acc.map_or(*range, |a| union_range(a, *range)));
            }
        }
    }
    acc
}

/// Leave-one-group-out evaluation of every configured method.
///
/// Each fold fits preprocessing and every method on the other groups'
/// non-anomalous training split, calibrates on their validation split, and
/// scores all executions of the held-out group. Threshold-type methods share
/// one grid across folds, built from the pooled validation residual range;
/// the LSTM-VAE and its fixed-threshold variant share a single grid.
pub fn cross_validate(
    dataset: &Dataset,
    methods: &MethodConfigs,
    config: &EvalConfig,
    seed: u64,
) -> Result<CrossValidation> {
    config.validate()?;
    let (folds, skipped) = group_folds(dataset)?;
    if folds.is_empty() {
        return Err(Error::Empty("no group contains both classes".into()));
    }
    let mut runs = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        info!("fold {}/{}: holding out {}", i + 1, folds.len(), fold.group);
        runs.push(run_fold(i, fold, methods, config, seed)?);
    }

    let layout = methods.preprocess.layout.name().to_string();
    let mut names: Vec<String> = config.methods.iter().map(|m| m.name().to_string()).collect();
    if config.methods.contains(&MethodKind::LstmVae) && config.ablation {
        let at = names.iter().position(|n| n == "lstm_vae").unwrap_or(0);
        names.insert(at + 1, FIXED_THRESHOLD.to_string());
    }
    let paired = pooled_range(&runs, &["lstm_vae", FIXED_THRESHOLD]);
    let mut reports = Vec::with_capacity(names.len());
    for name in &names {
        let range = if name == "lstm_vae" || name == FIXED_THRESHOLD {
            paired
        } else {
            pooled_range(&runs, &[name.as_str()])
        };
        let grid = range
            .map(|(lo, hi)| threshold_grid(lo, hi, config.grid_points, config.grid_padding))
            .transpose()?;
        reports.push(summarize(name, &layout, &runs, grid.as_deref(), config.delay_max_fpr)?);
    }
    Ok(CrossValidation {
        schema_version: SCHEMA_VERSION,
        layout,
        seed,
        groups: folds.iter().map(|f| f.group.clone()).collect(),
        skipped_groups: skipped,
        reports,
    })
}

/// Evaluates one trained detector twice over the same threshold sweep: with
/// its state-based regressor and with the regressor replaced by the mean
/// validation score. Returns `(state_based, fixed)`.
pub fn threshold_ablation(
    detector: &TrainedDetector,
    test: &[Execution],
    config: &EvalConfig,
) -> Result<(EvalReport, EvalReport)> {
    let fixed = detector.with_fixed_threshold();
    let shaped: Vec<Execution> = test.iter().map(|e| detector.preprocessor.apply(e)).collect::<Result<_>>()?;
    let c = &detector.calibration;
    let mut run = FoldResponses {
        group: "all".into(),
        labels: shaped.iter().map(|e| e.is_anomalous()).collect(),
        onsets: shaped.iter().map(|e| e.onset).collect(),
        families: shaped.iter().map(|e| e.anomaly_type.clone()).collect(),
        responses: BTreeMap::new(),
        hashes: BTreeMap::new(),
    };
    run.responses.insert(
        "lstm_vae".into(),
        Response::Traces {
            traces: detector_traces(detector, test)?,
            range: (c.residual_min, c.residual_max),
        },
    );
    run.responses.insert(
        FIXED_THRESHOLD.into(),
        Response::Traces {
            traces: detector_traces(&fixed, test)?,
            range: c.fixed_residual_range(),
        },
    );
    let (lo, hi) = union_range((c.residual_min, c.residual_max), c.fixed_residual_range());
    let grid = threshold_grid(lo, hi, config.grid_points, config.grid_padding)?;
    let layout = detector.layout().name();
    let runs = [run];
    Ok((
        summarize("lstm_vae", layout, &runs, Some(&grid), config.delay_max_fpr)?,
        summarize(FIXED_THRESHOLD, layout, &runs, Some(&grid), config.delay_max_fpr)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, BenchmarkConfig};

    #[test]
    fn method_names_round_trip() {
        for m in MethodKind::ALL {
            assert_eq!(m.name().parse::<MethodKind>().unwrap(), m);
        }
        assert!("hmm_gp".parse::<MethodKind>().is_err());
    }

    #[test]
    fn two_groups_give_two_folds() {
        let ds = generate_dataset(&BenchmarkConfig {
            groups: 2,
            executions_per_group: 10,
            ..BenchmarkConfig::default()
        })
        .unwrap();
        let (folds, skipped) = group_folds(&ds).unwrap();
        assert_eq!(folds.len(), 2);
        assert!(skipped.is_empty());
        for f in &folds {
            assert!(f.train.iter().chain(&f.val).all(|e| e.group != f.group && !e.is_anomalous()));
            assert!(f.test.iter().all(|e| e.group == f.group));
        }
    }

    #[test]
    fn seeds_differ_across_folds_and_streams() {
        let s: BTreeSet<u64> = (0..8)
            .flat_map(|f| (0..5).map(move |m| derive_seed(7, f, m)))
            .collect();
        assert_eq!(s.len(), 40);
    }
}
