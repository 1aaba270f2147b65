//! Synthetic assistive-feeding benchmark: approach, contact and retreat
//! phases across sound, force, torque and position sensors, with six
//! injected anomaly families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::execution::{Execution, Label, Layout};
use super::preprocess::extract_features;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyFamily {
    /// Additive force/torque bump (collision).
    ForceBump,
    /// Sustained drift of the user towards the robot (aggressive eating).
    Drift,
    /// Loud transient on the sound channel (environmental noise).
    AudioBurst,
    /// Force sensor stops updating and holds its last value.
    DropoutHold,
    /// Spoon leaves its nominal path and misses the mouth.
    TrajectoryDeviation,
    /// Robot halts; kinematic and force channels hold for the remainder.
    Freeze,
}

impl AnomalyFamily {
    pub const ALL: [AnomalyFamily; 6] = [
        AnomalyFamily::ForceBump,
        AnomalyFamily::Drift,
        AnomalyFamily::AudioBurst,
        AnomalyFamily::DropoutHold,
        AnomalyFamily::TrajectoryDeviation,
        AnomalyFamily::Freeze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyFamily::ForceBump => "force_bump",
            AnomalyFamily::Drift => "drift",
            AnomalyFamily::AudioBurst => "audio_burst",
            AnomalyFamily::DropoutHold => "dropout_hold",
            AnomalyFamily::TrajectoryDeviation => "trajectory_deviation",
            AnomalyFamily::Freeze => "freeze",
        }
    }
}

impl fmt::Display for AnomalyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown anomaly family '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub groups: usize,
    pub executions_per_group: usize,
    pub anomaly_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub rate_hz: f64,
    pub layout: Layout,
    /// Multiplier on every anomaly amplitude.
    pub magnitude: f64,
    pub families: Vec<AnomalyFamily>,
    /// Fraction of each group's non-anomalous executions marked for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            groups: 8,
            executions_per_group: 40,
            anomaly_fraction: 0.45,
            min_len: 120,
            max_len: 160,
            rate_hz: 20.0,
            layout: Layout::Raw17,
            magnitude: 1.0,
            families: AnomalyFamily::ALL.to_vec(),
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups < 2 {
            return Err(Error::Config("benchmark needs at least 2 groups".into()));
        }
        if self.executions_per_group < 2 {
            return Err(Error::Config("each group needs at least 2 executions".into()));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 1.0) {
            return Err(Error::Config(format!(
                "anomaly_fraction must lie in (0, 1), got {}",
                self.anomaly_fraction
            )));
        }
        if self.min_len < 20 || self.max_len < self.min_len {
            return Err(Error::Config(format!(
                "length range [{}, {}] is invalid (minimum 20)",
                self.min_len, self.max_len
            )));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config("rate_hz must be positive".into()));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::Config("magnitude must be positive".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("at least one anomaly family is required".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.groups * self.executions_per_group
    }

    /// Anomalous executions in group `g`; the per-group counts sum to
    /// `round(anomaly_fraction * total)`.
    pub fn anomalous_in_group(&self, g: usize) -> usize {
        let per = self.executions_per_group as f64;
        let f = self.anomaly_fraction;
        let upto = |k: usize| (f * per * k as f64).round() as usize;
        upto(g + 1) - upto(g)
    }
}

/// A generated execution alongside the signals it would have had without
/// the injected anomaly.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedExecution {
    pub execution: Execution,
    pub clean: Matrix,
    pub validation: bool,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Raised-cosine edges of `ramp` samples around a plateau.
fn plateau(t: usize, start: usize, len: usize, ramp: usize) -> f64 {
    if t < start || t >= start + len {
        return 0.0;
    }
    let k = t - start;
    let edge = k.min(start + len - 1 - t) as f64;
    if ramp == 0 || edge >= ramp as f64 {
        1.0
    } else {
        0.5 - 0.5 * (PI * (edge + 1.0) / (ramp as f64 + 1.0)).cos()
    }
}

struct Dynamics {
    /// Joint torque response to contact force, 7 x 3.
    force_to_torque: [[f64; 3]; 7],
    /// Gravity load of the arm as a function of spoon position, 7 x 3.
    pose_to_torque: [[f64; 3]; 7],
    torque_bias: [f64; 7],
}

impl Dynamics {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut m = || {
            let mut out = [[0.0; 3]; 7];
            for row in out.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            out
        };
        let force_to_torque = m();
        let pose_to_torque = m();
        let mut torque_bias = [0.0; 7];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for b in torque_bias.iter_mut() {
            *b = rng.random_range(-2.0..2.0);
        }
        Self {
            force_to_torque,
            pose_to_torque,
            torque_bias,
        }
    }

    fn torque(&self, force: [f64; 3], spoon: [f64; 3]) -> [f64; 7] {
        let mut out = self.torque_bias;
        for (j, o) in out.iter_mut().enumerate() {
            for k in 0..3 {
                *o += 0.6 * self.force_to_torque[j][k] * force[k] + 3.0 * self.pose_to_torque[j][k] * spoon[k];
            }
        }
        out
    }
}

/// Per-subject traits shared by all of a group's executions.
struct Subject {
    mouth: [f64; 3],
    force_gain: f64,
    contact_center: f64,
    contact_width: f64,
    sound_level: f64,
    sway: f64,
}

impl Subject {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            mouth: [
                0.55 + 0.03 * gauss(rng),
                0.03 * gauss(rng),
                0.35 + 0.03 * gauss(rng),
            ],
            force_gain: 2.0 * (1.0 + 0.15 * gauss(rng)).max(0.5),
            contact_center: 0.48 + 0.03 * gauss(rng),
            contact_width: 0.26 + 0.02 * gauss(rng),
            sound_level: 0.03 * (1.0 + 0.2 * gauss(rng)).max(0.3),
            sway: 0.01 * (1.0 + 0.3 * gauss(rng)).max(0.2),
        }
    }
}

/// Noise-free kinematic and force state that anomalies act on before the
/// sensor model is applied.
struct Scene {
    sound: Vec<f64>,
    force: Vec<[f64; 3]>,
    spoon: Vec<[f64; 3]>,
    mouth: Vec<[f64; 3]>,
    contact: Vec<f64>,
}

struct Plan {
    n: usize,
    approach_end: f64,
    contact_end: f64,
    spoon_start: [f64; 3],
    force_dir: [f64; 3],
    force_gain: f64,
    sway_freq: [f64; 3],
    sway_phase: [f64; 3],
    bursts: Vec<(usize, usize, f64)>,
}

impl Plan {
    fn draw(subject: &Subject, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let center = subject.contact_center + 0.02 * gauss(rng);
        let width = (subject.contact_width * (1.0 + 0.08 * gauss(rng))).clamp(0.15, 0.4);
        let mut dir = [-1.0 + 0.05 * gauss(rng), 0.15 + 0.05 * gauss(rng), 0.3 + 0.05 * gauss(rng)];
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let n_bursts = rng.random_range(0..3);
        let bursts = (0..n_bursts)
            .map(|_| {
                let len = rng.random_range(3..7);
                (rng.random_range(0..n - len), len, 0.05 * (0.5 + rng.random::<f64>()))
            })
            .collect();
        Self {
            n,
            approach_end: center - width / 2.0,
            contact_end: center + width / 2.0,
            spoon_start: [
                0.3 + 0.01 * gauss(rng),
                0.25 + 0.01 * gauss(rng),
                0.15 + 0.01 * gauss(rng),
            ],
            force_dir: dir,
            force_gain: subject.force_gain * (1.0 + 0.1 * gauss(rng)),
            sway_freq: [0.0; 3].map(|_| rng.random_range(0.5..1.5)),
            sway_phase: [0.0; 3].map(|_| rng.random_range(0.0..2.0 * PI)),
            bursts,
        }
    }

    fn progress(&self, t: usize) -> f64 {
        t as f64 / (self.n - 1) as f64
    }

    fn scene(&self, subject: &Subject) -> Scene {
        let n = self.n;
        let (a, c) = (self.approach_end, self.contact_end);
        let mut scene = Scene {
            sound: vec![0.0; n],
            force: vec![[0.0; 3]; n],
            spoon: vec![[0.0; 3]; n],
            mouth: vec![[0.0; 3]; n],
            contact: vec![0.0; n],
        };
        for t in 0..n {
            let u = self.progress(t);
            let mut mouth = subject.mouth;
            for k in 0..3 {
                mouth[k] += subject.sway * (2.0 * PI * self.sway_freq[k] * u + self.sway_phase[k]).sin();
            }
            let target = [mouth[0] - 0.03, mouth[1], mouth[2]];
            let retreat = [self.spoon_start[0] + 0.05, self.spoon_start[1] - 0.05, self.spoon_start[2] + 0.05];
            let spoon = if u < a {
                let s = min_jerk((u - 0.05) / (a - 0.05));
                lerp3(self.spoon_start, target, s)
            } else if u < c {
                target
            } else {
                let s = min_jerk((u - c) / (0.95 - c));
                lerp3(target, retreat, s)
            };
            let w = if u > a && u < c { (PI * (u - a) / (c - a)).sin().powi(2) } else { 0.0 };
            scene.mouth[t] = mouth;
            scene.spoon[t] = spoon;
            scene.contact[t] = w;
            scene.force[t] = self.force_dir.map(|d| d * self.force_gain * w);
            scene.sound[t] = subject.sound_level + 0.04 * w;
        }
        for &(start, len, amp) in &self.bursts {
            for t in start..start + len {
                scene.sound[t] += amp * plateau(t, start, len, 1);
            }
        }
        scene
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]
}

/// Sensor noise draws, fixed per execution so clean and anomalous versions
/// share them.
struct SensorNoise {
    values: Vec<[f64; 17]>,
}

impl SensorNoise {
    fn draw(n: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            values: (0..n).map(|_| [0.0; 17].map(|_| gauss(rng))).collect(),
        }
    }
}

fn observe(scene: &Scene, noise: &SensorNoise, dynamics: &Dynamics, held_torque: Option<(usize, [f64; 7])>) -> Matrix {
    let n = scene.force.len();
    let mut m = Matrix::zeros(n, 17);
    for t in 0..n {
        let e = &noise.values[t];
        let row = m.row_mut(t);
        let w = scene.contact[t];
        row[0] = (scene.sound[t] + 0.006 * e[0]).abs();
        let force_sd = 0.03 + 0.12 * w;
        for k in 0..3 {
            row[1 + k] = scene.force[t][k] + force_sd * e[1 + k];
        }
        let torque = match held_torque {
            Some((from, value)) if t >= from => value,
            _ => dynamics.torque(scene.force[t], scene.spoon[t]),
        };
        for j in 0..7 {
            row[4 + j] = torque[j] + (0.02 + 0.05 * w) * e[4 + j];
        }
        for k in 0..3 {
            row[11 + k] = scene.spoon[t][k] + 0.002 * e[11 + k];
            row[14 + k] = scene.mouth[t][k] + 0.003 * e[14 + k];
        }
    }
    m
}

fn channel_std(m: &Matrix, c: usize) -> f64 {
    let v = m.column_values(c);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn index_at(plan: &Plan, u: f64) -> usize {
    ((u * (plan.n - 1) as f64).round() as usize).min(plan.n - 1)
}

/// Applies `family` to the scene (or, for sensor-level faults, to the
/// observed matrix) and returns the raw onset index.
#[allow(clippy::too_many_arguments)]
fn inject(
    family: AnomalyFamily,
    magnitude: f64,
    rate_hz: f64,
    plan: &Plan,
    scene: &mut Scene,
    noise: &SensorNoise,
    dynamics: &Dynamics,
    clean: &Matrix,
    rng: &mut ChaCha8Rng,
) -> (Matrix, usize) {
    let n = plan.n;
    let (a, c) = (plan.approach_end, plan.contact_end);
    let rate_len = |secs: f64| ((secs * rate_hz) as usize).max(2);
    match family {
        AnomalyFamily::ForceBump => {
            let onset = index_at(plan, rng.random_range(0.15..0.85));
            let len = rate_len(rng.random_range(0.6..1.2)).min(n - onset);
            let channel = rng.random_range(0..3);
            let amp = 5.0 * magnitude * channel_std(clean, 1 + channel);
            for t in onset..onset + len {
                scene.force[t][channel] += amp * plateau(t, onset, len, 1);
            }
            (observe(scene, noise, dynamics, None), onset)
        }
        AnomalyFamily::Drift => {
            let onset = index_at(plan, rng.random_range(0.2..0.6));
            let lean = [-0.08 * magnitude, 0.0, -0.02 * magnitude];
            let push = 0.6 * magnitude * plan.force_gain;
            for t in onset..n {
                let s = (t - onset) as f64 / (n - onset) as f64;
                for k in 0..3 {
                    scene.mouth[t][k] += s * lean[k];
                    scene.force[t][k] += s * push * plan.force_dir[k];
                }
            }
            (observe(scene, noise, dynamics, None), onset)
        }
        AnomalyFamily::AudioBurst => {
            let onset = index_at(plan, rng.random_range(0.1..0.85));
            let len = rate_len(rng.random_range(0.5..1.5)).min(n - onset);
            let amp = 0.25 * magnitude;
            for t in onset..onset + len {
                scene.sound[t] += amp * plateau(t, onset, len, 2) * (0.7 + 0.6 * rng.random::<f64>());
            }
            (observe(scene, noise, dynamics, None), onset)
        }
        AnomalyFamily::DropoutHold => {
            let onset = index_at(plan, rng.random_range(a + 0.3 * (c - a)..a + 0.7 * (c - a)));
            let mut m = observe(scene, noise, dynamics, None);
            let held: Vec<f64> = m.row(onset)[1..4].to_vec();
            for t in onset..n {
                m.row_mut(t)[1..4].copy_from_slice(&held);
            }
            (m, onset)
        }
        AnomalyFamily::TrajectoryDeviation => {
            let onset = index_at(plan, rng.random_range(0.1..(a - 0.05).max(0.12)));
            let ramp = rate_len(0.8) as f64;
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let offset = [0.0, side * 0.06 * magnitude, 0.03 * magnitude];
            for t in onset..n {
                let s = ((t - onset) as f64 / ramp).min(1.0);
                for k in 0..3 {
                    scene.spoon[t][k] += s * offset[k];
                }
                let miss = 1.0 - 0.8 * s.min(magnitude);
                scene.force[t] = scene.force[t].map(|f| f * miss.max(0.0));
            }
            (observe(scene, noise, dynamics, None), onset)
        }
        AnomalyFamily::Freeze => {
            let onset = index_at(plan, rng.random_range(0.2..0.8));
            let torque = dynamics.torque(scene.force[onset], scene.spoon[onset]);
            let (spoon, force) = (scene.spoon[onset], scene.force[onset]);
            for t in onset..n {
                scene.spoon[t] = spoon;
                scene.force[t] = force;
                scene.contact[t] = scene.contact[onset];
            }
            (observe(scene, noise, dynamics, Some((onset, torque))), onset)
        }
    }
}

/// Generates the benchmark keeping each execution's anomaly-free signals.
pub fn generate_with_clean(config: &BenchmarkConfig) -> Result<Vec<GeneratedExecution>> {
    config.validate()?;
    let dynamics = Dynamics::new(config.seed);
    let mut out = Vec::with_capacity(config.total());
    let mut anomaly_counter = 0usize;
    for g in 0..config.groups {
        let mut group_rng = ChaCha8Rng::seed_from_u64(config.seed);
        group_rng.set_stream(1 + g as u64);
        let subject = Subject::draw(&mut group_rng);

        let per = config.executions_per_group;
        let n_anom = config.anomalous_in_group(g);
        let mut labels: Vec<bool> = (0..per).map(|i| i < n_anom).collect();
        shuffle(&mut labels, &mut group_rng);
        let n_normal = per - n_anom;
        let n_val = (config.validation_fraction * n_normal as f64).round() as usize;
        let mut normal_seen = 0usize;

        for (i, &anomalous) in labels.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((g as u64 + 1) << 32) | i as u64);
            let n = rng.random_range(config.min_len..=config.max_len);
            let plan = Plan::draw(&subject, n, &mut rng);
            let noise = SensorNoise::draw(n, &mut rng);
            let mut scene = plan.scene(&subject);
            let clean = observe(&scene, &noise, &dynamics, None);

            let id = format!("g{g:02}_e{i:03}");
            let (signals, label, anomaly_type, onset, validation) = if anomalous {
                let family = config.families[anomaly_counter % config.families.len()];
                anomaly_counter += 1;
                let (m, onset) = inject(family, config.magnitude, config.rate_hz, &plan, &mut scene, &noise, &dynamics, &clean, &mut rng);
                (m, Label::Anomalous, Some(family.name().to_string()), Some(onset), false)
            } else {
                let k = normal_seen;
                let validation = (k + 1) * n_val / n_normal != k * n_val / n_normal;
                normal_seen += 1;
                (clean.clone(), Label::NonAnomalous, None, None, validation)
            };
            let mut execution = Execution {
                id,
                group: format!("g{g:02}"),
                layout: Layout::Raw17,
                signals,
                rate_hz: config.rate_hz,
                label,
                anomaly_type,
                onset,
            };
            let mut clean = clean;
            if config.layout == Layout::Features4 {
                let clean_exec = Execution {
                    signals: clean,
                    label: Label::NonAnomalous,
                    anomaly_type: None,
                    onset: None,
                    ..execution.clone()
                };
                clean = extract_features(&clean_exec)?.signals;
                execution = extract_features(&execution)?;
            }
            execution.validate()?;
            out.push(GeneratedExecution {
                execution,
                clean,
                validation,
            });
        }
    }
    Ok(out)
}

fn shuffle(v: &mut [bool], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

pub fn generate_benchmark(config: &BenchmarkConfig) -> Result<Vec<Execution>> {
    Ok(generate_with_clean(config)?.into_iter().map(|g| g.execution).collect())
}
