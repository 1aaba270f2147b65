use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonAnomalous,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonAnomalous => "non_anomalous",
            Label::Anomalous => "anomalous",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_anomalous" => Ok(Label::NonAnomalous),
            "anomalous" => Ok(Label::Anomalous),
            other => Err(Error::Config(format!("unknown label '{other}'"))),
        }
    }
}

pub const RAW_CHANNELS: [&str; 17] = [
    "sound_energy",
    "force_x",
    "force_y",
    "force_z",
    "torque_1",
    "torque_2",
    "torque_3",
    "torque_4",
    "torque_5",
    "torque_6",
    "torque_7",
    "spoon_x",
    "spoon_y",
    "spoon_z",
    "mouth_x",
    "mouth_y",
    "mouth_z",
];

pub const FEATURE_CHANNELS: [&str; 4] = ["sound_energy", "torque_1", "accumulated_force", "spoon_mouth_distance"];

/// Channel layouts understood by the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Sound energy, 3 force, 7 joint torque, 3 spoon and 3 mouth position.
    Raw17,
    /// Sound energy, first joint torque, accumulated force, spoon-mouth distance.
    Features4,
}

impl Layout {
    pub fn channels(self) -> &'static [&'static str] {
        match self {
            Layout::Raw17 => &RAW_CHANNELS,
            Layout::Features4 => &FEATURE_CHANNELS,
        }
    }

    pub fn dim(self) -> usize {
        self.channels().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::Raw17 => "raw17",
            Layout::Features4 => "features4",
        }
    }

    pub fn detect<S: AsRef<str>>(names: &[S]) -> Option<Layout> {
        [Layout::Raw17, Layout::Features4].into_iter().find(|l| {
            l.channels().len() == names.len() && l.channels().iter().zip(names).all(|(a, b)| *a == b.as_ref())
        })
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw17" => Ok(Layout::Raw17),
            "features4" => Ok(Layout::Features4),
            other => Err(Error::Config(format!("unknown layout '{other}' (expected raw17 or features4)"))),
        }
    }
}

/// One task execution: a `T x D` signal matrix plus label metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub id: String,
    pub group: String,
    pub layout: Layout,
    pub signals: Matrix,
    pub rate_hz: f64,
    pub label: Label,
    pub anomaly_type: Option<String>,
    /// Row index where the anomaly begins.
    pub onset: Option<usize>,
}

impl Execution {
    pub fn validate(&self) -> Result<()> {
        if self.signals.cols() != self.layout.dim() {
            return Err(Error::dim("execution channels", self.layout.dim(), self.signals.cols()));
        }
        if !self.signals.is_finite() {
            return Err(Error::Domain(format!("execution {} contains non-finite values", self.id)));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Domain(format!("execution {} has invalid rate {}", self.id, self.rate_hz)));
        }
        match (self.label, self.onset) {
            (Label::Anomalous, None) => {
                return Err(Error::Contract(format!("anomalous execution {} has no onset", self.id)))
            }
            (Label::NonAnomalous, Some(_)) => {
                return Err(Error::Contract(format!("non-anomalous execution {} has an onset", self.id)))
            }
            (_, Some(o)) if o >= self.len() => {
                return Err(Error::Contract(format!(
                    "onset {o} of execution {} is past its {} rows",
                    self.id,
                    self.len()
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.signals.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.signals.cols()
    }

    pub fn is_anomalous(&self) -> bool {
        self.label == Label::Anomalous
    }
}
