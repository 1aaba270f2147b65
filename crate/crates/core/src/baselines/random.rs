use rand::Rng;

use crate::error::{Error, Result};

/// Data-independent classifier that flags with probability `weight`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomDetector {
    weight: f64,
}

impl RandomDetector {
    pub fn new(weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Domain(format!("weight must lie in [0, 1], got {weight}")));
        }
        Ok(Self { weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Fresh draw per call.
    pub fn verdict<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.weight > 0.0 && rng.random::<f64>() < self.weight
    }
}
