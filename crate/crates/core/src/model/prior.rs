use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Progress-based prior: the mean moves linearly from `start` at the first
/// step to `end` at step `length`; the covariance is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSchedule {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub length: usize,
}

impl PriorSchedule {
    pub fn new(start: Vec<f64>, end: Vec<f64>, length: usize) -> Result<Self> {
        check_dim("prior endpoints", start.len(), end.len())?;
        if length == 0 {
            return Err(Error::Config("prior schedule length must be at least 1".into()));
        }
        if start.is_empty() {
            return Err(Error::Config("prior needs at least one latent dimension".into()));
        }
        Ok(Self { start, end, length })
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Prior mean at 1-based step `t`.
    pub fn mean_at(&self, t: usize) -> Result<Vec<f64>> {
        if t == 0 || t > self.length {
            return Err(Error::Domain(format!(
                "prior step {t} outside 1..={}",
                self.length
            )));
        }
        if self.length == 1 {
            return Ok(self.start.clone());
        }
        let frac = (t - 1) as f64 / (self.length - 1) as f64;
        Ok(self
            .start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| a + frac * (b - a))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let p = PriorSchedule::new(vec![0.0; 3], vec![2.0; 3], 3).unwrap();
        assert_eq!(p.mean_at(1).unwrap(), vec![0.0; 3]);
        assert_eq!(p.mean_at(3).unwrap(), vec![2.0; 3]);
        assert_eq!(p.mean_at(2).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn single_step_schedule_returns_start() {
        let p = PriorSchedule::new(vec![0.5], vec![9.0], 1).unwrap();
        assert_eq!(p.mean_at(1).unwrap(), vec![0.5]);
    }

    #[test]
    fn out_of_range_steps_fail() {
        let p = PriorSchedule::new(vec![0.0], vec![1.0], 4).unwrap();
        assert!(p.mean_at(0).is_err());
        assert!(p.mean_at(5).is_err());
        assert!(PriorSchedule::new(vec![0.0], vec![1.0, 2.0], 4).is_err());
    }
}
