use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discrete variance schedule. Steps are 1-indexed: `t` ranges over `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas from `beta_min` to `beta_max` over `steps` steps.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}..{beta_max}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_min]
        } else {
            let span = (beta_max - beta_min) / (steps - 1) as f64;
            (0..steps).map(|i| beta_min + span * i as f64).collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::invalid(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index {
                index: t,
                lo: 1,
                hi: self.steps(),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// Reverse-step noise scale; the variance is fixed to `beta_t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.beta(t).sqrt()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let s = NoiseSchedule::linear(1, 0.1, 0.1).unwrap();
        assert_eq!(s.betas(), &[0.1]);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn two_steps() {
        let s = NoiseSchedule::linear(2, 0.1, 0.2).unwrap();
        assert!((s.beta(2) - 0.2).abs() < 1e-15);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn default_schedule_is_strictly_decreasing() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        let last = s.alpha_bar(100);
        assert!(last > 0.0 && last < 1.0);
        assert!((1..=100).all(|t| s.sigma(t) > 0.0));
        assert!((s.beta(1) - 1e-4).abs() < 1e-15 && (s.beta(100) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(NoiseSchedule::linear(0, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn step_bounds() {
        let s = NoiseSchedule::linear(5, 0.1, 0.2).unwrap();
        assert!(s.check_step(1).is_ok() && s.check_step(5).is_ok());
        assert!(matches!(s.check_step(0), Err(Error::Index { .. })));
        assert!(matches!(s.check_step(6), Err(Error::Index { .. })));
    }
}
