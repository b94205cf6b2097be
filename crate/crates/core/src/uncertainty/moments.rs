use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-coordinate mean and (diagonal) variance of the reverse-process state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl MomentState {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::shape("mean and variance differ in dimension"));
        }
        if let Some(v) = variance.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("negative variance {v}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(dim: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean; dim], vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One step of `x' = x/2 + s(x) + eps` with `eps ~ N(0, I)`:
///
/// ```text
/// mean' = mean/2 + E[s]
/// var'  = var/4 + Var(s) + Cov(x, s) + 1
/// ```
///
/// The covariance coefficient follows from `Var(X/2 + S)`.
pub fn propagate_moments(
    state: &MomentState,
    score_mean: &[f64],
    score_var: &[f64],
    cross_cov: &[f64],
) -> Result<MomentState> {
    propagate_moments_with_cov_coefficient(state, score_mean, score_var, cross_cov, 1.0)
}

/// [`propagate_moments`] with an arbitrary weight on the covariance term,
/// used to compare against the variant that weights it by one half.
pub fn propagate_moments_with_cov_coefficient(
    state: &MomentState,
    score_mean: &[f64],
    score_var: &[f64],
    cross_cov: &[f64],
    cov_coefficient: f64,
) -> Result<MomentState> {
    let d = state.dim();
    if score_mean.len() != d || score_var.len() != d || cross_cov.len() != d {
        return Err(Error::shape(format!("score moments must have dim {d}")));
    }
    if let Some(v) = score_var.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("negative score variance {v}")));
    }
    let mean = state.mean.iter().zip(score_mean).map(|(m, s)| 0.5 * m + s).collect();
    let mut variance = Vec::with_capacity(d);
    for i in 0..d {
        let v = 0.25 * state.variance[i] + score_var[i] + cov_coefficient * cross_cov[i] + 1.0;
        if !(v >= 0.0) {
            return Err(Error::Numeric {
                path: format!("variance[{i}]"),
                value: v,
            });
        }
        variance.push(v);
    }
    Ok(MomentState { mean, variance })
}

/// Score moments for the linear score `s(x) = a x + b` under `state`:
/// `(E[s], Var(s), Cov(x, s))`.
pub fn linear_score_moments(a: f64, b: f64, state: &MomentState) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mean = state.mean.iter().map(|m| a * m + b).collect();
    let var = state.variance.iter().map(|v| a * a * v).collect();
    let cov = state.variance.iter().map(|v| a * v).collect();
    (mean, var, cov)
}

/// Empirical moments after one simulated step, with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub state: MomentState,
    pub mean_se: Vec<f64>,
    pub variance_se: Vec<f64>,
}

pub const MIN_ORACLE_DRAWS: usize = 10_000;

/// Simulates `x' = x/2 + (a x + b) + eps` over `draws` independent
/// trajectories started from `N(init.mean, init.variance)` and reports the
/// empirical moments after each of `steps` steps.
pub fn mc_moment_oracle<R: Rng + ?Sized>(
    a: f64,
    b: f64,
    init: &MomentState,
    steps: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<EmpiricalMoments>> {
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::invalid(format!("need at least {MIN_ORACLE_DRAWS} draws, got {draws}")));
    }
    let d = init.dim();
    let mut paths: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let sd = init.variance[i].sqrt();
            (0..draws)
                .map(|_| init.mean[i] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        for coord in paths.iter_mut() {
            for x in coord.iter_mut() {
                let eps: f64 = rng.sample(StandardNormal);
                *x = 0.5 * *x + (a * *x + b) + eps;
            }
        }
        let n = draws as f64;
        let mut mean = Vec::with_capacity(d);
        let mut variance = Vec::with_capacity(d);
        let mut mean_se = Vec::with_capacity(d);
        let mut variance_se = Vec::with_capacity(d);
        for coord in &paths {
            let m = coord.iter().sum::<f64>() / n;
            let (m2, m4) = coord.iter().fold((0.0, 0.0), |(s2, s4), x| {
                let c = (x - m) * (x - m);
                (s2 + c, s4 + c * c)
            });
            let (m2, m4) = (m2 / n, m4 / n);
            mean.push(m);
            variance.push(m2);
            mean_se.push((m2 / n).sqrt());
            variance_se.push(((m4 - m2 * m2).max(0.0) / n).sqrt());
        }
        out.push(EmpiricalMoments {
            state: MomentState { mean, variance },
            mean_se,
            variance_se,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn zero_score_adds_unit_noise() {
        let s = MomentState::isotropic(3, 0.0, 1.0).unwrap();
        let z = vec![0.0; 3];
        let next = propagate_moments(&s, &z, &z, &z).unwrap();
        assert!(next.mean.iter().all(|m| *m == 0.0));
        assert!(next.variance.iter().all(|v| close(*v, 1.25)));
    }

    #[test]
    fn constant_score_shifts_mean_only() {
        let s = MomentState::new(vec![2.0, -4.0], vec![4.0, 0.0]).unwrap();
        let next = propagate_moments(&s, &[0.5, 0.5], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(next.mean, vec![1.5, -1.5]);
        assert_eq!(next.variance, vec![2.0, 1.0]);
    }

    #[test]
    fn linear_score_variance() {
        let s = MomentState::isotropic(1, 0.0, 1.0).unwrap();
        let (m, v, c) = linear_score_moments(0.1, 0.0, &s);
        let next = propagate_moments(&s, &m, &v, &c).unwrap();
        assert!(close(next.variance[0], 1.36));
        let half = propagate_moments_with_cov_coefficient(&s, &m, &v, &c, 0.5).unwrap();
        assert!(close(half.variance[0], 1.31));
    }

    #[test]
    fn inconsistent_covariance_is_a_numeric_error() {
        let s = MomentState::isotropic(1, 0.0, 1.0).unwrap();
        let err = propagate_moments(&s, &[0.0], &[0.0], &[-5.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
        assert!(propagate_moments(&s, &[0.0], &[-1.0], &[0.0]).is_err());
        assert!(propagate_moments(&s, &[0.0, 0.0], &[0.0], &[0.0]).is_err());
    }

    fn within(emp: &EmpiricalMoments, exact: &MomentState) -> bool {
        (0..exact.dim()).all(|i| {
            (emp.state.mean[i] - exact.mean[i]).abs() <= 3.0 * emp.mean_se[i]
                && (emp.state.variance[i] - exact.variance[i]).abs() <= 3.0 * emp.variance_se[i]
        })
    }

    #[test]
    fn oracle_zero_score_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = MomentState::isotropic(1, 0.0, 1.0).unwrap();
        let emp = mc_moment_oracle(0.0, 0.0, &init, 1, 100_000, &mut rng).unwrap();
        assert!(within(&emp[0], &MomentState::isotropic(1, 0.0, 1.25).unwrap()));
    }

    #[test]
    fn oracle_cancelling_score_forgets_initial_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = MomentState::isotropic(1, 3.0, 25.0).unwrap();
        let emp = mc_moment_oracle(-0.5, 0.7, &init, 1, 100_000, &mut rng).unwrap();
        assert!(within(&emp[0], &MomentState::isotropic(1, 0.7, 1.0).unwrap()));
    }

    #[test]
    fn oracle_agrees_with_recursion_for_linear_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = MomentState::isotropic(1, 0.0, 1.0).unwrap();
        let emp = mc_moment_oracle(0.1, 0.0, &init, 1, 100_000, &mut rng).unwrap();
        assert!(within(&emp[0], &MomentState::isotropic(1, 0.0, 1.36).unwrap()));
    }

    #[test]
    fn oracle_requires_enough_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init = MomentState::isotropic(1, 0.0, 1.0).unwrap();
        assert!(mc_moment_oracle(0.0, 0.0, &init, 1, 100, &mut rng).is_err());
    }
}
