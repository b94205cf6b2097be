//! Self-checks behind `validate-uq` and `gradcheck`: the variance split is
//! exact, the moment recursion matches simulation, the forward marginals
//! match their closed forms and backprop matches finite differences.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_diffuse, NoiseSchedule};
use crate::nn::{finite_diff_check, Activation, DenseNet};
use crate::uncertainty::{
    linear_score_moments, mc_moment_oracle, propagate_moments_with_cov_coefficient, MomentState,
    UncertaintyEstimate,
};
use crate::{Error, Result};

pub const DECOMPOSITION_TOLERANCE: f64 = 1e-12;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Agreement band, in Monte Carlo standard errors.
pub const MC_Z_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub grids: usize,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl DecompositionCheck {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Compares `aleatoric + epistemic` with the pooled population variance on
/// random `M x n` grids (`2 <= M <= 6`, `2 <= n <= 16`).
pub fn check_decomposition<R: Rng + ?Sized>(grids: usize, rng: &mut R) -> Result<DecompositionCheck> {
    let mut max_residual: f64 = 0.0;
    for _ in 0..grids {
        let m = rng.random_range(2..=6);
        let n = rng.random_range(2..=16);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let grid: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let offset = rng.random_range(0.0..2.0) * scale;
                (0..n).map(|_| offset + rng.random_range(0.0..scale)).collect()
            })
            .collect();
        let est = UncertaintyEstimate::from_norm_grid(&grid)?;
        let pooled: Vec<f64> = grid.concat();
        let count = pooled.len() as f64;
        let mu = pooled.iter().sum::<f64>() / count;
        let total = pooled.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / count;
        max_residual = max_residual.max((est.total() - total).abs());
    }
    Ok(DecompositionCheck {
        grids,
        max_residual,
        tolerance: DECOMPOSITION_TOLERANCE,
    })
}

/// A linear score `s(x) = a x + b` started from `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearScoreCase {
    pub a: f64,
    pub b: f64,
    pub mean: f64,
    pub variance: f64,
}

pub const MOMENT_CASES: [LinearScoreCase; 5] = [
    LinearScoreCase { a: 0.1, b: 0.0, mean: 0.0, variance: 1.0 },
    LinearScoreCase { a: 0.0, b: 0.0, mean: 0.0, variance: 1.0 },
    LinearScoreCase { a: -0.3, b: 0.5, mean: 1.0, variance: 2.0 },
    LinearScoreCase { a: 0.2, b: -0.4, mean: -1.0, variance: 0.5 },
    LinearScoreCase { a: -0.5, b: 1.0, mean: 2.0, variance: 3.0 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub case: LinearScoreCase,
    pub step: usize,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    /// Variance when the covariance term is weighted by one half.
    pub half_cov_variance: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

impl MomentRow {
    pub fn mean_z(&self) -> f64 {
        z_score(self.analytic_mean, self.mc_mean, self.mean_se)
    }

    pub fn variance_z(&self) -> f64 {
        z_score(self.analytic_variance, self.mc_variance, self.variance_se)
    }

    pub fn half_cov_z(&self) -> f64 {
        z_score(self.half_cov_variance, self.mc_variance, self.variance_se)
    }

    pub fn passed(&self) -> bool {
        self.mean_z() <= MC_Z_TOLERANCE && self.variance_z() <= MC_Z_TOLERANCE
    }

    pub fn half_cov_passed(&self) -> bool {
        self.half_cov_z() <= MC_Z_TOLERANCE
    }
}

fn z_score(expected: f64, observed: f64, se: f64) -> f64 {
    let diff = (expected - observed).abs();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub draws: usize,
    pub steps: usize,
    pub rows: Vec<MomentRow>,
}

impl MomentCheck {
    /// Every row of the exact recursion agrees with simulation.
    pub fn recursion_agrees(&self) -> bool {
        self.rows.iter().all(MomentRow::passed)
    }

    /// The half-covariance variant misses the band somewhere with `a != 0`.
    pub fn half_cov_rejected(&self) -> bool {
        self.rows.iter().any(|r| r.case.a != 0.0 && !r.half_cov_passed())
    }

    pub fn passed(&self) -> bool {
        self.recursion_agrees() && self.half_cov_rejected()
    }

    pub fn table(&self) -> String {
        let mut out = String::from(
            "    a      b   m0   v0 step   mean(exact)   mean(mc)  z      var(exact)  var(mc)   z    var(half) z(half)\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:5.2} {:6.2} {:4.1} {:4.1} {:4} {:12.5} {:10.5} {:5.2} {:12.5} {:9.5} {:5.2} {:10.5} {:6.2}{}\n",
                r.case.a,
                r.case.b,
                r.case.mean,
                r.case.variance,
                r.step,
                r.analytic_mean,
                r.mc_mean,
                r.mean_z(),
                r.analytic_variance,
                r.mc_variance,
                r.variance_z(),
                r.half_cov_variance,
                r.half_cov_z(),
                if r.passed() { "" } else { "  MISMATCH" },
            ));
        }
        out
    }
}

/// Runs the moment recursion (and its half-covariance variant) against the
/// Monte Carlo oracle for every case.
pub fn check_moments<R: Rng + ?Sized>(
    cases: &[LinearScoreCase],
    steps: usize,
    draws: usize,
    rng: &mut R,
) -> Result<MomentCheck> {
    let mut rows = Vec::with_capacity(cases.len() * steps);
    for case in cases {
        let init = MomentState::isotropic(1, case.mean, case.variance)?;
        let simulated = mc_moment_oracle(case.a, case.b, &init, steps, draws, rng)?;
        let mut exact = init.clone();
        let mut half = init;
        for (step, emp) in simulated.iter().enumerate() {
            exact = linear_step(case, &exact, 1.0)?;
            half = linear_step(case, &half, 0.5)?;
            rows.push(MomentRow {
                case: *case,
                step: step + 1,
                analytic_mean: exact.mean[0],
                analytic_variance: exact.variance[0],
                half_cov_variance: half.variance[0],
                mc_mean: emp.state.mean[0],
                mc_variance: emp.state.variance[0],
                mean_se: emp.mean_se[0],
                variance_se: emp.variance_se[0],
            });
        }
    }
    Ok(MomentCheck { draws, steps, rows })
}

fn linear_step(case: &LinearScoreCase, state: &MomentState, cov_coefficient: f64) -> Result<MomentState> {
    let (m, v, c) = linear_score_moments(case.a, case.b, state);
    propagate_moments_with_cov_coefficient(state, &m, &v, &c, cov_coefficient)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardRow {
    pub t: usize,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

impl ForwardRow {
    pub fn passed(&self) -> bool {
        z_score(self.analytic_mean, self.mc_mean, self.mean_se) <= MC_Z_TOLERANCE
            && z_score(self.analytic_variance, self.mc_variance, self.variance_se) <= MC_Z_TOLERANCE
    }
}

/// Empirical mean and variance of `forward_diffuse(x0, t, eps)` against
/// `sqrt(abar_t) x0` and `1 - abar_t`, for a scalar `x0`.
pub fn check_forward_marginals<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    x0: f64,
    ts: &[usize],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<ForwardRow>> {
    if draws < 2 {
        return Err(Error::invalid("need at least 2 draws"));
    }
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut xs = Vec::with_capacity(draws);
        for _ in 0..draws {
            let eps: f64 = rng.sample(StandardNormal);
            xs.push(forward_diffuse(&[x0], t, &[eps], schedule)?[0]);
        }
        let n = draws as f64;
        let m = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let ab = schedule.alpha_bar(t);
        rows.push(ForwardRow {
            t,
            analytic_mean: ab.sqrt() * x0,
            analytic_variance: 1.0 - ab,
            mc_mean: m,
            mc_variance: m2,
            mean_se: (m2 / n).sqrt(),
            variance_se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientAudit {
    /// Worst relative error of each net.
    pub per_net: Vec<f64>,
    pub worst_parameter: String,
    pub tolerance: f64,
}

impl GradientAudit {
    pub fn max_relative_error(&self) -> f64 {
        self.per_net.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.tolerance
    }
}

/// Full finite-difference check of `nets` random small MLPs on random batches.
pub fn check_gradients<R: Rng + ?Sized>(nets: usize, rng: &mut R) -> Result<GradientAudit> {
    let mut per_net = Vec::with_capacity(nets);
    let mut worst = (f64::NEG_INFINITY, String::new());
    for _ in 0..nets {
        let hidden = rng.random_range(1..=3);
        let mut dims = vec![rng.random_range(1..=6)];
        dims.extend((0..hidden).map(|_| rng.random_range(2..=10)));
        dims.push(rng.random_range(1..=4));
        let activation = if rng.random::<bool>() { Activation::Tanh } else { Activation::Relu };
        let net = DenseNet::new_random(&dims, activation, rng)?;
        let batch = rng.random_range(1..=8);
        let gaussian = |len: usize, rng: &mut R| (0..len).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>();
        let inputs: Vec<Vec<f64>> = (0..batch).map(|_| gaussian(dims[0], rng)).collect();
        let targets: Vec<Vec<f64>> = (0..batch).map(|_| gaussian(*dims.last().unwrap(), rng)).collect();
        let report = finite_diff_check(&net, &inputs, &targets)?;
        if report.max_relative_error > worst.0 {
            worst = (report.max_relative_error, format!("{dims:?}/{activation:?} {}", report.worst_parameter));
        }
        per_net.push(report.max_relative_error);
    }
    Ok(GradientAudit {
        per_net,
        worst_parameter: worst.1,
        tolerance: GRADCHECK_TOLERANCE,
    })
}

/// Decomposition and moment checks together, as reported by `validate-uq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqReport {
    pub decomposition: DecompositionCheck,
    pub moments: MomentCheck,
}

impl UqReport {
    pub fn passed(&self) -> bool {
        self.decomposition.passed() && self.moments.passed()
    }
}

pub const UQ_GRIDS: usize = 50;
pub const UQ_STEPS: usize = 2;
pub const UQ_DRAWS: usize = 100_000;

pub fn validate_uq<R: Rng + ?Sized>(rng: &mut R) -> Result<UqReport> {
    Ok(UqReport {
        decomposition: check_decomposition(UQ_GRIDS, rng)?,
        moments: check_moments(&MOMENT_CASES, UQ_STEPS, UQ_DRAWS, rng)?,
    })
}

/// Spearman rank correlation, with tied values given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("spearman needs two equal-length series of at least 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decomposition_is_exact() {
        let check = check_decomposition(50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(check.passed(), "{check:?}");
    }

    #[test]
    fn first_case_variance_is_1_36() {
        let row = &check_moments(&MOMENT_CASES[..1], 1, 20_000, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap()
            .rows[0];
        assert!((row.analytic_variance - 1.36).abs() < 1e-12);
        assert!((row.half_cov_variance - 1.31).abs() < 1e-12);
    }

    #[test]
    fn zero_slope_cases_agree_under_both_variants() {
        let check = check_moments(&MOMENT_CASES[1..2], 3, 10_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(check.rows.iter().all(|r| r.analytic_variance == r.half_cov_variance));
    }

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // Textbook example: d^2 sum = 2 over n = 5 gives 1 - 6*2/(5*24) = 0.9.
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 3.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn gradient_audit_small() {
        let audit = check_gradients(5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(audit.per_net.len(), 5);
        assert!(audit.passed(), "{audit:?}");
    }

    #[test]
    fn forward_marginals_small() {
        let schedule = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let rows = check_forward_marginals(&schedule, 1.5, &[1, 50, 100], 20_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(rows.iter().all(ForwardRow::passed), "{rows:?}");
        assert!(schedule.check_step(0).is_err());
    }
}
