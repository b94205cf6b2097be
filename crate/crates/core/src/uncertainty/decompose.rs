use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ConditionalSampler;
use crate::{Error, Result};

/// Aleatoric/epistemic split of the sample-norm spread at one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    /// Mean over members of the within-member variance of sample norms.
    pub aleatoric: f64,
    /// Variance over members of the per-member mean sample norm.
    pub epistemic: f64,
    pub per_model_mean_norms: Vec<f64>,
    pub per_model_norm_variances: Vec<f64>,
    pub n_per_model: usize,
}

impl UncertaintyEstimate {
    /// Builds the estimate from an `M x n` grid of sample norms.
    ///
    /// Population (divide-by-count) variances are used throughout, so
    /// `aleatoric + epistemic` equals the pooled variance of all norms.
    pub fn from_norm_grid(grid: &[Vec<f64>]) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 members, got {}", grid.len())));
        }
        let n = grid[0].len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples per member, got {n}")));
        }
        if grid.iter().any(|row| row.len() != n) {
            return Err(Error::shape("members have unequal sample counts"));
        }
        let means: Vec<f64> = grid.iter().map(|row| mean(row)).collect();
        let variances: Vec<f64> = grid.iter().map(|row| population_variance(row)).collect();
        Ok(Self {
            aleatoric: mean(&variances),
            epistemic: population_variance(&means),
            per_model_mean_norms: means,
            per_model_norm_variances: variances,
            n_per_model: n,
        })
    }

    pub fn total(&self) -> f64 {
        self.aleatoric + self.epistemic
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Divide-by-count variance. Two-pass, so a constant slice gives exactly 0.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Draws `n` samples per member at target `y` and decomposes the spread of
/// their Euclidean norms.
///
/// Every member replays the same noise stream (one seed drawn from `rng`),
/// so differences between members come from their parameters alone.
pub fn decompose<S: ConditionalSampler, R: Rng + ?Sized>(
    members: &[S],
    y: f64,
    n: usize,
    guidance: f64,
    rng: &mut R,
) -> Result<UncertaintyEstimate> {
    if members.len() < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "decomposition needs >= 2 members and >= 2 samples, got {} x {n}",
            members.len()
        )));
    }
    let stream: u64 = rng.random();
    let grid = members
        .iter()
        .map(|member| {
            let mut member_rng = ChaCha8Rng::seed_from_u64(stream);
            let samples = member.draw(y, n, guidance, &mut member_rng)?;
            Ok(samples.iter().map(|x| norm(x)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    UncertaintyEstimate::from_norm_grid(&grid)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
