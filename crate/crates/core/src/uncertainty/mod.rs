//! Ensemble posterior approximation and the uncertainty it yields.
//!
//! [`decompose`] splits the spread of sample norms into the within-model
//! (aleatoric) and between-model (epistemic) parts. [`propagate_moments`]
//! traces mean and variance through the discretized reverse process, and
//! [`mc_moment_oracle`] simulates the same recursion for a linear score so
//! the two can be checked against each other.

mod decompose;
mod ensemble;
mod moments;

pub use decompose::{decompose, population_variance, UncertaintyEstimate};
pub use ensemble::{train_ensemble, train_ensemble_with_seeds, ConditionalSampler, Ensemble};
pub use moments::{
    linear_score_moments, mc_moment_oracle, propagate_moments, propagate_moments_with_cov_coefficient,
    EmpiricalMoments, MomentState,
};
