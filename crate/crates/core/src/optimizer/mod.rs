//! The online optimization loop and the random-search baseline.
//!
//! Each iteration retrains the ensemble on the labeled pool, scores the
//! candidate targets, samples a batch of designs at the chosen target from
//! one member, queries the oracle and appends the results.

mod dataset;
mod run;

pub use dataset::{init_dataset, sub_optimality_gap, Dataset, Normalizer, NormalizerPolicy};
pub use run::{method_name, random_baseline, run, BlackBox, CountingOracle, IterationRecord, LoopConfig, RunTrajectory};
