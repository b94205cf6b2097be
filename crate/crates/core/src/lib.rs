//! Online black-box optimization with an inverse surrogate.
//!
//! A conditional denoising-diffusion model learns `p(x | y)` from the
//! labeled pool, an ensemble of such models supplies an epistemic
//! uncertainty estimate for each candidate target `y`, and the
//! Uncertainty-aware Exploration score `y - epistemic(y)` picks the target
//! that the next batch of designs is sampled at.
//!
//! Module map:
//!
//! - [`nn`]: dense networks, exact gradients, Adam, gradient auditing.
//! - [`diffusion`]: noise schedule, classifier-free training, guided sampling.
//! - [`uncertainty`]: ensembles, the aleatoric/epistemic split, moment propagation.
//! - [`acquisition`]: candidate targets and the UaE score.
//! - [`optimizer`]: the online loop, dataset bookkeeping, random search.
//! - [`tasks`], [`config`], [`report`], [`validate`], [`experiment`]: the
//!   benchmark harness used by the `diffbbo` binary.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod config;
pub mod diffusion;
mod error;
pub mod experiment;
pub mod nn;
pub mod optimizer;
pub mod report;
pub mod tasks;
pub mod uncertainty;
pub mod validate;

pub use acquisition::{AcquisitionConfig, AcquisitionMode, CandidateSet, Selection};
pub use config::RunConfig;
pub use diffusion::{Condition, DiffusionModel, ModelConfig, NoisePredictor, NoiseSchedule, TrainConfig};
pub use error::{Error, Result};
pub use nn::{Activation, AdamState, DenseNet, GradCheckReport, Gradients};
pub use optimizer::{BlackBox, Dataset, IterationRecord, LoopConfig, Normalizer, RunTrajectory};
pub use tasks::TaskSpec;
pub use uncertainty::{Ensemble, MomentState, UncertaintyEstimate};
