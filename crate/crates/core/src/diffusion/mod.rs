//! Conditional DDPM used as the inverse surrogate `p(x | y)`.
//!
//! The denoiser is a [`DenseNet`](crate::nn::DenseNet) that sees the noisy
//! design, a two-dimensional time embedding and the conditioning pair
//! `(value, flag)`. Training follows the classifier-free recipe: the
//! condition is dropped to the unconditional token with probability
//! `p_uncond`, so one network learns both the conditional and the
//! unconditional noise predictor. Sampling blends the two with a guidance
//! scale.

mod model;
mod sample;
mod schedule;
mod train;

pub use model::{Condition, DiffusionModel, ModelConfig, NoisePredictor, TIME_EMBED_DIM};
pub use sample::{guided_noise, reverse_step, sample};
pub use schedule::NoiseSchedule;
pub use train::{
    cf_training_loss, denoising_loss, draw_denoising_examples, forward_diffuse, train,
    DenoisingExample, LossCurve, TrainConfig,
};
