use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::nn::{Activation, DenseNet};
use crate::{Error, Result};

/// Conditioning input: a normalized objective value or the unconditional token.
///
/// The token is carried by an explicit flag so that it never aliases a
/// legitimate target of `0.0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    value: f64,
    conditioned: bool,
}

impl Condition {
    pub fn on(value: f64) -> Self {
        Self {
            value,
            conditioned: true,
        }
    }

    pub fn unconditional() -> Self {
        Self {
            value: 0.0,
            conditioned: false,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_conditioned(&self) -> bool {
        self.conditioned
    }

    /// `1` for a conditioned value, `0` for the unconditional token.
    pub fn flag(&self) -> u8 {
        u8::from(self.conditioned)
    }
}

pub const TIME_EMBED_DIM: usize = 2;

/// Anything that predicts the injected noise of a corrupted sample.
pub trait NoisePredictor {
    fn data_dim(&self) -> usize;
    fn schedule(&self) -> &NoiseSchedule;
    fn predict_noise(&self, x_t: &[f64], t: usize, cond: Condition) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_width: 1024,
            hidden_layers: 2,
            activation: Activation::Relu,
            steps: 100,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            hidden_width: 64,
            steps: 50,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    denoiser: DenseNet,
    schedule: NoiseSchedule,
    data_dim: usize,
}

impl DiffusionModel {
    pub fn new<R: Rng + ?Sized>(data_dim: usize, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::invalid("data dimension must be positive"));
        }
        let schedule = NoiseSchedule::linear(config.steps, config.beta_min, config.beta_max)?;
        let mut dims = vec![denoiser_input_dim(data_dim)];
        dims.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        dims.push(data_dim);
        let denoiser = DenseNet::new_random(&dims, config.activation, rng)?;
        Ok(Self {
            denoiser,
            schedule,
            data_dim,
        })
    }

    pub fn from_parts(denoiser: DenseNet, schedule: NoiseSchedule) -> Result<Self> {
        let data_dim = denoiser.output_dim();
        if denoiser.input_dim() != denoiser_input_dim(data_dim) {
            return Err(Error::shape(format!(
                "denoiser input is {}, expected data_dim + {} = {}",
                denoiser.input_dim(),
                TIME_EMBED_DIM + 2,
                denoiser_input_dim(data_dim)
            )));
        }
        Ok(Self {
            denoiser,
            schedule,
            data_dim,
        })
    }

    pub fn denoiser(&self) -> &DenseNet {
        &self.denoiser
    }

    pub(crate) fn denoiser_mut(&mut self) -> &mut DenseNet {
        &mut self.denoiser
    }

    /// Packs `(x_t, time embedding, condition)` into a denoiser input.
    pub fn denoiser_input(&self, x_t: &[f64], t: usize, cond: Condition) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.denoiser.input_dim());
        input.extend_from_slice(x_t);
        let phase = t as f64 / self.schedule.steps() as f64;
        input.push(phase);
        input.push((TAU * phase).sin());
        input.push(cond.value());
        input.push(f64::from(cond.flag()));
        input
    }
}

fn denoiser_input_dim(data_dim: usize) -> usize {
    data_dim + TIME_EMBED_DIM + 2
}

impl NoisePredictor for DiffusionModel {
    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &[f64], t: usize, cond: Condition) -> Result<Vec<f64>> {
        if x_t.len() != self.data_dim {
            return Err(Error::shape(format!(
                "sample has dim {}, model expects {}",
                x_t.len(),
                self.data_dim
            )));
        }
        self.schedule.check_step(t)?;
        self.denoiser.forward(&self.denoiser_input(x_t, t, cond))
    }
}
