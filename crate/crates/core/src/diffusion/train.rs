use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Condition, DiffusionModel, NoisePredictor, NoiseSchedule};
use crate::nn::{adam_step, mse_loss_and_grads, AdamConfig, AdamState, Gradients};
use crate::{Error, Result};

/// Closed-form forward corruption `sqrt(abar_t) x0 + sqrt(1 - abar_t) noise`.
pub fn forward_diffuse(x0: &[f64], t: usize, noise: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if noise.len() != x0.len() {
        return Err(Error::shape(format!(
            "noise has dim {}, sample has dim {}",
            noise.len(),
            x0.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| signal * x + spread * e).collect())
}

/// One draw of `(t, noise, dropped condition)` for a training pair.
#[derive(Debug, Clone)]
pub struct DenoisingExample {
    pub x0: Vec<f64>,
    pub x_t: Vec<f64>,
    pub t: usize,
    pub cond: Condition,
    pub noise: Vec<f64>,
}

/// Samples `t ~ U{1..T}`, `noise ~ N(0, I)` and drops each condition to the
/// unconditional token with probability `p_uncond`.
pub fn draw_denoising_examples<R: Rng + ?Sized>(
    batch: &[(&[f64], f64)],
    schedule: &NoiseSchedule,
    p_uncond: f64,
    rng: &mut R,
) -> Result<Vec<DenoisingExample>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let dropout = Bernoulli::new(p_uncond)
        .map_err(|_| Error::invalid(format!("p_uncond {p_uncond} outside [0, 1]")))?;
    batch
        .iter()
        .map(|&(x0, y)| {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::invalid(format!("condition {y} outside [0, 1]")));
            }
            let t = rng.random_range(1..=schedule.steps());
            let noise: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
            let cond = if dropout.sample(rng) {
                Condition::unconditional()
            } else {
                Condition::on(y)
            };
            Ok(DenoisingExample {
                x0: x0.to_vec(),
                x_t: forward_diffuse(x0, t, &noise, schedule)?,
                t,
                cond,
                noise,
            })
        })
        .collect()
}

/// Classifier-free denoising loss (with unit time weighting) of any noise
/// predictor on a batch of `(x0, y)` pairs.
pub fn denoising_loss<P: NoisePredictor, R: Rng + ?Sized>(
    predictor: &P,
    batch: &[(&[f64], f64)],
    p_uncond: f64,
    rng: &mut R,
) -> Result<f64> {
    let examples = draw_denoising_examples(batch, predictor.schedule(), p_uncond, rng)?;
    let mut total = 0.0;
    for ex in &examples {
        let pred = predictor.predict_noise(&ex.x_t, ex.t, ex.cond)?;
        total += pred.iter().zip(&ex.noise).map(|(p, e)| (e - p).powi(2)).sum::<f64>();
    }
    finite_loss(total / examples.len() as f64)
}

/// The same loss for a trainable model, together with its parameter gradient.
pub fn cf_training_loss<R: Rng + ?Sized>(
    model: &DiffusionModel,
    batch: &[(&[f64], f64)],
    p_uncond: f64,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let examples = draw_denoising_examples(batch, model.schedule(), p_uncond, rng)?;
    let inputs: Vec<_> = examples
        .iter()
        .map(|ex| model.denoiser_input(&ex.x_t, ex.t, ex.cond))
        .collect();
    let targets: Vec<_> = examples.into_iter().map(|ex| ex.noise).collect();
    let (loss, grads) = mse_loss_and_grads(model.denoiser(), &inputs, &targets)?;
    Ok((finite_loss(loss)?, grads))
}

fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric {
            path: "denoising loss".into(),
            value: loss,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub p_uncond: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            p_uncond: 0.15,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            batch_size: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::invalid(format!("p_uncond {} outside [0, 1]", self.p_uncond)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch mean minibatch loss, and the held-out loss when a validation
/// split exists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Minibatch Adam on the classifier-free loss.
///
/// A `validation_fraction` share of the shuffled data is held out. The
/// batch size is capped at the size of the training split.
pub fn train<R: Rng + ?Sized>(
    model: &mut DiffusionModel,
    data: &[(Vec<f64>, f64)],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<LossCurve> {
    config.validate()?;
    let n = data.len();
    let needed = 2.0 / (1.0 - config.validation_fraction);
    if (n as f64) < needed {
        return Err(Error::invalid(format!(
            "dataset of {n} rows is too small for validation fraction {} (need {})",
            config.validation_fraction,
            needed.ceil()
        )));
    }
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != model.data_dim()) {
        return Err(Error::shape(format!(
            "design of dim {} in a dataset for a dim-{} model",
            x.len(),
            model.data_dim()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = (config.validation_fraction * n as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let validation: Vec<(&[f64], f64)> = val_idx.iter().map(|&i| (data[i].0.as_slice(), data[i].1)).collect();
    let batch_size = config.batch_size.min(train_idx.len());

    let mut adam = AdamState::new(
        model.denoiser(),
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    )?;
    let mut curve = LossCurve::default();
    for _ in 0..config.epochs {
        train_idx.shuffle(rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (data[i].0.as_slice(), data[i].1)).collect();
            let (loss, grads) = cf_training_loss(model, &batch, config.p_uncond, rng)?;
            adam_step(model.denoiser_mut(), &mut adam, &grads)?;
            sum += loss;
            batches += 1;
        }
        curve.train.push(sum / batches as f64);
        if !validation.is_empty() {
            curve
                .validation
                .push(denoising_loss(&*model, &validation, config.p_uncond, rng)?);
        }
    }
    Ok(curve)
}
