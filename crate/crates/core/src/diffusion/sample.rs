use rand::Rng;
use rand_distr::StandardNormal;

use super::{Condition, NoisePredictor};
use crate::{Error, Result};

/// Classifier-free guided noise `(1 + g) eps(x, t, c) - g eps(x, t, empty)`.
///
/// With `guidance == 0` the unconditional branch is never evaluated.
pub fn guided_noise<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    t: usize,
    cond: Condition,
    guidance: f64,
) -> Result<Vec<f64>> {
    let conditional = model.predict_noise(x_t, t, cond)?;
    if guidance == 0.0 {
        return Ok(conditional);
    }
    if !cond.is_conditioned() {
        return Err(Error::invalid("guidance needs a conditioned pass"));
    }
    let unconditional = model.predict_noise(x_t, t, Condition::unconditional())?;
    Ok(conditional
        .iter()
        .zip(&unconditional)
        .map(|(c, u)| (1.0 + guidance) * c - guidance * u)
        .collect())
}

/// One ancestral step `x_t -> x_{t-1}` with reverse variance `beta_t`.
pub fn reverse_step<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    t: usize,
    cond: Condition,
    guidance: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    let schedule = model.schedule();
    schedule.check_step(t)?;
    if z.len() != x_t.len() {
        return Err(Error::shape(format!("z has dim {}, x_t has dim {}", z.len(), x_t.len())));
    }
    let eps = guided_noise(model, x_t, t, cond, guidance)?;
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let sigma = schedule.sigma(t);
    Ok(x_t
        .iter()
        .zip(&eps)
        .zip(z)
        .map(|((x, e), z)| inv_sqrt_alpha * (x - coef * e) + sigma * z)
        .collect())
}

/// Draws `n` designs from `p(x | y)` by running the reverse chain from
/// `x_T ~ N(0, I)`. No noise is added on the final step.
pub fn sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    model: &P,
    y: f64,
    n: usize,
    guidance: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::invalid(format!("conditioning value {y} outside [0, 1]")));
    }
    let d = model.data_dim();
    let cond = Condition::on(y);
    let zeros = vec![0.0; d];
    let mut z = vec![0.0; d];
    (0..n)
        .map(|_| {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for t in (1..=model.schedule().steps()).rev() {
                let noise = if t > 1 {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    &z
                } else {
                    &zeros
                };
                x = reverse_step(model, &x, t, cond, guidance, noise)?;
            }
            Ok(x)
        })
        .collect()
}
