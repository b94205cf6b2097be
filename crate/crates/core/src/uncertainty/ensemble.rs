use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{self, DiffusionModel, LossCurve, ModelConfig, TrainConfig};
use crate::{Error, Result};

/// A generator of designs conditioned on a normalized target.
pub trait ConditionalSampler {
    fn draw<R: Rng + ?Sized>(&self, y: f64, n: usize, guidance: f64, rng: &mut R) -> Result<Vec<Vec<f64>>>;
}

impl ConditionalSampler for DiffusionModel {
    fn draw<R: Rng + ?Sized>(&self, y: f64, n: usize, guidance: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        diffusion::sample(self, y, n, guidance, rng)
    }
}

/// Independently seeded diffusion models trained on the same data.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<DiffusionModel>,
    member_seeds: Vec<u64>,
    curves: Vec<LossCurve>,
}

impl Ensemble {
    pub fn members(&self) -> &[DiffusionModel] {
        &self.members
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn loss_curves(&self) -> &[LossCurve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Trains `size` members with seeds `base_seed, base_seed + 1, ...`. Each
/// seed drives both the member's initialization and its minibatch order.
pub fn train_ensemble(
    data: &[(Vec<f64>, f64)],
    data_dim: usize,
    model: &ModelConfig,
    train: &TrainConfig,
    size: usize,
    base_seed: u64,
) -> Result<Ensemble> {
    if size < 2 {
        return Err(Error::invalid(format!("an ensemble needs at least 2 members, got {size}")));
    }
    let seeds: Vec<u64> = (0..size as u64).map(|i| base_seed.wrapping_add(i)).collect();
    train_ensemble_with_seeds(data, data_dim, model, train, &seeds)
}

/// Trains one member per supplied seed. Repeated seeds give identical members.
pub fn train_ensemble_with_seeds(
    data: &[(Vec<f64>, f64)],
    data_dim: usize,
    model: &ModelConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<Ensemble> {
    let mut members = Vec::with_capacity(seeds.len());
    let mut curves = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut member = DiffusionModel::new(data_dim, model, &mut rng)?;
        curves.push(diffusion::train(&mut member, data, train, &mut rng)?);
        members.push(member);
    }
    Ok(Ensemble {
        members,
        member_seeds: seeds.to_vec(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::decompose;

    fn toy(n: usize) -> Vec<(Vec<f64>, f64)> {
        (0..n)
            .map(|i| {
                let y = i as f64 / (n - 1) as f64;
                (vec![y, 1.0 - y], y)
            })
            .collect()
    }

    fn small() -> (ModelConfig, TrainConfig) {
        (
            ModelConfig {
                hidden_width: 16,
                steps: 10,
                ..ModelConfig::desk()
            },
            TrainConfig {
                epochs: 3,
                batch_size: 16,
                ..TrainConfig::desk()
            },
        )
    }

    #[test]
    fn identical_seeds_give_identical_members() {
        let (m, t) = small();
        let ens = train_ensemble_with_seeds(&toy(40), 2, &m, &t, &[3, 3]).unwrap();
        assert_eq!(ens.members()[0], ens.members()[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = decompose(ens.members(), 0.5, 8, 2.0, &mut rng).unwrap();
        assert_eq!(est.epistemic, 0.0);
    }

    #[test]
    fn distinct_seeds_differ() {
        let (m, t) = small();
        let ens = train_ensemble(&toy(40), 2, &m, &t, 2, 10).unwrap();
        assert_eq!(ens.member_seeds(), &[10, 11]);
        assert_ne!(ens.members()[0], ens.members()[1]);
    }

    #[test]
    fn full_sized_ensemble_trains() {
        let (m, t) = small();
        let ens = train_ensemble(&toy(40), 2, &m, &t, 5, 0).unwrap();
        assert_eq!(ens.len(), 5);
        for curve in ens.loss_curves() {
            assert!(curve.validation.last().unwrap().is_finite());
        }
    }

    #[test]
    fn single_member_rejected() {
        let (m, t) = small();
        assert!(train_ensemble(&toy(40), 2, &m, &t, 1, 0).is_err());
    }
}
