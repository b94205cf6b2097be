use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Affine map of raw objective values onto `[0, 1]` over `[y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    y_min: f64,
    y_max: f64,
}

impl Normalizer {
    pub fn new(y_min: f64, y_max: f64) -> Result<Self> {
        if !(y_min.is_finite() && y_max.is_finite() && y_max > y_min) {
            return Err(Error::invalid(format!("degenerate normalizer range [{y_min}, {y_max}]")));
        }
        Ok(Self { y_min, y_max })
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi)
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// Unclipped; values outside the fitted range leave `[0, 1]`.
    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.y_min) / (self.y_max - self.y_min)
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.y_min + y * (self.y_max - self.y_min)
    }

    /// Normalized value clipped to `[0, 1]`, as required for conditioning.
    pub fn condition(&self, y: f64) -> f64 {
        self.normalize(y).clamp(0.0, 1.0)
    }
}

/// How the value normalizer evolves as the pool grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerPolicy {
    /// Keep the range of the initial slice.
    Frozen,
    /// Refit to the current pool before every iteration.
    Refit,
}

/// The growing labeled pool. Rows are only ever appended.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    designs: Vec<Vec<f64>>,
    raw_values: Vec<f64>,
    normalizer: Normalizer,
}

impl Dataset {
    pub fn new(designs: Vec<Vec<f64>>, raw_values: Vec<f64>) -> Result<Self> {
        if designs.len() != raw_values.len() {
            return Err(Error::shape("designs and values differ in length"));
        }
        if designs.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let normalizer = Normalizer::fit(&raw_values)?;
        Ok(Self {
            designs,
            raw_values,
            normalizer,
        })
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn designs(&self) -> &[Vec<f64>] {
        &self.designs
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.raw_values
    }

    /// The normalizer frozen at construction.
    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn normalizer_for(&self, policy: NormalizerPolicy) -> Result<Normalizer> {
        match policy {
            NormalizerPolicy::Frozen => Ok(self.normalizer),
            NormalizerPolicy::Refit => Normalizer::fit(&self.raw_values),
        }
    }

    pub fn push(&mut self, design: Vec<f64>, value: f64) {
        self.designs.push(design);
        self.raw_values.push(value);
    }

    pub fn best_value(&self) -> f64 {
        self.raw_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(design, clipped normalized value)` pairs for training.
    pub fn training_pairs(&self, normalizer: &Normalizer) -> Vec<(Vec<f64>, f64)> {
        self.designs
            .iter()
            .zip(&self.raw_values)
            .map(|(x, &y)| (x.clone(), normalizer.condition(y)))
            .collect()
    }
}

/// Sorts the pool ascending by value and keeps ranks
/// `[floor(lo * n), floor(hi * n))`.
pub fn init_dataset(pool: &[(Vec<f64>, f64)], lo: f64, hi: f64) -> Result<Dataset> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::invalid(format!("need 0 <= lo < hi <= 1, got {lo}, {hi}")));
    }
    if pool.len() < 4 {
        return Err(Error::invalid(format!("pool of {} is smaller than 4", pool.len())));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[a].1.total_cmp(&pool[b].1));
    let n = pool.len() as f64;
    let (start, end) = ((lo * n).floor() as usize, (hi * n).floor() as usize);
    if start >= end {
        return Err(Error::invalid(format!("percentile slice [{lo}, {hi}) selects no rows")));
    }
    let (designs, values) = order[start..end]
        .iter()
        .map(|&i| (pool[i].0.clone(), pool[i].1))
        .unzip();
    Dataset::new(designs, values)
}

/// `|target - max(evaluated)|` in raw objective units.
pub fn sub_optimality_gap(target: f64, evaluated: &[f64]) -> Result<f64> {
    if evaluated.is_empty() {
        return Err(Error::invalid("no evaluated designs"));
    }
    let best = evaluated.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((target - best).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool(values: &[f64]) -> Vec<(Vec<f64>, f64)> {
        values.iter().map(|&v| (vec![v, -v], v)).collect()
    }

    #[test]
    fn quartile_slice() {
        let values: Vec<f64> = (0..8).map(f64::from).collect();
        let ds = init_dataset(&pool(&values), 0.25, 0.5).unwrap();
        assert_eq!(ds.raw_values(), &[2.0, 3.0]);
        assert_eq!(ds.normalizer(), Normalizer::new(2.0, 3.0).unwrap());
        let all = init_dataset(&pool(&values), 0.0, 1.0).unwrap();
        assert_eq!(all.len(), 8);
    }

    #[test]
    fn slice_is_order_invariant() {
        let mut values: Vec<f64> = (0..40).map(|i| f64::from(i) * 0.5).collect();
        let sorted = init_dataset(&pool(&values), 0.25, 0.5).unwrap();
        values.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let shuffled = init_dataset(&pool(&values), 0.25, 0.5).unwrap();
        let mut a = sorted.raw_values().to_vec();
        let mut b = shuffled.raw_values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn bad_slices() {
        let values: Vec<f64> = (0..8).map(f64::from).collect();
        assert!(init_dataset(&pool(&values), 0.5, 0.5).is_err());
        assert!(init_dataset(&pool(&values), 0.5, 0.55).is_err());
        assert!(init_dataset(&pool(&values[..3]), 0.0, 1.0).is_err());
        assert!(init_dataset(&pool(&[1.0; 8]), 0.0, 1.0).is_err());
    }

    #[test]
    fn normalizer_basics() {
        let n = Normalizer::new(2.0, 6.0).unwrap();
        assert_eq!(n.normalize(4.0), 0.5);
        assert_eq!(n.normalize(2.0), 0.0);
        assert_eq!(n.normalize(6.0), 1.0);
        assert_eq!(n.normalize(10.0), 2.0);
        assert_eq!(n.condition(10.0), 1.0);
        assert_eq!(n.condition(-10.0), 0.0);
        assert!(Normalizer::new(1.0, 1.0).is_err());
    }

    #[test]
    fn normalizer_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = Normalizer::new(-37.5, 12.25).unwrap();
        for _ in 0..100 {
            let y: f64 = rng.random_range(-100.0..100.0);
            let back = n.denormalize(n.normalize(y));
            assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn gap() {
        assert!((sub_optimality_gap(0.7, &[0.1, 0.65]).unwrap() - 0.05).abs() < 1e-12);
        assert!((sub_optimality_gap(0.7, &[0.9, 0.2]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(sub_optimality_gap(0.7, &[0.7]).unwrap(), 0.0);
        assert!(sub_optimality_gap(0.7, &[]).is_err());
    }

    #[test]
    fn refit_policy_tracks_pool() {
        let mut ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        ds.push(vec![2.0], 5.0);
        assert_eq!(ds.normalizer_for(NormalizerPolicy::Frozen).unwrap().y_max(), 2.0);
        assert_eq!(ds.normalizer_for(NormalizerPolicy::Refit).unwrap().y_max(), 5.0);
        assert_eq!(ds.best_value(), 5.0);
    }
}
