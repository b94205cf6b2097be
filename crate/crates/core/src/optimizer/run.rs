use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sub_optimality_gap, Dataset, NormalizerPolicy};
use crate::acquisition::{self, AcquisitionConfig, Selection, TARGET_BOUND};
use crate::diffusion::{self, ModelConfig, TrainConfig};
use crate::uncertainty::{decompose, train_ensemble_with_seeds, UncertaintyEstimate};
use crate::{Error, Result};

/// The expensive objective, seen through the vectors the surrogate models.
pub trait BlackBox {
    /// Length of the vectors the surrogate generates.
    fn dim(&self) -> usize;

    /// The design actually queried for a generated vector (clipped to the
    /// domain, or decoded and re-encoded for categorical designs).
    fn project(&self, x: &[f64]) -> Vec<f64>;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    /// A uniformly random valid design.
    fn random_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
}

/// Counts oracle invocations of the wrapped problem.
pub struct CountingOracle<'a, B: ?Sized> {
    inner: &'a B,
    calls: Cell<usize>,
}

impl<'a, B: BlackBox + ?Sized> CountingOracle<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<B: BlackBox + ?Sized> BlackBox for CountingOracle<'_, B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.inner.project(x)
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.calls.set(self.calls.get() + 1);
        self.inner.evaluate(x)
    }

    fn random_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.inner.random_point(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub iterations: usize,
    pub batch: usize,
    pub ensemble: usize,
    pub weights: Vec<f64>,
    pub guidance: f64,
    pub acquisition: AcquisitionConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub normalizer: NormalizerPolicy,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 16,
            batch: 100,
            ensemble: 5,
            weights: acquisition::DEFAULT_WEIGHTS.to_vec(),
            guidance: 2.0,
            acquisition: AcquisitionConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            normalizer: NormalizerPolicy::Frozen,
        }
    }
}

/// One iteration of a run. Acquisition fields are `None` for random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub chosen_w: Option<f64>,
    pub y_star_norm: Option<f64>,
    pub y_star_raw: Option<f64>,
    pub epistemic: Option<f64>,
    pub aleatoric: Option<f64>,
    /// Best raw value in the pool after this iteration's queries.
    pub best_so_far: f64,
    pub gap: Option<f64>,
    pub oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrajectory {
    pub method: String,
    pub seed: u64,
    pub initial_best: f64,
    pub records: Vec<IterationRecord>,
    /// Set when the run was aborted; holds the reason.
    pub incomplete: Option<String>,
}

impl RunTrajectory {
    pub fn final_best(&self) -> f64 {
        self.records.last().map_or(self.initial_best, |r| r.best_so_far)
    }

    pub fn is_complete(&self) -> bool {
        self.incomplete.is_none()
    }
}

/// Method label for a loop configuration: `uae` or `fixed-<w>`.
pub fn method_name(cfg: &AcquisitionConfig) -> String {
    match cfg.selection {
        Selection::Uae => "uae".to_string(),
        Selection::Fixed(w) => format!("fixed-{w}"),
    }
}

/// Runs the online loop for `config.iterations` rounds of `config.batch`
/// queries each, starting from `initial`.
///
/// An oracle failure ends the run early; the returned trajectory then
/// carries the reason in `incomplete`.
pub fn run<B: BlackBox + ?Sized>(
    problem: &B,
    initial: &Dataset,
    config: &LoopConfig,
    seed: u64,
) -> Result<RunTrajectory> {
    validate(problem, initial, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = initial.clone();
    let mut traj = RunTrajectory {
        method: method_name(&config.acquisition),
        seed,
        initial_best: data.best_value(),
        records: Vec::with_capacity(config.iterations),
        incomplete: None,
    };
    let dim = problem.dim();

    for k in 1..=config.iterations {
        let normalizer = data.normalizer_for(config.normalizer)?;
        let pairs = data.training_pairs(&normalizer);
        let base: u64 = rng.random();
        let seeds: Vec<u64> = (0..config.ensemble as u64).map(|i| base.wrapping_add(i)).collect();
        let ensemble = train_ensemble_with_seeds(&pairs, dim, &config.model, &config.train, &seeds)?;
        let members = ensemble.members();

        let phi = normalizer.normalize(data.best_value()).max(0.0);
        let candidates = acquisition::construct_candidates(phi, &config.weights, TARGET_BOUND)?;
        let mut estimates: Vec<Option<UncertaintyEstimate>> = vec![None; candidates.len()];
        let choice = acquisition::select(&candidates, &config.acquisition, |i, y| {
            let est = decompose(members, y, config.batch, config.guidance, &mut rng)?;
            let epistemic = est.epistemic;
            estimates[i] = Some(est);
            Ok(epistemic)
        })?;
        let estimate = match estimates[choice.index].take() {
            Some(est) => Some(est),
            None if members.len() >= 2 && config.batch >= 2 => {
                Some(decompose(members, choice.y, config.batch, config.guidance, &mut rng)?)
            }
            None => None,
        };

        let member = &members[rng.random_range(0..members.len())];
        let generated = diffusion::sample(member, choice.y, config.batch, config.guidance, &mut rng)?;
        let mut values = Vec::with_capacity(generated.len());
        for x in generated {
            let design = problem.project(&x);
            match problem.evaluate(&design) {
                Ok(v) => {
                    values.push(v);
                    data.push(design, v);
                }
                Err(e) => {
                    traj.incomplete = Some(format!("iteration {k}: {e}"));
                    return Ok(traj);
                }
            }
        }

        let y_star_raw = normalizer.denormalize(choice.y);
        traj.records.push(IterationRecord {
            k,
            chosen_w: Some(choice.weight),
            y_star_norm: Some(choice.y),
            y_star_raw: Some(y_star_raw),
            epistemic: estimate.as_ref().map(|e| e.epistemic),
            aleatoric: estimate.as_ref().map(|e| e.aleatoric),
            best_so_far: data.best_value(),
            gap: Some(sub_optimality_gap(y_star_raw, &values)?),
            oracle_calls: k * config.batch,
        });
    }
    Ok(traj)
}

fn validate<B: BlackBox + ?Sized>(problem: &B, initial: &Dataset, config: &LoopConfig) -> Result<()> {
    if config.iterations == 0 || config.batch == 0 || config.ensemble == 0 {
        return Err(Error::invalid("iterations, batch and ensemble must be positive"));
    }
    if config.acquisition.selection == Selection::Uae && config.ensemble < 2 {
        return Err(Error::invalid("UaE needs an ensemble of at least 2 models"));
    }
    if config.acquisition.selection == Selection::Uae && config.batch < 2 {
        return Err(Error::invalid("UaE needs at least 2 samples per member"));
    }
    if let Selection::Fixed(w) = config.acquisition.selection {
        if !config.weights.iter().any(|c| (c - w).abs() <= 1e-9) {
            return Err(Error::invalid(format!("fixed weight {w} is not in {:?}", config.weights)));
        }
    }
    if initial.designs().iter().any(|x| x.len() != problem.dim()) {
        return Err(Error::shape(format!("initial designs must have dim {}", problem.dim())));
    }
    config.train.validate()
}

/// Uniform random search with the same budget and best-so-far bookkeeping
/// (including the initial pool) as [`run`].
pub fn random_baseline<B: BlackBox + ?Sized>(
    problem: &B,
    initial: &Dataset,
    iterations: usize,
    batch: usize,
    seed: u64,
) -> Result<RunTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = initial.best_value();
    let mut traj = RunTrajectory {
        method: "random".to_string(),
        seed,
        initial_best: best,
        records: Vec::with_capacity(iterations),
        incomplete: None,
    };
    for k in 1..=iterations {
        for _ in 0..batch {
            let x = problem.random_point(&mut rng);
            match problem.evaluate(&x) {
                Ok(v) => best = best.max(v),
                Err(e) => {
                    traj.incomplete = Some(format!("iteration {k}: {e}"));
                    return Ok(traj);
                }
            }
        }
        traj.records.push(IterationRecord {
            k,
            chosen_w: None,
            y_star_norm: None,
            y_star_raw: None,
            epistemic: None,
            aleatoric: None,
            best_so_far: best,
            gap: None,
            oracle_calls: k * batch,
        });
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = -|x - 0.5|^2` on `[-1, 1]^d`.
    struct Bowl(usize);

    impl BlackBox for Bowl {
        fn dim(&self) -> usize {
            self.0
        }
        fn project(&self, x: &[f64]) -> Vec<f64> {
            x.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
        }
        fn evaluate(&self, x: &[f64]) -> Result<f64> {
            Ok(-x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>())
        }
        fn random_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
            (0..self.0).map(|_| rng.random_range(-1.0..=1.0)).collect()
        }
    }

    /// Fails on the `n`-th call.
    struct Flaky {
        inner: Bowl,
        fail_at: usize,
        calls: Cell<usize>,
    }

    impl BlackBox for Flaky {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn project(&self, x: &[f64]) -> Vec<f64> {
            self.inner.project(x)
        }
        fn evaluate(&self, x: &[f64]) -> Result<f64> {
            self.calls.set(self.calls.get() + 1);
            if self.calls.get() == self.fail_at {
                return Err(Error::Oracle("simulator crashed".into()));
            }
            self.inner.evaluate(x)
        }
        fn random_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
            self.inner.random_point(rng)
        }
    }

    fn initial(problem: &Bowl, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<_> = (0..80)
            .map(|_| {
                let x = problem.random_point(&mut rng);
                let y = problem.evaluate(&x).unwrap();
                (x, y)
            })
            .collect();
        super::super::init_dataset(&pool, 0.25, 0.5).unwrap()
    }

    fn tiny() -> LoopConfig {
        LoopConfig {
            iterations: 3,
            batch: 4,
            ensemble: 2,
            model: ModelConfig {
                hidden_width: 16,
                steps: 8,
                ..ModelConfig::desk()
            },
            train: TrainConfig {
                epochs: 4,
                batch_size: 16,
                ..TrainConfig::desk()
            },
            ..LoopConfig::default()
        }
    }

    #[test]
    fn budget_growth_and_monotone_best() {
        let problem = Bowl(2);
        let counter = CountingOracle::new(&problem);
        let init = initial(&problem, 1);
        let traj = run(&counter, &init, &tiny(), 7).unwrap();
        assert!(traj.is_complete());
        assert_eq!(traj.method, "uae");
        assert_eq!(counter.calls(), 12);
        assert_eq!(traj.records.len(), 3);
        let mut prev = traj.initial_best;
        for (i, r) in traj.records.iter().enumerate() {
            assert_eq!(r.oracle_calls, (i + 1) * 4);
            assert!(r.best_so_far >= prev);
            prev = r.best_so_far;
            let y = r.y_star_norm.unwrap();
            assert!((0.0..=1.0).contains(&y));
            assert!(r.gap.unwrap() >= 0.0 && r.epistemic.unwrap() >= 0.0);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let problem = Bowl(2);
        let init = initial(&problem, 2);
        let a = run(&problem, &init, &tiny(), 3).unwrap();
        let b = run(&problem, &init, &tiny(), 3).unwrap();
        assert_eq!(a, b);
        let c = run(&problem, &init, &tiny(), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_mode_uses_requested_weight() {
        let problem = Bowl(2);
        let init = initial(&problem, 3);
        let mut cfg = tiny();
        cfg.acquisition.selection = Selection::Fixed(0.8);
        let traj = run(&problem, &init, &cfg, 1).unwrap();
        assert_eq!(traj.method, "fixed-0.8");
        assert!(traj.records.iter().all(|r| r.chosen_w == Some(0.8)));

        cfg.acquisition.selection = Selection::Fixed(0.75);
        assert!(run(&problem, &init, &cfg, 1).is_err());
    }

    #[test]
    fn oracle_failure_marks_trajectory_incomplete() {
        let problem = Flaky {
            inner: Bowl(2),
            fail_at: 6,
            calls: Cell::new(0),
        };
        let init = initial(&problem.inner, 4);
        let traj = run(&problem, &init, &tiny(), 1).unwrap();
        assert!(!traj.is_complete());
        assert_eq!(traj.records.len(), 1);
    }

    #[test]
    fn uae_requires_two_members() {
        let problem = Bowl(2);
        let init = initial(&problem, 5);
        let cfg = LoopConfig { ensemble: 1, ..tiny() };
        assert!(run(&problem, &init, &cfg, 1).is_err());
    }

    #[test]
    fn random_search_bookkeeping() {
        let problem = Bowl(2);
        let counter = CountingOracle::new(&problem);
        let init = initial(&problem, 6);
        let traj = random_baseline(&counter, &init, 5, 7, 9).unwrap();
        assert_eq!(counter.calls(), 35);
        assert_eq!(traj.records.len(), 5);
        assert!(traj.records.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far));
        assert!(traj.records[0].best_so_far >= init.best_value());
    }
}
