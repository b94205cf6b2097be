//! Experiment orchestration: build the task and starting data from a config
//! and run one or more methods on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::Selection;
use crate::config::RunConfig;
use crate::optimizer::{self, init_dataset, Dataset, RunTrajectory};
use crate::tasks::TaskSpec;
use crate::Result;

/// Offset separating the pool stream from the run stream of the same seed.
const POOL_STREAM: u64 = 0x5eed_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Uae,
    Fixed(f64),
    Random,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Uae => "uae".into(),
            Method::Fixed(w) => format!("fixed-{w}"),
            Method::Random => "random".into(),
        }
    }
}

/// UaE, one fixed-weight run per entry of `weights`, then random search.
pub fn ablation_methods(weights: &[f64]) -> Vec<Method> {
    let mut methods = vec![Method::Uae];
    methods.extend(weights.iter().map(|&w| Method::Fixed(w)));
    methods.push(Method::Random);
    methods
}

/// The task and its percentile-sliced starting data for `config.seed`.
pub fn prepare(config: &RunConfig) -> Result<(TaskSpec, Dataset)> {
    config.validate()?;
    let task = config.task_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ POOL_STREAM);
    let pool = task.initial_pool(config.pool_size, &mut rng)?;
    let initial = init_dataset(&pool, config.slice.0, config.slice.1)?;
    Ok((task, initial))
}

/// Runs every method from the same starting data and seed.
pub fn run_methods(config: &RunConfig, methods: &[Method]) -> Result<Vec<RunTrajectory>> {
    let (task, initial) = prepare(config)?;
    methods
        .iter()
        .map(|m| run_prepared(config, &task, &initial, *m))
        .collect()
}

pub fn run_prepared(config: &RunConfig, task: &TaskSpec, initial: &Dataset, method: Method) -> Result<RunTrajectory> {
    let selection = match method {
        Method::Uae => Selection::Uae,
        Method::Fixed(w) => Selection::Fixed(w),
        Method::Random => {
            return optimizer::random_baseline(task, initial, config.iterations, config.batch, config.seed);
        }
    };
    optimizer::run(task, initial, &config.loop_config(selection), config.seed)
}
