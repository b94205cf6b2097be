//! Synthetic benchmark tasks with analytic or exhaustively known optima.
//!
//! Continuous tasks live in a box and clip generated designs to it before
//! evaluation. Categorical tasks are modelled through a relaxed one-hot
//! encoding: each of the `d` positions becomes a length-`c` block mixing the
//! one-hot vector with the uniform distribution, and generated vectors are
//! decoded by per-block argmax.

use std::f64::consts::{E, TAU};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::optimizer::BlackBox;
use crate::{Error, Result};

/// Weight of the one-hot component in the relaxed encoding.
pub const ONE_HOT_MIX: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    Continuous { lo: f64, hi: f64 },
    Discrete { classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    /// `-|x - optimum|^2`.
    Sphere { optimum: Vec<f64> },
    /// Negated Ackley, maximum 0 at the origin.
    Ackley,
    /// Full table indexed by the mixed-radix class tuple.
    Lookup { table: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub dim: usize,
    pub known_max: Option<f64>,
    objective: Objective,
}

pub const TASK_NAMES: [&str; 6] = ["sphere2d", "sphere8d", "ackley8d", "discrete6", "discrete7", "discrete8"];

const BOX: (f64, f64) = (-2.0, 2.0);
const SPHERE_OPTIMUM: f64 = 0.5;
const LOOKUP_SEED: u64 = 0x5eed_7ab1e;
const ALPHABET: usize = 4;

impl TaskSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sphere2d" => Ok(Self::sphere(2)),
            "sphere8d" => Ok(Self::sphere(8)),
            "ackley8d" => Ok(Self::ackley(8)),
            "discrete6" => Self::lookup(6, ALPHABET, LOOKUP_SEED),
            "discrete7" => Self::lookup(7, ALPHABET, LOOKUP_SEED),
            "discrete8" => Self::lookup(8, ALPHABET, LOOKUP_SEED),
            _ => Err(Error::UnknownTask {
                name: name.to_string(),
                available: TASK_NAMES.join(", "),
            }),
        }
    }

    /// Sphere on `[-2, 2]^d` with its maximum at `(0.5, ..., 0.5)`.
    pub fn sphere(dim: usize) -> Self {
        Self {
            name: format!("sphere{dim}d"),
            kind: TaskKind::Continuous { lo: BOX.0, hi: BOX.1 },
            dim,
            known_max: Some(0.0),
            objective: Objective::Sphere {
                optimum: vec![SPHERE_OPTIMUM; dim],
            },
        }
    }

    pub fn ackley(dim: usize) -> Self {
        Self {
            name: format!("ackley{dim}d"),
            kind: TaskKind::Continuous { lo: BOX.0, hi: BOX.1 },
            dim,
            known_max: Some(0.0),
            objective: Objective::Ackley,
        }
    }

    /// A seeded lookup table over `classes^dim` tuples.
    ///
    /// Values are additive per-position scores plus neighbour interactions,
    /// so the landscape has learnable structure; the stored maximum comes
    /// from scanning the whole table.
    pub fn lookup(dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let size = (classes as u128).checked_pow(dim as u32).filter(|s| *s <= 1 << 24);
        let Some(size) = size else {
            return Err(Error::invalid(format!("lookup table {classes}^{dim} is too large")));
        };
        if dim == 0 || classes == 0 {
            return Err(Error::invalid("lookup needs positive dim and classes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((dim as u64) << 32 | classes as u64));
        let unary: Vec<f64> = (0..dim * classes).map(|_| rng.random_range(0.0..1.0)).collect();
        let pair: Vec<f64> = (0..dim.saturating_sub(1) * classes * classes)
            .map(|_| rng.random_range(0.0..0.5))
            .collect();
        let mut table = Vec::with_capacity(size as usize);
        let mut tuple = vec![0usize; dim];
        for _ in 0..size {
            let mut v: f64 = tuple.iter().enumerate().map(|(i, &c)| unary[i * classes + c]).sum();
            for i in 0..dim.saturating_sub(1) {
                v += pair[(i * classes + tuple[i]) * classes + tuple[i + 1]];
            }
            table.push(v);
            increment(&mut tuple, classes);
        }
        let known_max = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            name: format!("discrete{dim}"),
            kind: TaskKind::Discrete { classes },
            dim,
            known_max: Some(known_max),
            objective: Objective::Lookup { table },
        })
    }

    /// Value of a continuous design (clipped to the box first).
    pub fn eval_oracle(&self, design: &[f64]) -> Result<f64> {
        let TaskKind::Continuous { lo, hi } = self.kind else {
            return Err(Error::invalid(format!("{} takes class indices", self.name)));
        };
        if design.len() != self.dim || design.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{} expects {} finite coordinates", self.name, self.dim)));
        }
        let x: Vec<f64> = design.iter().map(|v| v.clamp(lo, hi)).collect();
        Ok(match &self.objective {
            Objective::Sphere { optimum } => -x.iter().zip(optimum).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            Objective::Ackley => {
                let n = x.len() as f64;
                let sq = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
                let cs = x.iter().map(|v| (TAU * v).cos()).sum::<f64>() / n;
                -(-20.0 * (-0.2 * sq).exp() - cs.exp() + 20.0 + E)
            }
            Objective::Lookup { .. } => unreachable!("continuous task with a lookup objective"),
        })
    }

    /// Value of a categorical design.
    pub fn eval_classes(&self, classes: &[usize]) -> Result<f64> {
        let (TaskKind::Discrete { classes: c }, Objective::Lookup { table }) = (&self.kind, &self.objective) else {
            return Err(Error::invalid(format!("{} takes real coordinates", self.name)));
        };
        if classes.len() != self.dim {
            return Err(Error::invalid(format!("{} expects {} positions", self.name, self.dim)));
        }
        let mut idx = 0usize;
        for &k in classes {
            if k >= *c {
                return Err(Error::invalid(format!("class {k} outside 0..{c}")));
            }
            idx = idx * c + k;
        }
        Ok(table[idx])
    }

    /// Exhaustive maximum over a lookup table.
    pub fn scan_max(&self) -> Option<f64> {
        match &self.objective {
            Objective::Lookup { table } => Some(table.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            _ => None,
        }
    }

    /// Draws `size` random designs with their values.
    pub fn initial_pool(&self, size: usize, rng: &mut dyn RngCore) -> Result<Vec<(Vec<f64>, f64)>> {
        (0..size)
            .map(|_| {
                let x = self.random_point(rng);
                let y = self.evaluate(&x)?;
                Ok((x, y))
            })
            .collect()
    }
}

fn increment(tuple: &mut [usize], classes: usize) {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < classes {
            return;
        }
        *slot = 0;
    }
}

/// Relaxed one-hot encoding: per position `0.6 * onehot + 0.4 / c`.
pub fn encode_discrete(classes: &[usize], c: usize) -> Result<Vec<f64>> {
    if c == 0 {
        return Err(Error::invalid("alphabet must be non-empty"));
    }
    let base = (1.0 - ONE_HOT_MIX) / c as f64;
    let mut out = vec![base; classes.len() * c];
    for (pos, &k) in classes.iter().enumerate() {
        if k >= c {
            return Err(Error::invalid(format!("class {k} outside 0..{c}")));
        }
        out[pos * c + k] += ONE_HOT_MIX;
    }
    Ok(out)
}

/// Per-block argmax. Ties go to the lowest class index.
pub fn decode_discrete(x: &[f64], c: usize) -> Result<Vec<usize>> {
    if c == 0 || !x.len().is_multiple_of(c) {
        return Err(Error::invalid(format!("length {} is not a multiple of {c}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite relaxed design"));
    }
    Ok(x.chunks(c)
        .map(|block| {
            block
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}

impl BlackBox for TaskSpec {
    fn dim(&self) -> usize {
        match self.kind {
            TaskKind::Continuous { .. } => self.dim,
            TaskKind::Discrete { classes } => self.dim * classes,
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            TaskKind::Continuous { lo, hi } => x.iter().map(|v| v.clamp(lo, hi)).collect(),
            TaskKind::Discrete { classes } => match decode_discrete(x, classes) {
                Ok(tuple) => encode_discrete(&tuple, classes).expect("decoded classes are in range"),
                Err(_) => x.to_vec(),
            },
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            TaskKind::Continuous { .. } => self.eval_oracle(x),
            TaskKind::Discrete { classes } => {
                if x.len() != self.dim * classes {
                    return Err(Error::invalid(format!(
                        "{} expects a relaxed vector of length {}",
                        self.name,
                        self.dim * classes
                    )));
                }
                self.eval_classes(&decode_discrete(x, classes)?)
            }
        }
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self.kind {
            TaskKind::Continuous { lo, hi } => (0..self.dim).map(|_| rng.random_range(lo..=hi)).collect(),
            TaskKind::Discrete { classes } => {
                let tuple: Vec<usize> = (0..self.dim).map(|_| rng.random_range(0..classes)).collect();
                encode_discrete(&tuple, classes).expect("sampled classes are in range")
            }
        }
    }
}
