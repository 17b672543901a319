use std::fmt;
use std::ops::Range;

use rand::Rng;

use super::EngineError;
use crate::domain::BoxDomain;

/// A pipelined optimization problem: `K = dims.len()` processes, the `i`-th
/// fixing `dims[i]` coordinates, `P` experiments per set, one step per
/// process.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineProblem {
    dims: Vec<usize>,
    parallelism: usize,
    domain: BoxDomain,
    budget_steps: usize,
}

impl PipelineProblem {
    pub fn new(dims: Vec<usize>, parallelism: usize, domain: BoxDomain, budget_steps: usize) -> Result<Self, EngineError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(EngineError::InvalidProblem(format!(
                "process dimensions must be non-empty and positive, got {dims:?}"
            )));
        }
        if parallelism == 0 {
            return Err(EngineError::InvalidProblem("parallelism must be at least 1".into()));
        }
        let d: usize = dims.iter().sum();
        if domain.dim() != d {
            return Err(EngineError::InvalidProblem(format!(
                "box has {} coordinates but the processes define {d}",
                domain.dim()
            )));
        }
        if budget_steps < dims.len() {
            return Err(EngineError::InvalidProblem(format!(
                "budget of {budget_steps} steps is shorter than the {} processes",
                dims.len()
            )));
        }
        Ok(Self {
            dims,
            parallelism,
            domain,
            budget_steps,
        })
    }

    /// The usual `[-5, 5]^d` box.
    pub fn on_standard_box(dims: Vec<usize>, parallelism: usize, budget_steps: usize) -> Result<Self, EngineError> {
        let d = dims.iter().sum();
        Self::new(dims, parallelism, BoxDomain::uniform(d, -5.0, 5.0), budget_steps)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of processes `K`.
    pub fn processes(&self) -> usize {
        self.dims.len()
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    /// Total number of coordinates.
    pub fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn budget_steps(&self) -> usize {
        self.budget_steps
    }

    /// Coordinate range of process segment `i` (0-based).
    pub fn segment(&self, i: usize) -> Range<usize> {
        let start: usize = self.dims[..i].iter().sum();
        start..start + self.dims[i]
    }

    /// Number of coordinates fixed once the first `segments` processes have
    /// started.
    pub fn prefix_len(&self, segments: usize) -> usize {
        self.dims[..segments.min(self.dims.len())].iter().sum()
    }

    /// Short label such as `K3-343`, or `P2-K3-343` when `P > 1`. Segment
    /// sizes of 10 or more are joined with `_`.
    pub fn tag(&self) -> String {
        let sizes = if self.dims.iter().all(|n| *n < 10) {
            self.dims.iter().map(|n| n.to_string()).collect::<String>()
        } else {
            self.dims.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("_")
        };
        let base = format!("K{}-{}", self.dims.len(), sizes);
        if self.parallelism > 1 {
            format!("P{}-{}", self.parallelism, base)
        } else {
            base
        }
    }
}

/// `P` experiments executing the same process in lock step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalSet {
    /// 1-based launch order.
    pub index: usize,
    pub points: Vec<Vec<f64>>,
    /// Process segments already started (and therefore immutable).
    pub committed: usize,
    pub result: Option<Vec<f64>>,
}

impl ExperimentalSet {
    pub fn new(index: usize, points: Vec<Vec<f64>>) -> Self {
        Self {
            index,
            points,
            committed: 0,
            result: None,
        }
    }
}

impl fmt::Display for ExperimentalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{} ({} points, {} committed)", self.index, self.points.len(), self.committed)
    }
}

/// Random initial sets `B_1..B_K` in their warm-up commit state: `B_n` has
/// its first `K − n + 1` segments started.
pub fn init_sets<R: Rng + ?Sized>(problem: &PipelineProblem, rng: &mut R) -> Vec<ExperimentalSet> {
    let k = problem.processes();
    (1..=k)
        .map(|n| {
            let points = (0..problem.parallelism()).map(|_| problem.domain().sample(rng)).collect();
            let mut set = ExperimentalSet::new(n, points);
            set.committed = k - n + 1;
            set
        })
        .collect()
}
