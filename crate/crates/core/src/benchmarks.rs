//! Native BBOB-style test functions on `[-5, 5]^d`.
//!
//! Each instance draws its optimum location (and, for the rotated
//! functions, an orthogonal matrix) from an instance seed. Values are in
//! minimization form with optimum value 0; the COCO-specific oscillation,
//! asymmetry and penalty transformations are not applied.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::domain::BoxDomain;

pub const BOX_LOWER: f64 = -5.0;
pub const BOX_UPPER: f64 = 5.0;
/// Optimum locations are drawn from `[-OPT_RANGE, OPT_RANGE]^d`.
const OPT_RANGE: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("unsupported function `{0}`; supported: F1, F2, F3, F5, F8, F10, F12, F14")]
    Unsupported(String),
    #[error("{id} needs dimension >= {min}, got {dim}")]
    Dimension { id: FunctionId, min: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionId {
    F1,
    F2,
    F3,
    F5,
    F8,
    F10,
    F12,
    F14,
}

impl FunctionId {
    pub const ALL: [FunctionId; 8] = [
        FunctionId::F1,
        FunctionId::F2,
        FunctionId::F3,
        FunctionId::F5,
        FunctionId::F8,
        FunctionId::F10,
        FunctionId::F12,
        FunctionId::F14,
    ];

    /// Short id such as `F1`.
    pub fn code(self) -> &'static str {
        match self {
            FunctionId::F1 => "F1",
            FunctionId::F2 => "F2",
            FunctionId::F3 => "F3",
            FunctionId::F5 => "F5",
            FunctionId::F8 => "F8",
            FunctionId::F10 => "F10",
            FunctionId::F12 => "F12",
            FunctionId::F14 => "F14",
        }
    }

    /// Descriptive name.
    pub fn name(self) -> &'static str {
        match self {
            FunctionId::F1 => "Sphere",
            FunctionId::F2 => "Separable Ellipsoidal",
            FunctionId::F3 => "Rastrigin",
            FunctionId::F5 => "Linear Slope",
            FunctionId::F8 => "Rosenbrock",
            FunctionId::F10 => "Ellipsoidal (rotated)",
            FunctionId::F12 => "Bent Cigar",
            FunctionId::F14 => "Different Powers",
        }
    }

    fn min_dim(self) -> usize {
        match self {
            FunctionId::F8 => 2,
            _ => 1,
        }
    }

    fn rotated(self) -> bool {
        matches!(self, FunctionId::F10 | FunctionId::F12)
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FunctionId {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionId::ALL
            .iter()
            .copied()
            .find(|id| id.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BenchmarkError::Unsupported(s.to_string()))
    }
}

/// Conditioning exponent spread `(i−1)/(d−1)`; 0 in one dimension.
fn spread(i: usize, d: usize) -> f64 {
    if d > 1 {
        i as f64 / (d - 1) as f64
    } else {
        0.0
    }
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian draw, row-major.
fn random_rotation<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut rows: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = rows.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= dot * b;
                }
            }
            let norm = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            rows[i].iter_mut().for_each(|a| *a /= norm);
        }
        if ok {
            return rows.into_iter().flatten().collect();
        }
    }
}

/// One seeded benchmark function instance.
#[derive(Debug, Clone)]
pub struct BenchmarkInstance {
    id: FunctionId,
    dim: usize,
    x_opt: Vec<f64>,
    rotation: Option<Vec<f64>>,
    evaluations: u64,
    clamped: u64,
}

/// Builds instance `instance_seed` of function `id` in dimension `dim`.
pub fn make_function(id: FunctionId, dim: usize, instance_seed: u64) -> Result<BenchmarkInstance, BenchmarkError> {
    if dim < id.min_dim() {
        return Err(BenchmarkError::Dimension {
            id,
            min: id.min_dim(),
            dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    rng.set_stream(0xBB0B);
    let x_opt: Vec<f64> = match id {
        FunctionId::F5 => (0..dim)
            .map(|_| if rng.random::<bool>() { BOX_UPPER } else { BOX_LOWER })
            .collect(),
        _ => (0..dim).map(|_| rng.random_range(-OPT_RANGE..=OPT_RANGE)).collect(),
    };
    let rotation = id.rotated().then(|| random_rotation(dim, &mut rng));
    Ok(BenchmarkInstance {
        id,
        dim,
        x_opt,
        rotation,
        evaluations: 0,
        clamped: 0,
    })
}

impl BenchmarkInstance {
    pub fn id(&self) -> FunctionId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    /// Optimum value in minimization form.
    pub fn f_opt(&self) -> f64 {
        0.0
    }

    pub fn rotation(&self) -> Option<&[f64]> {
        self.rotation.as_deref()
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain::uniform(self.dim, BOX_LOWER, BOX_UPPER)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Evaluations whose input had to be clamped into the box.
    pub fn clamped_evaluations(&self) -> u64 {
        self.clamped
    }

    /// Function value (minimization form). Out-of-box inputs are clamped.
    pub fn eval(&mut self, x: &[f64]) -> Result<f64, BenchmarkError> {
        if x.len() != self.dim {
            return Err(BenchmarkError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.evaluations += 1;
        let mut x = x.to_vec();
        if self.domain().clamp(&mut x) {
            self.clamped += 1;
            log::warn!("{}: query outside [-5, 5]^{} clamped", self.id, self.dim);
        }
        Ok(self.value(&x))
    }

    /// Pure evaluation without bookkeeping; `x` must already be in the box.
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        if self.id == FunctionId::F5 {
            return linear_slope(&self.x_opt, x);
        }
        let mut z: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        if let Some(r) = &self.rotation {
            z = (0..d).map(|i| (0..d).map(|j| r[i * d + j] * z[j]).sum()).collect();
        }
        match self.id {
            FunctionId::F1 => z.iter().map(|v| v * v).sum(),
            FunctionId::F2 | FunctionId::F10 => ellipsoid(&z),
            FunctionId::F3 => {
                let cos: f64 = z.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum();
                10.0 * (d as f64 - cos) + z.iter().map(|v| v * v).sum::<f64>()
            }
            FunctionId::F8 => z
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0] + 1.0, w[1] + 1.0);
                    100.0 * (a * a - b).powi(2) + (a - 1.0).powi(2)
                })
                .sum(),
            FunctionId::F12 => z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>(),
            FunctionId::F14 => z
                .iter()
                .enumerate()
                .map(|(i, v)| v.abs().powf(2.0 + 4.0 * spread(i, d)))
                .sum(),
            FunctionId::F5 => unreachable!(),
        }
    }
}

fn ellipsoid(z: &[f64]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(i, v)| 10f64.powf(6.0 * spread(i, z.len())) * v * v)
        .sum()
}

fn linear_slope(x_opt: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    x.iter()
        .zip(x_opt)
        .enumerate()
        .map(|(i, (xi, oi))| {
            let s = oi.signum() * 10f64.powf(spread(i, d));
            let z = if oi * xi < BOX_UPPER * BOX_UPPER { *xi } else { *oi };
            BOX_UPPER * s.abs() - s * z
        })
        .sum()
}
