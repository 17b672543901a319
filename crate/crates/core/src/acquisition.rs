//! GP-UCB with multiplicative local penalization, and its box-constrained
//! maximizer.
//!
//! Values are computed in the model's standardized output space. The
//! penalizer around an in-flight point `c` is
//!
//! ```text
//! φ(x; c) = ½ · erfc( −(L·‖c − x‖ − M + μ(c)) / (2σ²(c)) )
//! ```
//!
//! with `L` the largest posterior-mean slope and `M` the best standardized
//! observation.

use rand::Rng;
use thiserror::Error;

use crate::domain::BoxDomain;
use crate::gp::{GpError, GpModel};
use crate::optim::{central_gradient, minimize_bounded, LocalSearchOptions};

/// Exploration weight used unless configured otherwise.
pub const DEFAULT_KAPPA: f64 = 2.0;
const MIN_PENALIZER_VARIANCE: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error(transparent)]
    Model(#[from] GpError),
    #[error("nothing to optimize: the fixed prefix covers all {0} coordinates")]
    NothingToOptimize(usize),
    #[error("fixed prefix has {prefix} coordinates but the box has {dim}")]
    PrefixTooLong { prefix: usize, dim: usize },
    #[error("fixed prefix lies outside the box")]
    PrefixOutOfBox,
    #[error("invalid acquisition parameter: {0}")]
    InvalidParameter(String),
}

/// A point suppressing the acquisition around itself, with its posterior
/// cached at insertion time.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalizer {
    pub center: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// The penalizer factor for precomputed inputs.
pub fn penalizer_factor(distance: f64, lipschitz: f64, best: f64, mean: f64, variance: f64) -> f64 {
    let variance = variance.max(MIN_PENALIZER_VARIANCE);
    let z = -(lipschitz * distance - best + mean) / (2.0 * variance);
    0.5 * libm::erfc(z)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Everything needed to score a candidate at one scheduler step.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    model: GpModel,
    kappa: f64,
    lipschitz: f64,
    best: f64,
    penalizers: Vec<Penalizer>,
}

impl AcquisitionContext {
    /// Context with an empty penalizer set.
    pub fn new(model: GpModel, kappa: f64, lipschitz: f64, best: f64) -> Result<Self, AcquisitionError> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(AcquisitionError::InvalidParameter(format!("kappa = {kappa}")));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(AcquisitionError::InvalidParameter(format!("lipschitz = {lipschitz}")));
        }
        if !best.is_finite() {
            return Err(AcquisitionError::InvalidParameter(format!("best = {best}")));
        }
        Ok(Self {
            model,
            kappa,
            lipschitz,
            best,
            penalizers: Vec::new(),
        })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn penalizers(&self) -> &[Penalizer] {
        &self.penalizers
    }

    pub fn clear_penalizers(&mut self) {
        self.penalizers.clear();
    }

    /// Adds an in-flight point to the penalizer set.
    pub fn push_penalizer(&mut self, center: &[f64]) -> Result<(), AcquisitionError> {
        let post = self.model.posterior(center)?;
        self.penalizers.push(Penalizer {
            center: center.to_vec(),
            mean: post.mean,
            variance: post.variance,
        });
        Ok(())
    }

    /// `μ(x) + κ·σ(x)`.
    pub fn ucb(&self, x: &[f64]) -> Result<f64, AcquisitionError> {
        let p = self.model.posterior(x)?;
        Ok(p.mean + self.kappa * p.std_dev())
    }

    /// The penalizer of `x_lp` evaluated at `x`, using the current model.
    pub fn local_penalizer(&self, x: &[f64], x_lp: &[f64]) -> Result<f64, AcquisitionError> {
        if x.len() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            }
            .into());
        }
        let p = self.model.posterior(x_lp)?;
        Ok(penalizer_factor(distance(x_lp, x), self.lipschitz, self.best, p.mean, p.variance))
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.penalizers
            .iter()
            .map(|p| penalizer_factor(distance(&p.center, x), self.lipschitz, self.best, p.mean, p.variance))
            .product()
    }

    /// UCB times the product of all penalizer factors (1 when none).
    pub fn penalized_value(&self, x: &[f64]) -> Result<f64, AcquisitionError> {
        let u = self.ucb(x)?;
        if self.penalizers.is_empty() {
            return Ok(u);
        }
        Ok(u * self.penalty(x))
    }

    fn penalized_unchecked(&self, x: &[f64]) -> f64 {
        let p = self.model.posterior_unchecked(x);
        let u = p.mean + self.kappa * p.std_dev();
        if self.penalizers.is_empty() {
            u
        } else {
            u * self.penalty(x)
        }
    }

    fn penalized_batch(&self, xs: &[f64]) -> Result<Vec<f64>, AcquisitionError> {
        let d = self.dim();
        let posts = self.model.posterior_batch(xs)?;
        Ok(posts
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let u = p.mean + self.kappa * p.std_dev();
                if self.penalizers.is_empty() {
                    u
                } else {
                    u * self.penalty(&xs[j * d..(j + 1) * d])
                }
            })
            .collect())
    }
}

/// Budgets for [`maximize_acquisition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptimizerOptions {
    /// Uniform candidates drawn over the free coordinates.
    pub candidates: usize,
    /// Best candidates handed to the local search.
    pub refine_top: usize,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for InnerOptimizerOptions {
    fn default() -> Self {
        Self {
            candidates: 2000,
            refine_top: 10,
            max_iters: 100,
            tolerance: 1e-6,
        }
    }
}

/// Maximizes the penalized acquisition over `domain`, optionally holding the
/// first `fixed_prefix.len()` coordinates at the given values.
///
/// Random screening over the free coordinates is followed by projected
/// quasi-Newton refinement of the best few candidates. Ties go to the
/// lowest candidate index.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    ctx: &AcquisitionContext,
    domain: &BoxDomain,
    fixed_prefix: Option<&[f64]>,
    opts: &InnerOptimizerOptions,
    rng: &mut R,
) -> Result<Vec<f64>, AcquisitionError> {
    let d = domain.dim();
    if d != ctx.dim() {
        return Err(GpError::DimensionMismatch {
            expected: ctx.dim(),
            got: d,
        }
        .into());
    }
    let prefix = fixed_prefix.unwrap_or(&[]);
    let m = prefix.len();
    if m > d {
        return Err(AcquisitionError::PrefixTooLong { prefix: m, dim: d });
    }
    if m == d {
        return Err(AcquisitionError::NothingToOptimize(d));
    }
    if prefix
        .iter()
        .zip(domain.lower().iter().zip(domain.upper()))
        .any(|(v, (l, u))| !(*v >= *l && *v <= *u))
    {
        return Err(AcquisitionError::PrefixOutOfBox);
    }
    let free = domain.tail(m);

    let n_cand = opts.candidates.max(1);
    let mut cand = Vec::with_capacity(n_cand * d);
    for _ in 0..n_cand {
        cand.extend_from_slice(prefix);
        cand.extend(free.sample(rng));
    }
    let values = ctx.penalized_batch(&cand)?;
    let mut order: Vec<usize> = (0..n_cand).collect();
    order.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
    order.truncate(opts.refine_top.max(1));

    let search = LocalSearchOptions {
        max_iters: opts.max_iters,
        grad_tol: opts.tolerance,
        step_tol: opts.tolerance,
    };
    let mut full = prefix.to_vec();
    full.resize(d, 0.0);
    let mut neg = |z: &[f64]| {
        full[m..].copy_from_slice(z);
        -ctx.penalized_unchecked(&full)
    };

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for &idx in &order {
        let start = &cand[idx * d + m..(idx + 1) * d];
        let res = minimize_bounded(
            |z, g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    central_gradient(&mut neg, z, g, FD_STEP);
                }
                neg(z)
            },
            start,
            free.lower(),
            free.upper(),
            &search,
        );
        let (value, z) = if -res.value >= values[idx] {
            (-res.value, res.x)
        } else {
            (values[idx], start.to_vec())
        };
        let better = match &best {
            None => true,
            Some((bv, bi, _)) => value > *bv || (value == *bv && idx < *bi),
        };
        if better {
            best = Some((value, idx, z));
        }
    }
    let (_, _, z) = best.expect("at least one candidate is refined");
    let mut x = prefix.to_vec();
    x.extend(z);
    domain.clamp(&mut x);
    Ok(x)
}
