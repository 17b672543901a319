//! Gaussian process regression with a Matérn 5/2 kernel.
//!
//! Outputs are standardized before fitting and every posterior quantity is
//! reported in that standardized space. Hyperparameters (one shared
//! lengthscale, signal variance, noise variance) are fitted by maximizing
//! the log marginal likelihood with multi-start bounded local searches in
//! log-parameter space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::domain::BoxDomain;
use crate::optim::{minimize_bounded, LocalSearchOptions};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
/// Returned by [`estimate_lipschitz`] when the posterior mean is flat.
pub const DEFAULT_LIPSCHITZ: f64 = 10.0;
const FLAT_SLOPE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("no observations")]
    NoObservations,
    #[error("invalid observation at index {0}: non-finite value")]
    InvalidObservation(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel matrix is not positive definite even with jitter {JITTER_MAX:e}")]
    Factorization,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
}

/// One evaluated input (maximization convention for `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self, GpError> {
        for (name, v) in [
            ("lengthscale", lengthscale),
            ("signal variance", signal_variance),
            ("noise variance", noise_variance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GpError::InvalidHyperparameters(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            lengthscale,
            signal_variance,
            noise_variance,
        })
    }

    fn to_log(self) -> [f64; 3] {
        [self.lengthscale.ln(), self.signal_variance.ln(), self.noise_variance.ln()]
    }

    fn from_log(theta: &[f64]) -> Self {
        Self {
            lengthscale: theta[0].exp(),
            signal_variance: theta[1].exp(),
            noise_variance: theta[2].exp(),
        }
    }
}

/// Closed ranges searched by the likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperparameterBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperparameterBounds {
    fn default() -> Self {
        Self {
            lengthscale: (1e-2, 1e2),
            signal_variance: (1e-4, 1e4),
            noise_variance: (1e-8, 1e-1),
        }
    }
}

impl HyperparameterBounds {
    fn log_box(&self) -> ([f64; 3], [f64; 3]) {
        (
            [self.lengthscale.0.ln(), self.signal_variance.0.ln(), self.noise_variance.0.ln()],
            [self.lengthscale.1.ln(), self.signal_variance.1.ln(), self.noise_variance.1.ln()],
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bounds: HyperparameterBounds,
    /// Fresh log-uniform starting points for the likelihood search.
    pub restarts: usize,
    /// Previous hyperparameters, tried in addition to the fresh starts.
    pub warm_start: Option<Hyperparameters>,
    pub local_search: LocalSearchOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bounds: HyperparameterBounds::default(),
            restarts: 2,
            warm_start: None,
            local_search: LocalSearchOptions {
                max_iters: 60,
                grad_tol: 1e-4,
                step_tol: 1e-5,
            },
        }
    }
}

/// Posterior mean and latent variance at one point, standardized space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[inline]
fn matern52(r: f64, lengthscale: f64, signal_variance: f64) -> f64 {
    let u = SQRT5 * r / lengthscale;
    signal_variance * (1.0 + u + u * u / 3.0) * (-u).exp()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Standardization of the training outputs.
fn standardize(ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return (ys[0], 1.0, vec![0.0; ys.len()]);
    }
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, scale, ys.iter().map(|y| (y - mean) / scale).collect())
}

/// Lower Cholesky factor, stored row-major.
#[derive(Debug, Clone)]
struct Factor {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Factor {
    /// Factors the symmetric `k` (row-major) with `noise` plus escalating
    /// jitter on the diagonal.
    fn new(k: &[f64], n: usize, noise: f64) -> Option<Self> {
        let mut jitter = 0.0;
        let mut l = vec![0.0; n * n];
        loop {
            if cholesky_into(k, n, noise + jitter, &mut l) {
                return Some(Self { n, l, jitter });
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_MAX * 1.000_001 {
                return None;
            }
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i]
    }

    fn diag(&self, i: usize) -> f64 {
        self.l[i * self.n + i]
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// `(L Lᵀ)⁻¹ b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (b[i] - dot(self.row(i), &y[..i])) / self.diag(i);
        }
        for i in (0..n).rev() {
            let xi = y[i] / self.diag(i);
            y[i] = xi;
            for (yk, lik) in y[..i].iter_mut().zip(self.row(i)) {
                *yk -= lik * xi;
            }
        }
        y
    }

    /// `L⁻¹`, column-major (zeros above the diagonal).
    fn inverse_factor(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut w[j * n..(j + 1) * n];
            col[j] = 1.0 / self.diag(j);
            for k in j + 1..n {
                col[k] = -dot(&self.row(k)[j..], &col[j..k]) / self.diag(k);
            }
        }
        w
    }

    /// Lower triangle of `(L Lᵀ)⁻¹`, column-major.
    fn inverse_lower(&self) -> Vec<f64> {
        let n = self.n;
        let w = self.inverse_factor();
        // (WᵀW)_ij = Σ_{k ≥ i} W_ki W_kj for i ≥ j.
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                out[j * n + i] = dot(&w[i * n + i..(i + 1) * n], &w[j * n + i..(j + 1) * n]);
            }
        }
        out
    }
}

/// Writes the lower Cholesky factor of `k + diag·I` into `l` (row-major).
/// Returns false if the matrix is not numerically positive definite.
fn cholesky_into(k: &[f64], n: usize, diag: f64, l: &mut [f64]) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = l.split_at_mut(i * n);
            let row_i = &tail[..j];
            let s = if j == i {
                k[i * n + i] + diag - dot(row_i, row_i)
            } else {
                k[i * n + j] - dot(row_i, &head[j * n..j * n + j])
            };
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return false;
                }
                tail[i] = s.sqrt();
            } else {
                tail[j] = s / head[j * n + j];
            }
        }
    }
    true
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Training inputs and their pairwise distances, shared across likelihood
/// evaluations.
struct Design {
    inputs: Vec<f64>,
    dists: Vec<f64>,
    y: Vec<f64>,
}

impl Design {
    fn n(&self) -> usize {
        self.y.len()
    }

    /// Median distance between distinct training inputs (1 if there are
    /// none).
    fn median_distance(&self) -> f64 {
        let n = self.n();
        let mut d: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.dists[i * n + j])
            .filter(|r| *r > 0.0)
            .collect();
        if d.is_empty() {
            return 1.0;
        }
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }

    fn new(data: &[Observation], y: Vec<f64>) -> Self {
        let dim = data[0].x.len();
        let n = data.len();
        let inputs: Vec<f64> = data.iter().flat_map(|o| o.x.iter().copied()).collect();
        let mut dists = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = sq_dist(&inputs[i * dim..(i + 1) * dim], &inputs[j * dim..(j + 1) * dim]).sqrt();
                dists[i * n + j] = r;
                dists[j * n + i] = r;
            }
        }
        Self {
            inputs,
            dists,
            y,
        }
    }

    /// Noise-free kernel matrix, row-major.
    fn kernel_matrix(&self, hp: &Hyperparameters) -> Vec<f64> {
        self.dists
            .iter()
            .map(|r| matern52(*r, hp.lengthscale, hp.signal_variance))
            .collect()
    }

    /// Negative log marginal likelihood and its gradient in log-parameters.
    fn nll_and_grad(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let hp = Hyperparameters::from_log(theta);
        let n = self.n();
        let kf = self.kernel_matrix(&hp);
        let Some(chol) = Factor::new(&kf, n, hp.noise_variance) else {
            if let Some(grad) = grad {
                grad.iter_mut().for_each(|g| *g = 0.0);
            }
            return f64::INFINITY;
        };
        let alpha = chol.solve(&self.y);
        let nll = 0.5 * dot(&self.y, &alpha) + 0.5 * chol.log_det() + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        let Some(grad) = grad else {
            return nll;
        };
        let kinv = chol.inverse_lower();
        // ∂K/∂log σ_f² = K_f, ∂K/∂log σ_n² = σ_n² I, ∂K/∂log ℓ from the Matérn
        // form. Only the lower triangle of K⁻¹ is filled, so off-diagonal
        // terms count twice.
        let mut tr_f = 0.0;
        let mut quad_f = 0.0;
        let mut tr_l = 0.0;
        let mut quad_l = 0.0;
        let mut tr_inv = 0.0;
        for j in 0..n {
            let col = &kinv[j * n..(j + 1) * n];
            for i in j..n {
                let kfv = kf[i * n + j];
                let u = SQRT5 * self.dists[i * n + j] / hp.lengthscale;
                // σ_f² u²(1 + u)/3 · e^{−u}, expressed through K_f.
                let dl = kfv * u * u * (1.0 + u) / (3.0 + 3.0 * u + u * u);
                let weight = if i == j { 1.0 } else { 2.0 };
                let w = col[i] * weight;
                let aa = alpha[i] * alpha[j] * weight;
                tr_f += w * kfv;
                quad_f += aa * kfv;
                tr_l += w * dl;
                quad_l += aa * dl;
            }
            tr_inv += col[j];
        }
        grad[0] = 0.5 * (tr_l - quad_l);
        grad[1] = 0.5 * (tr_f - quad_f);
        grad[2] = 0.5 * hp.noise_variance * (tr_inv - dot(&alpha, &alpha));
        nll
    }
}

/// A fitted Gaussian process. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    inputs: Vec<f64>,
    y_std: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: Hyperparameters,
    jitter: f64,
    l_inv: DMatrix<f64>,
    alpha: DVector<f64>,
}

fn validate(data: &[Observation]) -> Result<usize, GpError> {
    let first = data.first().ok_or(GpError::NoObservations)?;
    let dim = first.x.len();
    for (i, o) in data.iter().enumerate() {
        if o.x.len() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: o.x.len(),
            });
        }
        if !o.y.is_finite() || o.x.iter().any(|v| !v.is_finite()) {
            return Err(GpError::InvalidObservation(i));
        }
    }
    Ok(dim)
}

/// Fits hyperparameters by maximum marginal likelihood and returns the model.
///
/// The search runs one bounded local optimization per start: the warm start
/// (if any), a data-scaled start (lengthscale at the median pairwise
/// distance), then `opts.restarts` log-uniform draws from `rng`. The best
/// likelihood wins; ties keep the earliest start.
pub fn fit_gp<R: Rng + ?Sized>(data: &[Observation], opts: &FitOptions, rng: &mut R) -> Result<GpModel, GpError> {
    validate(data)?;
    let ys: Vec<f64> = data.iter().map(|o| o.y).collect();
    let (_, _, y_std) = standardize(&ys);
    let design = Design::new(data, y_std);
    let (lo, hi) = opts.bounds.log_box();

    let clamp = |mut t: [f64; 3]| {
        for k in 0..3 {
            t[k] = t[k].clamp(lo[k], hi[k]);
        }
        t
    };
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(opts.restarts + 2);
    if let Some(w) = opts.warm_start {
        starts.push(clamp(w.to_log()));
    }
    starts.push(clamp([design.median_distance().ln(), 0.0, 1e-3_f64.ln()]));
    for _ in 0..opts.restarts {
        let mut t = [0.0; 3];
        for k in 0..3 {
            t[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
        }
        starts.push(t);
    }

    let mut best: Option<([f64; 3], f64)> = None;
    for start in &starts {
        let res = minimize_bounded(|t, g| design.nll_and_grad(t, g), start, &lo, &hi, &opts.local_search);
        if res.value.is_finite() && best.as_ref().is_none_or(|(_, v)| res.value < *v) {
            best = Some(([res.x[0], res.x[1], res.x[2]], res.value));
        }
    }
    let theta = match best {
        Some((t, _)) => t,
        // Every start hit a factorization failure; fall back to the most
        // regularized corner.
        None => [hi[0], lo[1], hi[2]],
    };
    let b = &opts.bounds;
    let hp = Hyperparameters::from_log(&theta);
    let hp = Hyperparameters {
        lengthscale: hp.lengthscale.clamp(b.lengthscale.0, b.lengthscale.1),
        signal_variance: hp.signal_variance.clamp(b.signal_variance.0, b.signal_variance.1),
        noise_variance: hp.noise_variance.clamp(b.noise_variance.0, b.noise_variance.1),
    };
    GpModel::with_hyperparameters(data, hp)
}

impl GpModel {
    /// Builds the posterior for fixed hyperparameters (no likelihood search).
    pub fn with_hyperparameters(data: &[Observation], hyper: Hyperparameters) -> Result<Self, GpError> {
        let dim = validate(data)?;
        Hyperparameters::new(hyper.lengthscale, hyper.signal_variance, hyper.noise_variance)?;
        let ys: Vec<f64> = data.iter().map(|o| o.y).collect();
        let (y_mean, y_scale, y_std) = standardize(&ys);
        let design = Design::new(data, y_std);
        let kf = design.kernel_matrix(&hyper);
        let n = design.n();
        let chol = Factor::new(&kf, n, hyper.noise_variance).ok_or(GpError::Factorization)?;
        let alpha = DVector::from_vec(chol.solve(&design.y));
        let l_inv = DMatrix::from_vec(n, n, chol.inverse_factor());
        Ok(Self {
            dim,
            inputs: design.inputs,
            y_std: DVector::from_vec(design.y),
            y_mean,
            y_scale,
            hyper,
            jitter: chol.jitter,
            l_inv,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y_std.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_std.is_empty()
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyper
    }

    /// Extra diagonal jitter the factorization needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn standardized_targets(&self) -> &[f64] {
        self.y_std.as_slice()
    }

    /// Largest standardized training output.
    pub fn best_standardized(&self) -> f64 {
        self.y_std.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn destandardize(&self, y_std: f64) -> f64 {
        y_std * self.y_scale + self.y_mean
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GpError> {
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                matern52(
                    sq_dist(x, self.training_input(i)).sqrt(),
                    self.hyper.lengthscale,
                    self.hyper.signal_variance,
                )
            })
            .collect()
    }

    /// Posterior mean and latent variance (clamped at zero).
    pub fn posterior(&self, x: &[f64]) -> Result<Posterior, GpError> {
        self.check_dim(x)?;
        Ok(self.posterior_unchecked(x))
    }

    pub(crate) fn posterior_unchecked(&self, x: &[f64]) -> Posterior {
        let k = self.cross_kernel(x);
        let n = k.len();
        let mean: f64 = k.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        // v = L⁻¹ k, accumulated column by column of the lower factor.
        let mut v = vec![0.0; n];
        for (j, kj) in k.iter().enumerate() {
            let col = &self.l_inv.as_slice()[j * n + j..(j + 1) * n];
            for (vi, lij) in v[j..].iter_mut().zip(col) {
                *vi += lij * kj;
            }
        }
        let explained: f64 = v.iter().map(|a| a * a).sum();
        Posterior {
            mean,
            variance: (self.hyper.signal_variance - explained).max(0.0),
        }
    }

    /// Posterior at many points at once; `xs` is row-major with `dim` columns.
    pub fn posterior_batch(&self, xs: &[f64]) -> Result<Vec<Posterior>, GpError> {
        if !xs.len().is_multiple_of(self.dim.max(1)) {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: xs.len() % self.dim.max(1),
            });
        }
        let m = xs.len().checked_div(self.dim).unwrap_or(0);
        let n = self.len();
        let kxs = DMatrix::from_fn(n, m, |i, j| {
            matern52(
                sq_dist(&xs[j * self.dim..(j + 1) * self.dim], self.training_input(i)).sqrt(),
                self.hyper.lengthscale,
                self.hyper.signal_variance,
            )
        });
        let means = kxs.tr_mul(&self.alpha);
        let v = &self.l_inv * &kxs;
        Ok((0..m)
            .map(|j| Posterior {
                mean: means[j],
                variance: (self.hyper.signal_variance - v.column(j).norm_squared()).max(0.0),
            })
            .collect())
    }

    /// Analytic gradient of the posterior mean.
    pub fn posterior_mean_gradient(&self, x: &[f64]) -> Result<Vec<f64>, GpError> {
        self.check_dim(x)?;
        let ls = self.hyper.lengthscale;
        // ∂k/∂x = −σ_f² (5 / 3ℓ²)(1 + u) e^{−u} (x − x_i), u = √5 r / ℓ
        let c = -self.hyper.signal_variance * 5.0 / (3.0 * ls * ls);
        let mut grad = vec![0.0; self.dim];
        for i in 0..self.len() {
            let xi = self.training_input(i);
            let u = SQRT5 * sq_dist(x, xi).sqrt() / ls;
            let w = self.alpha[i] * c * (1.0 + u) * (-u).exp();
            for ((g, a), b) in grad.iter_mut().zip(x).zip(xi) {
                *g += w * (a - b);
            }
        }
        Ok(grad)
    }
}

/// Largest posterior-mean slope over `samples` uniform box draws and the
/// training inputs. Falls back to [`DEFAULT_LIPSCHITZ`] for flat posteriors.
pub fn estimate_lipschitz<R: Rng + ?Sized>(model: &GpModel, domain: &BoxDomain, samples: usize, rng: &mut R) -> f64 {
    let slope = |x: &[f64]| -> f64 {
        model
            .posterior_mean_gradient(x)
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .unwrap_or(0.0)
    };
    let mut max_slope = 0.0_f64;
    for _ in 0..samples {
        max_slope = max_slope.max(slope(&domain.sample(rng)));
    }
    for i in 0..model.len() {
        max_slope = max_slope.max(slope(model.training_input(i)));
    }
    if max_slope < FLAT_SLOPE {
        DEFAULT_LIPSCHITZ
    } else {
        max_slope
    }
}
