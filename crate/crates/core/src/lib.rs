//! Pipelined Bayesian optimization.
//!
//! An experiment is split into `K` sequential processes, each fixing one
//! segment of the parameter vector. Staggering experiment starts keeps `P·K`
//! experiments in flight; whenever a result lands, the surrogate is refitted
//! and every running experiment has its not-yet-started segments
//! re-optimized against the new acquisition surface.
//!
//! Modules, bottom-up:
//! - [`gp`]: Matérn 5/2 Gaussian process regression.
//! - [`acquisition`]: GP-UCB, local penalization and the inner maximizer.
//! - [`engine`]: problem types, the step clock and the three strategies.
//! - [`benchmarks`]: native test functions with known optima.
//! - [`metrics`]: simple regret and cross-run summaries.

pub mod acquisition;
pub mod benchmarks;
pub mod domain;
pub mod engine;
pub mod gp;
pub mod metrics;
pub mod optim;
pub mod rng;

pub use domain::BoxDomain;
