//! The step clock and the optimization strategies.
//!
//! Time advances in steps, one process per step. A set launched at step `n`
//! runs process `i` during step `n + i − 1` and reports its result at the
//! end of step `n + K − 1`. Between steps the scheduler
//!
//! 1. records the result of the set that just finished,
//! 2. refits the surrogate on every completed result,
//! 3. re-optimizes the not-yet-started segments of each running set, oldest
//!    first, penalizing the acquisition around every point already placed,
//! 4. proposes the next set by greedy local penalization.
//!
//! [`Strategy::NoUpdate`] skips step 3 and only penalizes around the
//! running sets. [`Strategy::Vanilla`] runs one set at a time through all
//! `K` processes.

mod problem;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use problem::{init_sets, ExperimentalSet, PipelineProblem};

use crate::acquisition::{maximize_acquisition, AcquisitionContext, AcquisitionError, InnerOptimizerOptions, DEFAULT_KAPPA};
use crate::gp::{estimate_lipschitz, fit_gp, FitOptions, GpError, Hyperparameters, Observation};
use crate::rng::{self, Purpose};

/// Relative margin an in-flight update must clear before replacing the
/// current suffix.
pub const UPDATE_MARGIN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Model(#[from] GpError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("objective failed on set B{set}, point {point}: {message}")]
    Objective { set: usize, point: usize, message: String },
    #[error("objective returned non-finite value {value} on set B{set}, point {point} at {x:?}")]
    NonFinite { set: usize, point: usize, value: f64, x: Vec<f64> },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ObjectiveError(pub String);

/// The black box being maximized.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError>;
}

impl<F: FnMut(&[f64]) -> f64> Objective for F {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Pipelined with in-flight updates.
    PipeBo,
    /// Pipelined, parameters frozen at proposal.
    NoUpdate,
    /// One set at a time through all processes.
    Vanilla,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Vanilla, Strategy::PipeBo, Strategy::NoUpdate];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::PipeBo => "pipebo",
            Strategy::NoUpdate => "noupdate",
            Strategy::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.tag() == s.trim())
            .ok_or_else(|| format!("unknown strategy `{s}`; expected pipebo, noupdate or vanilla"))
    }
}

/// Tunables shared by all strategies.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub kappa: f64,
    pub inner: InnerOptimizerOptions,
    pub fit: FitOptions,
    pub lipschitz_samples: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            inner: InnerOptimizerOptions::default(),
            fit: FitOptions::default(),
            lipschitz_samples: 500,
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    /// Step at whose end the result became available.
    pub step: usize,
    pub set: usize,
    pub point: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Diagnostics from the most recent scheduler iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub hyperparameters: Option<Hyperparameters>,
    pub lipschitz: f64,
    /// Penalizer count when the next set was proposed.
    pub penalizers_before_proposal: usize,
    /// In-flight points whose free suffix moved.
    pub updated_points: usize,
}

/// Re-optimizes the free suffix of every point in `set`, holding the first
/// `fixed_segments` process segments. A suffix moves only if the new point
/// beats the current one by more than [`UPDATE_MARGIN`] (relative). Each
/// point is added to the penalizer set once processed, so later points in
/// the same set are pushed away from it. Returns how many points moved.
pub fn update_inflight<R: Rng + ?Sized>(
    set: &mut ExperimentalSet,
    fixed_segments: usize,
    ctx: &mut AcquisitionContext,
    problem: &PipelineProblem,
    opts: &InnerOptimizerOptions,
    rng: &mut R,
) -> Result<usize, EngineError> {
    let mut moved = 0;
    let prefix_len = problem.prefix_len(fixed_segments);
    for point in set.points.iter_mut() {
        if fixed_segments < problem.processes() {
            let candidate = maximize_acquisition(ctx, problem.domain(), Some(&point[..prefix_len]), opts, rng)?;
            let current = ctx.penalized_value(point)?;
            let proposed = ctx.penalized_value(&candidate)?;
            if proposed > current + UPDATE_MARGIN * (1.0 + current.abs()) {
                point[prefix_len..].copy_from_slice(&candidate[prefix_len..]);
                moved += 1;
            }
        }
        ctx.push_penalizer(point)?;
    }
    Ok(moved)
}

/// Proposes `P` fresh points by greedy local penalization, adding each to the
/// penalizer set as it is placed.
pub fn propose_next<R: Rng + ?Sized>(
    ctx: &mut AcquisitionContext,
    problem: &PipelineProblem,
    index: usize,
    opts: &InnerOptimizerOptions,
    rng: &mut R,
) -> Result<ExperimentalSet, EngineError> {
    let mut points = Vec::with_capacity(problem.parallelism());
    for _ in 0..problem.parallelism() {
        let x = maximize_acquisition(ctx, problem.domain(), None, opts, rng)?;
        ctx.push_penalizer(&x)?;
        points.push(x);
    }
    Ok(ExperimentalSet::new(index, points))
}

/// State of one run.
#[derive(Debug, Clone)]
pub struct EngineState {
    problem: PipelineProblem,
    config: EngineConfig,
    strategy: Strategy,
    seed: u64,
    /// Last completed step.
    clock: usize,
    completed: Vec<ExperimentalSet>,
    /// Running sets, oldest first.
    in_flight: VecDeque<ExperimentalSet>,
    observations: Vec<Observation>,
    hyper: Option<Hyperparameters>,
    best_per_step: Vec<f64>,
    log: Vec<EvaluationRecord>,
    next_index: usize,
    report: StepReport,
}

impl EngineState {
    /// Draws the initial design. Pipelined strategies launch `K` staggered
    /// sets; vanilla launches only the first of them.
    pub fn new(strategy: Strategy, problem: PipelineProblem, config: EngineConfig, seed: u64) -> Self {
        let mut sets = init_sets(&problem, &mut rng::stream(seed, 0, Purpose::InitialDesign));
        let k = problem.processes();
        if strategy == Strategy::Vanilla {
            sets.truncate(1);
            sets[0].committed = 1;
        }
        let next_index = sets.len() + 1;
        let (clock, best) = match strategy {
            Strategy::Vanilla => (0, Vec::new()),
            _ => (k - 1, vec![f64::NEG_INFINITY; k - 1]),
        };
        Self {
            problem,
            config,
            strategy,
            seed,
            clock,
            completed: Vec::new(),
            in_flight: sets.into(),
            observations: Vec::new(),
            hyper: None,
            best_per_step: best,
            log: Vec::new(),
            next_index,
            report: StepReport::default(),
        }
    }

    pub fn problem(&self) -> &PipelineProblem {
        &self.problem
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Number of fully elapsed steps.
    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn completed(&self) -> &[ExperimentalSet] {
        &self.completed
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &ExperimentalSet> {
        self.in_flight.iter()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Best completed value at each elapsed step (`-∞` before any result).
    pub fn best_per_step(&self) -> &[f64] {
        &self.best_per_step
    }

    pub fn evaluations(&self) -> &[EvaluationRecord] {
        &self.log
    }

    pub fn last_report(&self) -> &StepReport {
        &self.report
    }

    pub fn is_finished(&self) -> bool {
        match self.strategy {
            Strategy::Vanilla => self.clock + self.problem.processes() > self.problem.budget_steps(),
            _ => self.clock >= self.problem.budget_steps(),
        }
    }

    fn best_so_far(&self) -> f64 {
        self.observations.iter().map(|o| o.y).fold(f64::NEG_INFINITY, f64::max)
    }

    fn complete_oldest<O: Objective + ?Sized>(&mut self, objective: &mut O, step: usize) -> Result<(), EngineError> {
        let mut set = self.in_flight.pop_front().expect("a set is always in flight");
        debug_assert_eq!(set.committed, self.problem.processes());
        let mut values = Vec::with_capacity(set.points.len());
        for (j, x) in set.points.iter().enumerate() {
            let y = objective.evaluate(x).map_err(|e| EngineError::Objective {
                set: set.index,
                point: j,
                message: e.0,
            })?;
            if !y.is_finite() {
                return Err(EngineError::NonFinite {
                    set: set.index,
                    point: j,
                    value: y,
                    x: x.clone(),
                });
            }
            self.observations.push(Observation::new(x.clone(), y));
            self.log.push(EvaluationRecord {
                step,
                set: set.index,
                point: j,
                x: x.clone(),
                y,
            });
            values.push(y);
        }
        set.result = Some(values);
        self.completed.push(set);
        Ok(())
    }

    fn build_context(&mut self, step: usize) -> Result<AcquisitionContext, EngineError> {
        let mut fit = self.config.fit.clone();
        fit.warm_start = self.hyper;
        let model = fit_gp(
            &self.observations,
            &fit,
            &mut rng::stream(self.seed, step as u64, Purpose::HyperparameterFit),
        )?;
        self.hyper = Some(model.hyperparameters());
        let lipschitz = estimate_lipschitz(
            &model,
            self.problem.domain(),
            self.config.lipschitz_samples,
            &mut rng::stream(self.seed, step as u64, Purpose::Lipschitz),
        );
        let best = model.best_standardized();
        self.report.hyperparameters = self.hyper;
        self.report.lipschitz = lipschitz;
        Ok(AcquisitionContext::new(model, self.config.kappa, lipschitz, best)?)
    }

    /// One scheduler iteration of a pipelined strategy (steps
    /// `t = K, K+1, …`): ends step `t` and prepares step `t + 1`.
    pub fn pipelined_step<O: Objective + ?Sized>(&mut self, objective: &mut O) -> Result<(), EngineError> {
        let t = self.clock + 1;
        let k = self.problem.processes();
        self.report = StepReport {
            step: t,
            ..StepReport::default()
        };
        self.complete_oldest(objective, t)?;
        self.best_per_step.push(self.best_so_far());
        self.clock = t;

        let mut ctx = self.build_context(t)?;
        for (pos, set) in self.in_flight.iter_mut().enumerate() {
            let i = pos + 1;
            debug_assert_eq!(set.committed, k - i);
            match self.strategy {
                Strategy::PipeBo => {
                    let mut rng = rng::stream(self.seed, t as u64, Purpose::Update(i as u32));
                    self.report.updated_points +=
                        update_inflight(set, set.committed, &mut ctx, &self.problem, &self.config.inner, &mut rng)?;
                }
                _ => {
                    for x in &set.points {
                        ctx.push_penalizer(x)?;
                    }
                }
            }
        }
        self.report.penalizers_before_proposal = ctx.penalizers().len();
        let mut rng = rng::stream(self.seed, t as u64, Purpose::Proposal);
        let next = propose_next(&mut ctx, &self.problem, self.next_index, &self.config.inner, &mut rng)?;
        self.next_index += 1;
        self.in_flight.push_back(next);
        for set in self.in_flight.iter_mut() {
            set.committed += 1;
        }
        Ok(())
    }

    /// Runs the current vanilla experiment through its remaining processes,
    /// records its result and proposes the next one without penalizers.
    pub fn vanilla_step<O: Objective + ?Sized>(&mut self, objective: &mut O) -> Result<(), EngineError> {
        let k = self.problem.processes();
        let best = self.best_so_far();
        for _ in 1..k {
            self.best_per_step.push(best);
        }
        let t = self.clock + k;
        self.report = StepReport {
            step: t,
            ..StepReport::default()
        };
        if let Some(set) = self.in_flight.front_mut() {
            set.committed = k;
        }
        self.complete_oldest(objective, t)?;
        self.best_per_step.push(self.best_so_far());
        self.clock = t;

        let mut ctx = self.build_context(t)?;
        let mut rng = rng::stream(self.seed, t as u64, Purpose::Proposal);
        let mut next = propose_next(&mut ctx, &self.problem, self.next_index, &self.config.inner, &mut rng)?;
        self.next_index += 1;
        next.committed = 1;
        self.in_flight.push_back(next);
        Ok(())
    }

    /// Advances by one iteration of this state's strategy.
    pub fn step<O: Objective + ?Sized>(&mut self, objective: &mut O) -> Result<(), EngineError> {
        match self.strategy {
            Strategy::Vanilla => self.vanilla_step(objective),
            _ => self.pipelined_step(objective),
        }
    }

    /// Pads the trace to the budget once no further result can land.
    fn finish(mut self) -> RunOutcome {
        let best = self.best_so_far();
        self.best_per_step.resize(self.problem.budget_steps(), best);
        RunOutcome {
            best_values: self.best_per_step,
            evaluations: self.log,
            completed_sets: self.completed.len(),
        }
    }
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Best completed value per step, length = budget.
    pub best_values: Vec<f64>,
    pub evaluations: Vec<EvaluationRecord>,
    pub completed_sets: usize,
}

/// Runs `strategy` on `problem` until the step budget is spent.
pub fn run<O: Objective + ?Sized>(
    strategy: Strategy,
    problem: &PipelineProblem,
    objective: &mut O,
    seed: u64,
    config: &EngineConfig,
) -> Result<RunOutcome, EngineError> {
    let mut state = EngineState::new(strategy, problem.clone(), config.clone(), seed);
    while !state.is_finished() {
        state.step(objective)?;
    }
    Ok(state.finish())
}
