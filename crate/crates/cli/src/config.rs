//! Experiment configuration: a single JSON file, every key optional.

use std::fs;
use std::path::{Path, PathBuf};

use pipebo_core::acquisition::InnerOptimizerOptions;
use pipebo_core::benchmarks::FunctionId;
use pipebo_core::engine::{EngineConfig, PipelineProblem, Strategy};
use pipebo_core::gp::FitOptions;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// One row of the problem-set table: `P` parallel experiments per set and
/// the per-process segment sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    #[serde(default = "one")]
    pub p: usize,
    pub dims: Vec<usize>,
}

fn one() -> usize {
    1
}

impl Preset {
    pub fn new(p: usize, dims: &[usize]) -> Self {
        Self { p, dims: dims.to_vec() }
    }

    /// The seven problem sets used for the benchmark study.
    pub fn defaults() -> Vec<Preset> {
        vec![
            Preset::new(1, &[1, 1]),
            Preset::new(1, &[8, 1, 1]),
            Preset::new(1, &[5, 3, 2]),
            Preset::new(1, &[3, 4, 3]),
            Preset::new(1, &[2, 3, 5]),
            Preset::new(1, &[1, 1, 8]),
            Preset::new(1, &[2, 2, 2, 2, 2]),
        ]
    }

    pub fn problem(&self, budget_steps: usize) -> Result<PipelineProblem> {
        PipelineProblem::on_standard_box(self.dims.clone(), self.p, budget_steps)
            .map_err(|e| HarnessError::Config(format!("preset P={} D={:?}: {e}", self.p, self.dims)))
    }
}

/// Inner-maximizer budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerBudgets {
    pub candidates: usize,
    pub refine_top: usize,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for InnerBudgets {
    fn default() -> Self {
        let o = InnerOptimizerOptions::default();
        Self {
            candidates: o.candidates,
            refine_top: o.refine_top,
            max_iters: o.max_iters,
            tolerance: o.tolerance,
        }
    }
}

/// A black box run as a child process. It receives one whitespace-separated
/// coordinate line per query on stdin and answers with one value per line
/// on stdout. Like the built-in functions, values are in minimization form
/// and `f_opt` is the known minimum used for regret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalObjective {
    pub name: String,
    pub command: Vec<String>,
    pub f_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in ids (`F1`, …) or the name of the external objective.
    pub functions: Vec<String>,
    pub presets: Vec<Preset>,
    pub strategies: Vec<String>,
    pub runs: usize,
    pub base_seed: u64,
    pub budget_steps: usize,
    pub kappa: f64,
    pub inner: InnerBudgets,
    /// Fresh random starts per hyperparameter fit.
    pub gp_restarts: usize,
    pub lipschitz_samples: usize,
    /// Worker threads; defaults to the available cores.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub external: Option<ExternalObjective>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            functions: FunctionId::ALL.iter().map(|f| f.code().to_string()).collect(),
            presets: Preset::defaults(),
            strategies: ["vanilla", "pipebo", "noupdate"].map(String::from).to_vec(),
            runs: 50,
            base_seed: 0,
            budget_steps: 200,
            kappa: engine.kappa,
            inner: InnerBudgets::default(),
            gp_restarts: engine.fit.restarts,
            lipschitz_samples: engine.lipschitz_samples,
            workers: None,
            output_dir: PathBuf::from("results"),
            external: None,
        }
    }
}

/// What a configured function name refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionSpec {
    Builtin(FunctionId),
    External(ExternalObjective),
}

impl FunctionSpec {
    pub fn name(&self) -> &str {
        match self {
            FunctionSpec::Builtin(id) => id.code(),
            FunctionSpec::External(e) => &e.name,
        }
    }
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub functions: Vec<FunctionSpec>,
    pub problems: Vec<PipelineProblem>,
    pub strategies: Vec<Strategy>,
    pub engine: EngineConfig,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Checks every key and fills in machine-dependent defaults.
    pub fn resolve(mut self) -> Result<ResolvedConfig> {
        let cfg_err = |m: String| HarnessError::Config(m);
        if self.runs == 0 {
            return Err(cfg_err("runs must be at least 1".into()));
        }
        if self.functions.is_empty() || self.presets.is_empty() || self.strategies.is_empty() {
            return Err(cfg_err("functions, presets and strategies must be non-empty".into()));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(cfg_err(format!("kappa must be a non-negative number, got {}", self.kappa)));
        }
        let inner = InnerOptimizerOptions {
            candidates: self.inner.candidates,
            refine_top: self.inner.refine_top,
            max_iters: self.inner.max_iters,
            tolerance: self.inner.tolerance,
        };
        if inner.candidates == 0 || inner.refine_top == 0 || !(inner.tolerance > 0.0) {
            return Err(cfg_err("inner budgets and tolerance must be positive".into()));
        }
        if let Some(ext) = &self.external {
            if ext.command.is_empty() {
                return Err(cfg_err(format!("external objective `{}` has an empty command", ext.name)));
            }
            if !ext.f_opt.is_finite() {
                return Err(cfg_err(format!("external objective `{}` needs a finite f_opt", ext.name)));
            }
            if ext.name.parse::<FunctionId>().is_ok() {
                return Err(cfg_err(format!("external objective name `{}` shadows a built-in function", ext.name)));
            }
        }

        let mut functions = Vec::with_capacity(self.functions.len());
        for name in &self.functions {
            let spec = match (&self.external, name.parse::<FunctionId>()) {
                (_, Ok(id)) => FunctionSpec::Builtin(id),
                (Some(ext), Err(_)) if ext.name == *name => FunctionSpec::External(ext.clone()),
                (_, Err(e)) => return Err(cfg_err(e.to_string())),
            };
            if functions.contains(&spec) {
                return Err(cfg_err(format!("function `{name}` listed twice")));
            }
            functions.push(spec);
        }

        let mut problems = Vec::with_capacity(self.presets.len());
        for preset in &self.presets {
            let problem = preset.problem(self.budget_steps)?;
            if problems.iter().any(|p: &PipelineProblem| p.tag() == problem.tag()) {
                return Err(cfg_err(format!("preset {} listed twice", problem.tag())));
            }
            for spec in &functions {
                if let FunctionSpec::Builtin(id) = spec {
                    pipebo_core::benchmarks::make_function(*id, problem.dim(), 0)
                        .map_err(|e| cfg_err(format!("{} with preset {}: {e}", id, problem.tag())))?;
                }
            }
            problems.push(problem);
        }

        let mut strategies = Vec::with_capacity(self.strategies.len());
        for s in &self.strategies {
            let st: Strategy = s.parse().map_err(cfg_err)?;
            if strategies.contains(&st) {
                return Err(cfg_err(format!("strategy `{s}` listed twice")));
            }
            strategies.push(st);
        }

        let workers = match self.workers {
            Some(0) => return Err(cfg_err("workers must be at least 1".into())),
            Some(w) => w,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        self.workers = Some(workers);

        let engine = EngineConfig {
            kappa: self.kappa,
            inner,
            fit: FitOptions {
                restarts: self.gp_restarts,
                ..FitOptions::default()
            },
            lipschitz_samples: self.lipschitz_samples,
        };
        Ok(ResolvedConfig {
            config: self,
            functions,
            problems,
            strategies,
            engine,
            workers,
        })
    }
}
