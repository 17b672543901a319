//! Executing the run matrix and reading/writing its artifacts.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use pipebo_core::benchmarks::{make_function, BenchmarkInstance};
use pipebo_core::engine::{run, Objective, ObjectiveError, PipelineProblem, Strategy};
use pipebo_core::metrics::RunTrace;
use pipebo_core::rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, FunctionSpec, ResolvedConfig};
use crate::error::{HarnessError, Result};
use crate::external::SubprocessObjective;

pub const TRACE_FILE: &str = "traces.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_HEADER: [&str; 7] = ["function", "preset", "strategy", "run", "step", "best_value", "simple_regret"];

/// A built-in function negated for maximization.
struct Negated(BenchmarkInstance);

impl Objective for Negated {
    fn evaluate(&mut self, x: &[f64]) -> std::result::Result<f64, ObjectiveError> {
        self.0.eval(x).map(|v| -v).map_err(|e| ObjectiveError(e.to_string()))
    }
}

struct Job<'a> {
    function: &'a FunctionSpec,
    problem: &'a PipelineProblem,
    strategy: Strategy,
    run: usize,
}

fn run_job(job: &Job<'_>, resolved: &ResolvedConfig) -> Result<RunTrace> {
    let seed = resolved.config.base_seed.wrapping_add(job.run as u64);
    let fail = |source| HarnessError::Run {
        function: job.function.name().to_string(),
        preset: job.problem.tag(),
        strategy: job.strategy.tag().to_string(),
        run: job.run,
        source: Box::new(source),
    };
    let started = Instant::now();
    let (outcome, f_opt) = match job.function {
        FunctionSpec::Builtin(id) => {
            let instance = make_function(*id, job.problem.dim(), seed)
                .map_err(|e| HarnessError::Config(format!("{id} with preset {}: {e}", job.problem.tag())))?;
            let f_opt = instance.f_opt();
            let mut objective = Negated(instance);
            (run(job.strategy, job.problem, &mut objective, seed, &resolved.engine), f_opt)
        }
        FunctionSpec::External(spec) => {
            let mut objective = SubprocessObjective::spawn(spec).map_err(|e| {
                fail(pipebo_core::engine::EngineError::Objective {
                    set: 0,
                    point: 0,
                    message: e.0,
                })
            })?;
            (run(job.strategy, job.problem, &mut objective, seed, &resolved.engine), spec.f_opt)
        }
    };
    let outcome = outcome.map_err(fail)?;
    let trace = RunTrace::new(
        job.function.name(),
        job.problem.tag(),
        job.strategy.tag(),
        job.run,
        seed,
        outcome.best_values,
        -f_opt,
    );
    info!(
        "{} {} {} run {}: final regret {} ({:.1}s)",
        trace.function,
        trace.preset,
        trace.strategy,
        trace.run,
        trace.regrets.last().copied().unwrap_or(f64::INFINITY),
        started.elapsed().as_secs_f64()
    );
    Ok(trace)
}

/// Runs every (function, preset, strategy, run) combination and returns the
/// traces in that nesting order, which is also the file order.
pub fn execute(resolved: &ResolvedConfig) -> Result<Vec<RunTrace>> {
    let mut jobs = Vec::new();
    for function in &resolved.functions {
        for problem in &resolved.problems {
            for &strategy in &resolved.strategies {
                for run in 0..resolved.config.runs {
                    jobs.push(Job {
                        function,
                        problem,
                        strategy,
                        run,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {} workers: {e}", resolved.workers)))?;
    // Indexed parallel collection keeps job order regardless of which
    // worker finishes first.
    let results: Vec<Result<RunTrace>> = pool.install(|| jobs.par_iter().map(|j| run_job(j, resolved)).collect());
    results.into_iter().collect()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seeds: Vec<u64>,
    code_version: String,
    prng: &'static str,
    trace_file: &'static str,
    trace_rows: usize,
    timestamp_unix: u64,
    elapsed_seconds: f64,
}

/// Runs the matrix and writes `traces.csv` and `manifest.json` into the
/// configured output directory. The directory is checked for writability
/// before any run starts.
pub fn run_matrix(resolved: &ResolvedConfig) -> Result<PathBuf> {
    let dir = &resolved.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let trace_path = dir.join(TRACE_FILE);
    File::create(&trace_path).map_err(|e| HarnessError::io(&trace_path, e))?;

    let started = Instant::now();
    let traces = execute(resolved)?;
    let rows = write_traces(&trace_path, &traces)?;

    let base = resolved.config.base_seed;
    let manifest = Manifest {
        config: &resolved.config,
        seeds: (0..resolved.config.runs as u64).map(|r| base.wrapping_add(r)).collect(),
        code_version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        prng: rng::ALGORITHM,
        trace_file: TRACE_FILE,
        trace_rows: rows,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| HarnessError::io(&manifest_path, e))?;
    Ok(trace_path)
}

/// Writes traces in the flat CSV schema; returns the number of data rows.
/// Numbers use shortest round-trip formatting, with `inf` for the regret
/// (and `-inf` for the best value) before the first result.
pub fn write_traces(path: &Path, traces: &[RunTrace]) -> Result<usize> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    let mut rows = 0;
    for t in traces {
        let run = t.run.to_string();
        for (i, (b, r)) in t.best_values.iter().zip(&t.regrets).enumerate() {
            let step = (i + 1).to_string();
            w.write_record([
                t.function.as_str(),
                t.preset.as_str(),
                t.strategy.as_str(),
                run.as_str(),
                step.as_str(),
                &b.to_string(),
                &r.to_string(),
            ])
            .map_err(csv_err)?;
            rows += 1;
        }
    }
    let mut inner = w.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(rows)
}

/// Reads a trace CSV back into per-run traces, in file order. Seeds are not
/// part of the CSV and are reported as the run index.
pub fn read_traces(path: &Path) -> Result<Vec<RunTrace>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let malformed = |message: String| HarnessError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(malformed(format!(
            "header is `{}`, expected `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            TRACE_HEADER.join(",")
        )));
    }
    let mut traces: Vec<RunTrace> = Vec::new();
    let mut index: HashMap<(String, String, String, usize), usize> = HashMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let at = |what: &str| format!("row {}: bad {what}", line + 2);
        let run: usize = rec[3].parse().map_err(|_| malformed(at("run")))?;
        let step: usize = rec[4].parse().map_err(|_| malformed(at("step")))?;
        let best: f64 = rec[5].parse().map_err(|_| malformed(at("best_value")))?;
        let regret: f64 = rec[6].parse().map_err(|_| malformed(at("simple_regret")))?;
        let key = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), run);
        let slot = match index.get(&key) {
            Some(&i) => i,
            None => {
                index.insert(key.clone(), traces.len());
                traces.push(RunTrace {
                    function: key.0,
                    preset: key.1,
                    strategy: key.2,
                    run,
                    seed: run as u64,
                    best_values: Vec::new(),
                    regrets: Vec::new(),
                });
                traces.len() - 1
            }
        };
        let t = &mut traces[slot];
        if step != t.best_values.len() + 1 {
            return Err(malformed(format!(
                "row {}: step {step} out of order for {} {} {} run {run}",
                line + 2,
                t.function,
                t.preset,
                t.strategy
            )));
        }
        t.best_values.push(best);
        t.regrets.push(regret);
    }
    Ok(traces)
}
