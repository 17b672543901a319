use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pipebo_cli::config::ExperimentConfig;
use pipebo_cli::matrix::{self, TRACE_FILE};
use pipebo_cli::report;
use pipebo_cli::Result;
use pipebo_core::benchmarks::FunctionId;

#[derive(Parser)]
#[command(name = "pipebo", version, about = "Pipelined Bayesian optimization benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run matrix and write traces.csv and manifest.json.
    Run {
        /// JSON configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Steps-to-reach table against vanilla's median regret.
    Summarize {
        /// Directory holding traces.csv (or the CSV itself).
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 100)]
        reference_step: usize,
    },
    /// Superiority ratios of PipeBO over the no-update variant.
    CompareUpdate {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Built-in benchmark functions.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Print the supported function ids.
    List,
}

fn trace_file(path: PathBuf) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        let file = path.join(TRACE_FILE);
        (path, file)
    } else {
        let dir = path.parent().map(PathBuf::from).unwrap_or_default();
        (dir, path)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            runs,
            budget,
            workers,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::from_file(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = out {
                cfg.output_dir = v;
            }
            if let Some(v) = seed {
                cfg.base_seed = v;
            }
            if let Some(v) = runs {
                cfg.runs = v;
            }
            if let Some(v) = budget {
                cfg.budget_steps = v;
            }
            if let Some(v) = workers {
                cfg.workers = Some(v);
            }
            let resolved = cfg.resolve()?;
            let path = matrix::run_matrix(&resolved)?;
            println!("wrote {}", path.display());
        }
        Command::Summarize { traces, reference_step } => {
            let (dir, file) = trace_file(traces);
            let table = report::summarize(&matrix::read_traces(&file)?, reference_step)?;
            print!("{table}");
            report::write_text(&dir.join("summary.csv"), &table.to_csv())?;
        }
        Command::CompareUpdate { traces } => {
            let (dir, file) = trace_file(traces);
            let table = report::compare_update(&matrix::read_traces(&file)?)?;
            print!("{table}");
            let out = dir.join("superiority.csv");
            report::write_text(&out, &table.to_csv())?;
            println!("wrote {}", out.display());
        }
        Command::Bench {
            command: BenchCommand::List,
        } => {
            for id in FunctionId::ALL {
                println!("{id}\t{}", id.name());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
