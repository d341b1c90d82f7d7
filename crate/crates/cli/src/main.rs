use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use scalebench::bridge::{BridgeConfig, Server};
use scalebench::config::{ConfigError, ExperimentConfig};
use scalebench::exec::Executor;
use scalebench::pipeline::{self, PipelineError, Traces};

/// Benchmark harness for RL-based horizontal autoscaling.
#[derive(Debug, Parser)]
#[command(name = "scalebench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every algorithm x reward x seed in the config.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Validate trained agents over the evaluation split and score them.
    Validate {
        run_dir: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Pick an agent per reward function, or ask for refinement.
    Select {
        run_dir: PathBuf,
        /// Significance level; defaults to the run's config.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Learning-curve plots and score tables.
    Report { run_dir: PathBuf },
    /// Serve the environment over TCP (newline-delimited JSON).
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Address to listen on.
        #[arg(long = "serve", value_name = "ADDR:PORT", default_value = "127.0.0.1:5555")]
        addr: String,
    },
    /// Write the generated workload trace as CSV.
    GenTrace {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Part::Full)]
        split: Part,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in config: `desk` or `full`.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => ExperimentConfig::preset(name),
            (None, None) => unreachable!("clap requires one of --config/--preset"),
        }
    }
}

#[derive(Debug, Args)]
struct ExecArgs {
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run agents one after another on the calling thread.
    #[arg(long, conflicts_with = "jobs")]
    sequential: bool,
}

impl ExecArgs {
    fn executor(&self) -> Executor {
        if self.sequential {
            Executor::sequential()
        } else {
            Executor::parallel(self.jobs)
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Part {
    Full,
    Train,
    Eval,
}

/// Exit code 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(e.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_) | PipelineError::NotARunDir(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, exec } => {
            let cfg = config.load()?;
            let summary = pipeline::train(&cfg, &exec.executor())?;
            println!("trained {} agents", summary.runs.len());
            println!("{}", summary.run_dir.display());
        }
        Command::Validate { run_dir, exec } => {
            let summary = pipeline::validate(&run_dir, &exec.executor())?;
            print!("{}", std::fs::read_to_string(run_dir.join("scores.txt")).unwrap_or_default());
            for f in &summary.failures {
                eprintln!("warning: {f}");
            }
        }
        Command::Select { run_dir, alpha } => {
            pipeline::select(&run_dir, alpha)?;
            print!("{}", std::fs::read_to_string(run_dir.join("selection.txt")).unwrap_or_default());
        }
        Command::Report { run_dir } => {
            let summary = pipeline::report(&run_dir)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for p in &summary.plots {
                println!("{}", p.display());
            }
            println!("{}", run_dir.join("summary.txt").display());
        }
        Command::Serve { config, addr } => {
            let cfg = config.load()?;
            let bridge = BridgeConfig::from_experiment(&cfg)?;
            let server = Server::bind(&addr, bridge).with_context(|| format!("cannot listen on {addr}"))?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::GenTrace { config, split, output } => {
            let cfg = config.load()?;
            let traces = Traces::generate(&cfg)?;
            let trace = match split {
                Part::Full => &traces.full,
                Part::Train => &traces.train,
                Part::Eval => &traces.eval,
            };
            match output {
                Some(path) => pipeline::write_trace(&path, trace, &cfg)?,
                None => write_stdout(trace, &cfg)?,
            }
        }
    }
    Ok(())
}

fn write_stdout(trace: &scalebench::workload::WorkloadTrace, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "# config_hash={}", cfg.hash())?;
    trace.write_csv(&mut out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
