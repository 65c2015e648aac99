//! Command-line front end for the experiment drivers.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a budget is
//! too small for the requested plan, 1 for anything else.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use shotgrad::allocators::{
    blge_allocate, error_budget, psr_allocate, slge_allocate, ulge_allocate, ErrorBudget, GeneratorDecomposition,
    MeasurementPlan, Method, StatModel,
};
use shotgrad::experiments::{
    run_grad_bench, run_optimize, run_prior_study, run_theory_curves, summarize_bench, write_csv, write_theory_csv,
    GradBenchConfig, OptimizeConfig, PriorStudyConfig, TheoryConfig, TraceRow,
};
use shotgrad::priors::PriorModel;
use shotgrad::Error;

#[derive(Parser)]
#[command(
    name = "shotgrad",
    version,
    about = "Measurement allocation for circuit gradient estimation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic error curves for a prior over a budget grid.
    Theory,
    /// Empirical Fourier moments at the bulk layer versus depth.
    Priors,
    /// Measurement plan and predicted error for one prior and budget.
    Alloc,
    /// Gradient quality over random graphs, angles, methods and budgets.
    GradBench {
        /// Use the full-size setting instead of the desk-scale default.
        #[arg(long)]
        full_scale: bool,
    },
    /// Gradient descent with line search from the annealing ramp.
    Optimize {
        /// Use a full-size setting instead of the desk-scale default.
        #[arg(long, value_enum)]
        full_scale: Option<Scale>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Shallow,
    Deep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocConfig {
    prior: PriorModel,
    m: u64,
    method: Method,
    /// Generator coefficients for PSR; all ones over the prior's width if omitted.
    #[serde(default)]
    psr_coefficients: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct AllocOutput {
    plan: MeasurementPlan,
    predicted: ErrorBudget,
}

/// Configuration problems map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => load_required(p),
    }
}

fn load_required<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn alloc(cfg: &AllocConfig) -> shotgrad::Result<AllocOutput> {
    let plan = match cfg.method {
        Method::Blge => blge_allocate(&cfg.prior, cfg.m)?,
        Method::Ulge => ulge_allocate(cfg.prior.spectrum(), cfg.m)?,
        Method::Slge => slge_allocate(&cfg.prior, cfg.m)?,
        Method::Psr => {
            let d = match &cfg.psr_coefficients {
                Some(c) => GeneratorDecomposition::new(c.clone())?,
                None => GeneratorDecomposition::uniform(cfg.prior.spectrum().nu() as usize)?,
            };
            psr_allocate(&d, cfg.m)?
        }
    };
    let predicted = error_budget(&plan, &cfg.prior, cfg.m, StatModel::Actual)?;
    Ok(AllocOutput { plan, predicted })
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(t) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = c.config.as_deref();
    let out = c.out.as_deref();
    match cli.command {
        Command::Theory => {
            let cfg: TheoryConfig = load(config)?;
            let rows = run_theory_curves(&cfg)?;
            let mut w = output(out)?;
            write_theory_csv(&mut w, cfg.prior.spectrum(), &rows)?;
            w.flush()?;
        }
        Command::Priors => {
            let mut cfg: PriorStudyConfig = load(config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let study = run_prior_study(&cfg)?;
            match out {
                Some(p) => {
                    write_csv(File::create(p)?, &study.moments)?;
                    write_csv(File::create(sibling(p, "_rms"))?, &study.rms)?;
                }
                None => {
                    let mut w = output(None)?;
                    write_csv(&mut w, &study.moments)?;
                    writeln!(w)?;
                    write_csv(&mut w, &study.rms)?;
                    w.flush()?;
                }
            }
        }
        Command::Alloc => {
            let path = config.ok_or_else(|| ConfigError("alloc requires --config".into()))?;
            let cfg: AllocConfig = load_required(path)?;
            let result = alloc(&cfg)?;
            let mut w = output(out)?;
            serde_json::to_writer_pretty(&mut w, &result)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::GradBench { full_scale } => {
            let mut cfg: GradBenchConfig = match (config, full_scale) {
                (Some(p), _) => load_required(p)?,
                (None, true) => GradBenchConfig::full_scale(),
                (None, false) => GradBenchConfig::default(),
            };
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let records = run_grad_bench(&cfg)?;
            let mut w = output(out)?;
            write_csv(&mut w, &records)?;
            w.flush()?;
            if out.is_some() {
                write_csv(io::stdout(), &summarize_bench(&records))?;
            }
        }
        Command::Optimize { full_scale } => {
            let mut cfg: OptimizeConfig = match (config, full_scale) {
                (Some(p), _) => load_required(p)?,
                (None, Some(Scale::Shallow)) => OptimizeConfig::full_scale_shallow(),
                (None, Some(Scale::Deep)) => OptimizeConfig::full_scale_deep(),
                (None, None) => OptimizeConfig::default(),
            };
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let traces = run_optimize(&cfg)?;
            let mut w = output(out)?;
            write_csv(&mut w, &TraceRow::from_traces(&traces))?;
            w.flush()?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::BudgetTooSmall { .. }) => 3,
        Some(Error::InvalidInput(_) | Error::Json(_)) => 2,
        _ => 1,
    }
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
