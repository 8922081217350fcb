use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use kflow::harness::config::SuiteConfig;
use kflow::harness::experiments::{self, run_in_dir};
use kflow::harness::output::OutputDir;
use kflow::harness::suite::{apply_seed, run_suite, Verdict};

/// Numerical laboratory for the stability of Kolmogorov flow.
#[derive(Debug, Parser)]
#[command(name = "kflow", version)]
struct Cli {
    /// Suite configuration (TOML). Sections that are absent take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "kflow-out")]
    out_dir: PathBuf,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized perturbations; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sequence inequalities and coercive-matrix checks.
    Coercivity,
    /// Linearized Euler evolution and decay-rate fits.
    LinearEuler,
    /// Rayleigh and Navier-Stokes resolvent constant sweeps.
    Resolvent,
    /// Quasilinear approximate solution and its error ledger.
    Quasilinear,
    /// Direct numerical simulation, plus the threshold scan when configured.
    Dns,
    /// Run the configured experiments and acceptance criteria into one report.
    Report,
}

fn load(cli: &Cli) -> Result<SuiteConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SuiteConfig::load(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(seed) = cli.seed {
        apply_seed(&mut cfg, seed);
    }
    Ok(cfg)
}

fn single<C: Serialize>(
    name: &str,
    cfg: &C,
    seed: u64,
    dir: &Path,
    body: impl FnOnce(&C, &mut OutputDir) -> kflow::Result<serde_json::Value>,
) -> Result<ExitCode> {
    let (summary, _) = run_in_dir(name, cfg, seed, dir, |o| body(cfg, o)).with_context(|| format!("{name} failed"))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        kflow::par::set_threads(n)?;
    }
    let cfg = load(&cli)?;
    let dir = cli.out_dir.as_path();
    let seed = cfg.seed;
    match cli.command {
        Command::Coercivity => single("coercivity", &cfg.coercivity.unwrap_or_default(), seed, dir, experiments::coercivity),
        Command::LinearEuler => {
            single("linear-euler", &cfg.linear_euler.unwrap_or_default(), seed, dir, experiments::linear_euler)
        }
        Command::Resolvent => single("resolvent", &cfg.resolvent.unwrap_or_default(), seed, dir, experiments::resolvent),
        Command::Quasilinear => {
            single("quasilinear", &cfg.quasilinear.unwrap_or_default(), seed, dir, experiments::quasilinear)
        }
        Command::Dns => {
            let d = cfg.dns.unwrap_or_default();
            let s = d.sim.seed;
            single("dns", &d, s, dir, experiments::dns)
        }
        Command::Report => {
            let report = run_suite(&cfg, dir)?;
            for c in &report.criteria {
                println!("{}", c.line());
            }
            println!("suite: {:?}, report at {}", report.status, dir.join("report.json").display());
            match (report.status, report.failure_message()) {
                (Verdict::Fail, Some(msg)) => {
                    eprintln!("error: {msg}");
                    Ok(ExitCode::FAILURE)
                }
                _ => Ok(ExitCode::SUCCESS),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
