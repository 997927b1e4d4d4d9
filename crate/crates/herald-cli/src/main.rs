//! `herald`: parameter sweeps and engine cross-checks for the heralded
//! squeezing gate, written as CSV tables with JSON summaries.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Engine, Overrides};
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "herald",
    version,
    about = "Heralded squeezing gate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo shards; results depend on (seed, shards) only.
    #[arg(long, global = true)]
    shards: Option<usize>,
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
    /// Sweep grid as start:stop:steps, replacing the config's.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fidelity against success probability over filter strengths, one curve per target.
    Tradeoff,
    /// Heralded and deterministic fidelity across target squeezing.
    SweepTarget,
    /// Fidelity across filter strength at one target.
    SweepGain,
    /// Fidelity across ancilla squeezing.
    SweepAncilla,
    /// Fidelity of the five probe inputs across input phase.
    PhaseScan,
    /// One Monte Carlo run against the analytic engine.
    RunMc,
    /// Number-basis gate on a non-Gaussian input across filter strengths.
    FockDemo,
    /// Monte Carlo versus analytic checks at 3 standard errors.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Tradeoff => "tradeoff",
            Command::SweepTarget => "sweep-target",
            Command::SweepGain => "sweep-gain",
            Command::SweepAncilla => "sweep-ancilla",
            Command::PhaseScan => "phase-scan",
            Command::RunMc => "run-mc",
            Command::FockDemo => "fock-demo",
            Command::Selftest => "selftest",
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("HERALD_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("HERALD_THREADS = {v:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(std::io::Error::other)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let over = Overrides {
        out: cli.out,
        seed: cli.seed,
        shards: cli.shards,
        engine: cli.engine,
        grid: cli.grid,
    };
    let cfg = config::resolve(cli.command.name(), cli.config.as_deref(), &over)?;
    let (table, summary, failed) = match cli.command {
        Command::Tradeoff => with_ok(commands::tradeoff(&cfg)?),
        Command::SweepTarget => with_ok(commands::sweep_target(&cfg)?),
        Command::SweepGain => with_ok(commands::sweep_gain(&cfg)?),
        Command::SweepAncilla => with_ok(commands::sweep_ancilla(&cfg)?),
        Command::PhaseScan => with_ok(commands::phase_scan(&cfg)?),
        Command::RunMc => with_ok(commands::run_mc(&cfg)?),
        Command::FockDemo => with_ok(commands::fock_demo(&cfg)?),
        Command::Selftest => commands::selftest(&cfg)?,
    };
    let (csv, json) = output::emit(&cfg, &table, summary)?;
    println!(
        "wrote {} ({} rows) and {}",
        csv.display(),
        table.rows.len(),
        json.display()
    );
    if failed > 0 {
        return Err(CliError::SelfTest(failed));
    }
    Ok(())
}

fn with_ok(
    (table, summary): (output::Table, serde_json::Value),
) -> (output::Table, serde_json::Value, usize) {
    (table, summary, 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
