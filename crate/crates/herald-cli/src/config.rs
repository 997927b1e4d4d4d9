//! Experiment configuration: a flat TOML file with fixed sections, merged
//! with per-command defaults and command-line overrides.
//!
//! ```toml
//! [experiment]
//! name = "tradeoff-6db"
//! engine = "analytic"      # analytic | mc | both | fock
//! seed = 7
//! shards = 4
//!
//! [gate]
//! targets_db = [2.0, 4.0, 6.0]
//! ancilla_db = 6.0
//! t_m = 1.0
//! coverage = 0.98
//!
//! [sweep]
//! parameter = "g_f"
//! grid = "1:100:41"
//! scale = "log"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    #[serde(alias = "montecarlo")]
    #[value(alias = "montecarlo")]
    Mc,
    Both,
    Fock,
}

impl Engine {
    pub fn analytic(self) -> bool {
        matches!(self, Engine::Analytic | Engine::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Engine::Mc | Engine::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FockInput {
    Photon,
    Coherent,
    CatEven,
    CatOdd,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    gate: RawGate,
    #[serde(default)]
    input: RawInput,
    sweep: Option<RawSweep>,
    #[serde(default)]
    montecarlo: RawMonteCarlo,
    #[serde(default)]
    fock: RawFock,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    engine: Option<Engine>,
    seed: Option<u64>,
    shards: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    target_db: Option<f64>,
    targets_db: Option<Vec<f64>>,
    ancilla_db: Option<f64>,
    ancilla_antisqueezing_db: Option<f64>,
    t_m: Option<f64>,
    g_f: Option<f64>,
    alpha_c: Option<f64>,
    coverage: Option<f64>,
    eta_inloop: Option<f64>,
    eta_verify: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    alpha_re: Option<f64>,
    alpha_im: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Option<String>,
    grid: Option<String>,
    scale: Option<Scale>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonteCarlo {
    trajectories: Option<u64>,
    budget: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFock {
    dim: Option<usize>,
    state: Option<FockInput>,
    radial_nodes: Option<usize>,
    angular_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateParams {
    pub target_db: f64,
    pub targets_db: Vec<f64>,
    pub ancilla_db: f64,
    pub ancilla_antisqueezing_db: f64,
    pub t_m: f64,
    pub g_f: f64,
    /// Fixed cutoff; `None` picks it per point from `coverage`.
    pub alpha_c: Option<f64>,
    pub coverage: f64,
    pub eta_inloop: f64,
    pub eta_verify: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub parameter: String,
    pub grid_spec: String,
    pub scale: Scale,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloParams {
    /// Accepted trajectories per grid point.
    pub trajectories: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockParams {
    pub dim: usize,
    pub state: FockInput,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

/// Fully resolved configuration, embedded verbatim in the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub command: String,
    pub engine: Engine,
    pub seed: u64,
    pub shards: usize,
    pub out: PathBuf,
    pub gate: GateParams,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub sweep: Option<Sweep>,
    pub montecarlo: MonteCarloParams,
    pub fock: FockParams,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub shards: Option<usize>,
    pub engine: Option<Engine>,
    pub grid: Option<String>,
}

/// What a command sweeps over by default, and the defaults it changes.
struct CommandDefaults {
    axis: Option<(&'static str, &'static str, Scale)>,
    targets_db: &'static [f64],
    t_m: f64,
    g_f: f64,
    alpha_c: Option<f64>,
    coverage: f64,
    alpha: (f64, f64),
}

fn defaults(command: &str) -> CommandDefaults {
    let base = CommandDefaults {
        axis: None,
        targets_db: &[],
        t_m: 1.0,
        g_f: 1.0,
        alpha_c: None,
        coverage: 0.98,
        alpha: (0.0, 0.0),
    };
    match command {
        "tradeoff" => CommandDefaults {
            axis: Some(("g_f", "1:100:41", Scale::Log)),
            targets_db: &[2.0, 4.0, 6.0],
            ..base
        },
        "sweep-target" => CommandDefaults {
            axis: Some(("target_db", "0.5:10.5:21", Scale::Linear)),
            t_m: 0.5,
            g_f: 3.38,
            ..base
        },
        "sweep-gain" => CommandDefaults {
            axis: Some(("g_f", "1:10.5:20", Scale::Linear)),
            ..base
        },
        "sweep-ancilla" => CommandDefaults {
            axis: Some(("ancilla_db", "2:12:11", Scale::Linear)),
            g_f: 3.38,
            ..base
        },
        "phase-scan" => CommandDefaults {
            axis: Some(("phase", "0:5.497787143782138:8", Scale::Linear)),
            t_m: 0.5,
            g_f: 3.38,
            coverage: 0.999,
            ..base
        },
        "run-mc" => CommandDefaults {
            g_f: 1.52,
            coverage: 0.99,
            alpha: (0.5, 0.3),
            ..base
        },
        "fock-demo" => CommandDefaults {
            axis: Some(("g_f", "1:20:5", Scale::Linear)),
            t_m: 0.5,
            alpha_c: Some(2.0),
            alpha: (0.5, 0.3),
            ..base
        },
        _ => base,
    }
}

/// Parses `start:stop:steps` into a grid.
pub fn parse_grid(spec: &str, scale: Scale) -> Result<Vec<f64>> {
    let bad = |why: &str| CliError::Config(format!("grid \"{spec}\": {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:steps"));
    }
    let start: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| bad("start is not a number"))?;
    let stop: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| bad("stop is not a number"))?;
    let steps: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| bad("steps is not a non-negative integer"))?;
    if steps == 0 {
        return Err(bad("grid is empty"));
    }
    if !start.is_finite() || !stop.is_finite() {
        return Err(bad("endpoints must be finite"));
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    if start == stop {
        return Err(bad("grid must be strictly monotone"));
    }
    if scale == Scale::Log && (start <= 0.0 || stop <= 0.0) {
        return Err(bad("log grid needs positive endpoints"));
    }
    let n = (steps - 1) as f64;
    let grid: Vec<f64> = (0..steps)
        .map(|k| {
            let s = k as f64 / n;
            match scale {
                Scale::Linear => start + s * (stop - start),
                Scale::Log => (start.ln() + s * (stop.ln() - start.ln())).exp(),
            }
        })
        .collect();
    let rising = stop > start;
    if grid
        .windows(2)
        .any(|w| (w[1] > w[0]) != rising || w[1] == w[0])
    {
        return Err(bad("grid must be strictly monotone"));
    }
    Ok(grid)
}

fn parse_file(path: &Path) -> Result<RawFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

pub fn resolve(command: &str, path: Option<&Path>, over: &Overrides) -> Result<ExperimentConfig> {
    let raw = match path {
        Some(p) => parse_file(p)?,
        None => RawFile::default(),
    };
    let d = defaults(command);
    let g = raw.gate;
    let ancilla_db = g.ancilla_db.unwrap_or(6.0);
    let target_db = g.target_db.unwrap_or(2.30);
    let gate = GateParams {
        target_db,
        targets_db: g.targets_db.unwrap_or_else(|| {
            if d.targets_db.is_empty() {
                vec![target_db]
            } else {
                d.targets_db.to_vec()
            }
        }),
        ancilla_db,
        ancilla_antisqueezing_db: g.ancilla_antisqueezing_db.unwrap_or(ancilla_db),
        t_m: g.t_m.unwrap_or(d.t_m),
        g_f: g.g_f.unwrap_or(d.g_f),
        alpha_c: g.alpha_c.or(d.alpha_c),
        coverage: g.coverage.unwrap_or(d.coverage),
        eta_inloop: g.eta_inloop.unwrap_or(1.0),
        eta_verify: g.eta_verify.unwrap_or(1.0),
    };
    if gate.targets_db.is_empty() {
        return Err(CliError::Config("gate.targets_db is empty".into()));
    }
    if !(gate.coverage > 0.0 && gate.coverage < 1.0) {
        return Err(CliError::Config(format!(
            "gate.coverage = {} outside (0,1)",
            gate.coverage
        )));
    }

    let sweep = match d.axis {
        None => {
            if raw.sweep.is_some() || over.grid.is_some() {
                return Err(CliError::Config(format!("{command} takes no sweep")));
            }
            None
        }
        Some((axis, default_grid, default_scale)) => {
            let s = raw.sweep.unwrap_or_default();
            if let Some(p) = &s.parameter {
                if p != axis {
                    return Err(CliError::Config(format!(
                        "{command} sweeps {axis}, not {p}"
                    )));
                }
            }
            let scale = s.scale.unwrap_or(default_scale);
            let grid_spec = over
                .grid
                .clone()
                .or(s.grid)
                .unwrap_or_else(|| default_grid.to_string());
            let grid = parse_grid(&grid_spec, scale)?;
            Some(Sweep {
                parameter: axis.to_string(),
                grid_spec,
                scale,
                grid,
            })
        }
    };

    let e = raw.experiment;
    let shards = over.shards.or(e.shards).unwrap_or(4);
    if shards == 0 {
        return Err(CliError::Config("shards must be >= 1".into()));
    }
    let engine = over.engine.or(e.engine).unwrap_or(Engine::Analytic);
    if engine == Engine::Fock && command != "fock-demo" {
        return Err(CliError::Config(format!(
            "the fock engine is only available to fock-demo, not {command}"
        )));
    }
    let montecarlo = MonteCarloParams {
        trajectories: raw.montecarlo.trajectories.unwrap_or(100_000),
        budget: raw
            .montecarlo
            .budget
            .unwrap_or(herald::montecarlo::DEFAULT_BUDGET),
    };
    if montecarlo.trajectories == 0 || montecarlo.budget == 0 {
        return Err(CliError::Config(
            "montecarlo.trajectories and montecarlo.budget must be >= 1".into(),
        ));
    }
    let fock = FockParams {
        dim: raw.fock.dim.unwrap_or(40),
        state: raw.fock.state.unwrap_or(FockInput::Photon),
        radial_nodes: raw.fock.radial_nodes.unwrap_or(64),
        angular_nodes: raw.fock.angular_nodes.unwrap_or(128),
    };
    Ok(ExperimentConfig {
        name: e.name.unwrap_or_else(|| command.to_string()),
        command: command.to_string(),
        engine,
        seed: over.seed.or(e.seed).unwrap_or(1),
        shards,
        out: over
            .out
            .clone()
            .or(e.out)
            .unwrap_or_else(|| PathBuf::from("results")),
        gate,
        alpha_re: raw.input.alpha_re.unwrap_or(d.alpha.0),
        alpha_im: raw.input.alpha_im.unwrap_or(d.alpha.1),
        sweep,
        montecarlo,
        fock,
    })
}
