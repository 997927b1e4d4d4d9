use herald::filter::{accepted_moments, success_probability, FilterSpec, OutcomeGaussian};
use herald::fock::{
    fock_cat, fock_coherent, fock_single_photon, heralded_gate_fock, FockQuadrature, FockState,
    Parity,
};
use herald::gate::{
    conventional_output, coverage_cutoff, deterministic_limit, heralded_output,
    heralded_output_with, target_state, GateConfig, OutcomeModel,
};
use herald::gaussian::{coherent, AncillaSpec, GaussianState};
use herald::montecarlo::{
    acceptance_rate, estimate_fidelity, simulate, simulate_filter, RunConfig,
};
use herald::units::db_to_r;
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{Engine, ExperimentConfig, FockInput, GateParams};
use crate::error::{at, Result};
use crate::output::{num, opt, Table};

/// Columns shared by every Gaussian-engine command, after its axis columns.
const TAIL: [&str; 10] = [
    "success_probability",
    "fidelity",
    "exact_success_probability",
    "exact_fidelity",
    "mc_accepted",
    "mc_total",
    "mc_success_probability",
    "mc_success_stderr",
    "mc_fidelity",
    "mc_fidelity_stderr",
];

fn header(axis: &[&'static str]) -> Vec<&'static str> {
    axis.iter().copied().chain(TAIL).collect()
}

fn outcome_dims(t_m: f64) -> usize {
    if t_m == 1.0 {
        1
    } else {
        2
    }
}

fn ancilla(p: &GateParams) -> herald::Result<AncillaSpec> {
    AncillaSpec::from_db(p.ancilla_db, p.ancilla_antisqueezing_db)
}

/// Gate for `p`; without a fixed cutoff the cutoff keeps `p.coverage` of the
/// filtered outcomes of `probe` inside.
fn build_gate(p: &GateParams, probe: &GaussianState) -> herald::Result<GateConfig> {
    let dims = outcome_dims(p.t_m);
    let base = GateConfig::from_db(p.target_db, ancilla(p)?, p.t_m, FilterSpec::identity(dims))?
        .with_efficiencies(p.eta_inloop, p.eta_verify)?;
    match p.alpha_c {
        Some(c) => base.with_filter(FilterSpec::new(p.g_f, c, dims)?),
        None => base.with_coverage_filter(p.g_f, probe, p.coverage),
    }
}

struct McPoint {
    accepted: u64,
    total: u64,
    rate: f64,
    rate_se: f64,
    fidelity: f64,
    fidelity_se: f64,
}

#[derive(Default)]
struct Point {
    law: Option<(f64, f64)>,
    exact: Option<(f64, f64)>,
    mc: Option<McPoint>,
}

impl Point {
    fn cells(&self) -> Vec<String> {
        let (p, f) = self.law.unzip();
        let (ep, ef) = self.exact.unzip();
        let mc = self.mc.as_ref();
        vec![
            opt(p),
            opt(f),
            opt(ep),
            opt(ef),
            mc.map(|m| m.accepted.to_string()).unwrap_or_default(),
            mc.map(|m| m.total.to_string()).unwrap_or_default(),
            opt(mc.map(|m| m.rate)),
            opt(mc.map(|m| m.rate_se)),
            opt(mc.map(|m| m.fidelity)),
            opt(mc.map(|m| m.fidelity_se)),
        ]
    }
}

fn evaluate(
    exp: &ExperimentConfig,
    engine: Engine,
    gate: &GateConfig,
    input: &GaussianState,
    seed: u64,
) -> herald::Result<Point> {
    let mut point = Point::default();
    if engine.analytic() {
        let law = heralded_output(gate, input)?;
        let exact = heralded_output_with(gate, input, OutcomeModel::ExactMoments)?;
        point.law = Some((law.success_probability, law.fidelity));
        point.exact = Some((exact.success_probability, exact.fidelity));
    }
    if engine.mc() {
        let mut run = RunConfig::new(
            gate.clone(),
            input.clone(),
            exp.montecarlo.trajectories,
            seed,
        )
        .with_shards(exp.shards);
        run.budget = exp.montecarlo.budget;
        let stats = simulate(&run)?;
        let rate = acceptance_rate(&stats);
        let (fidelity, fidelity_se) = estimate_fidelity(&stats, &target_state(input, gate.r_t)?)?;
        point.mc = Some(McPoint {
            accepted: stats.accepted,
            total: stats.total,
            rate: rate.rate,
            rate_se: rate.std_err,
            fidelity,
            fidelity_se,
        });
    }
    Ok(point)
}

fn input_state(exp: &ExperimentConfig) -> GaussianState {
    coherent(Complex64::new(exp.alpha_re, exp.alpha_im))
}

fn grid(exp: &ExperimentConfig) -> &[f64] {
    exp.sweep.as_ref().map(|s| s.grid.as_slice()).unwrap_or(&[])
}

fn point_seed(exp: &ExperimentConfig, k: usize) -> u64 {
    exp.seed.wrapping_add(k as u64)
}

pub fn tradeoff(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    let input = input_state(exp);
    let mut table = Table::new(header(&["target_db", "g_f", "alpha_c"]));
    let mut curves = Vec::new();
    let mut k = 0;
    for &target in &exp.gate.targets_db {
        let mut best: Option<(f64, f64, f64)> = None;
        let mut first = None;
        for &g in grid(exp) {
            let p = GateParams {
                target_db: target,
                g_f: g,
                ..exp.gate.clone()
            };
            let ctx = format!("target {target} dB, g_f {g}");
            let gate = build_gate(&p, &input).map_err(at(&ctx))?;
            let pt =
                evaluate(exp, exp.engine, &gate, &input, point_seed(exp, k)).map_err(at(&ctx))?;
            k += 1;
            let f = pt.law.map(|x| x.1).or(pt.mc.as_ref().map(|m| m.fidelity));
            if let Some(f) = f {
                first.get_or_insert(f);
                if best.is_none_or(|b| f > b.1) {
                    best = Some((
                        g,
                        f,
                        pt.law
                            .map(|x| x.0)
                            .or(pt.mc.as_ref().map(|m| m.rate))
                            .unwrap_or(f64::NAN),
                    ));
                }
            }
            let mut row = vec![num(target), num(g), num(gate.filter.alpha_c)];
            row.extend(pt.cells());
            table.push(row);
        }
        let ideal = ancilla(&exp.gate)
            .and_then(|a| deterministic_limit(a, db_to_r(target), exp.gate.t_m))
            .map_err(at(format!("deterministic limit at {target} dB")))?;
        curves.push(json!({
            "target_db": target,
            "deterministic_limit": ideal,
            "first_point_fidelity": first,
            "best": best.map(|(g, f, p)| json!({"g_f": g, "fidelity": f, "success_probability": p})),
        }));
    }
    Ok((table, json!({ "curves": curves })))
}

/// One-axis sweep of a gate parameter; `set` writes the axis value into the parameters.
fn sweep_gate(
    exp: &ExperimentConfig,
    axis: &'static str,
    set: impl Fn(&mut GateParams, f64),
) -> Result<(Table, Value)> {
    let input = input_state(exp);
    // g_f gets its own column unless it is the axis
    let lead: &[&str] = if axis == "g_f" {
        &[axis]
    } else {
        &[axis, "g_f"]
    };
    let mut table = Table::new(header(
        &[lead, &["alpha_c", "conventional_fidelity"]].concat(),
    ));
    for (k, &x) in grid(exp).iter().enumerate() {
        let mut p = exp.gate.clone();
        set(&mut p, x);
        let ctx = format!("{axis} = {x}");
        let gate = build_gate(&p, &input).map_err(at(&ctx))?;
        let det = build_gate(
            &GateParams {
                g_f: 1.0,
                ..p.clone()
            },
            &input,
        )
        .and_then(|d| conventional_output(&d, &input))
        .map_err(at(&ctx))?
        .fidelity;
        let pt = evaluate(exp, exp.engine, &gate, &input, point_seed(exp, k)).map_err(at(&ctx))?;
        let mut row = vec![num(x)];
        if axis != "g_f" {
            row.push(num(p.g_f));
        }
        row.extend([num(gate.filter.alpha_c), num(det)]);
        row.extend(pt.cells());
        table.push(row);
    }
    let summary = json!({ "axis": axis, "points": table.rows.len() });
    Ok((table, summary))
}

pub fn sweep_target(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    sweep_gate(exp, "target_db", |p, x| p.target_db = x)
}

pub fn sweep_gain(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    sweep_gate(exp, "g_f", |p, x| p.g_f = x)
}

/// The anti-squeezing excess over the squeezing is kept fixed along the sweep.
pub fn sweep_ancilla(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    let excess = exp.gate.ancilla_antisqueezing_db - exp.gate.ancilla_db;
    sweep_gate(exp, "ancilla_db", move |p, x| {
        p.ancilla_db = x;
        p.ancilla_antisqueezing_db = x + excess;
    })
}

/// Probe states: input magnitude and target squeezing, labelled A to E.
pub const PROBES: [(&str, f64, f64); 5] = [
    ("A", 0.70, 2.30),
    ("B", 1.00, 4.81),
    ("C", 1.31, 5.84),
    ("D", 1.62, 8.85),
    ("E", 1.92, 10.16),
];

pub fn phase_scan(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    let phases = grid(exp);
    let mut table = Table::new(header(&[
        "probe",
        "target_db",
        "alpha_re",
        "alpha_im",
        "phase",
        "alpha_c",
    ]));
    let mut spreads = Vec::new();
    let mut k = 0;
    for &(label, magnitude, target) in &PROBES {
        let ctx = format!("probe {label}");
        let p = GateParams {
            target_db: target,
            ..exp.gate.clone()
        };
        let mut gate = build_gate(
            &GateParams {
                alpha_c: Some(1.0),
                ..p.clone()
            },
            &coherent(Complex64::new(0.0, 0.0)),
        )
        .map_err(at(&ctx))?;
        gate.filter.alpha_c = match p.alpha_c {
            Some(c) => c,
            // one cutoff for the whole scan: the largest any probe needs
            None if p.g_f > 1.0 => {
                let mut c: f64 = 0.0;
                for &(_, m, _) in &PROBES {
                    for &phi in phases {
                        let probe = coherent(Complex64::from_polar(m, phi));
                        c = c.max(
                            coverage_cutoff(&gate, &probe, p.g_f, p.coverage).map_err(at(&ctx))?,
                        );
                    }
                }
                c
            }
            None => 1.0,
        };
        let mut values = Vec::new();
        for &phi in phases {
            let a = Complex64::from_polar(magnitude, phi);
            let input = coherent(a);
            let pt = evaluate(exp, exp.engine, &gate, &input, point_seed(exp, k))
                .map_err(at(format!("probe {label}, phase {phi}")))?;
            k += 1;
            if let Some((_, f)) = pt.law {
                values.push(f);
            }
            let mut row = vec![
                label.to_string(),
                num(target),
                num(a.re),
                num(a.im),
                num(phi),
                num(gate.filter.alpha_c),
            ];
            row.extend(pt.cells());
            table.push(row);
        }
        let spread = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        spreads.push(json!({
            "probe": label,
            "target_db": target,
            "fidelity_spread": if values.is_empty() { None } else { Some(spread) },
            "phase_invariant": if values.is_empty() { None } else { Some(spread < 1e-9) },
        }));
    }
    Ok((table, json!({ "probes": spreads })))
}

pub fn run_mc(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    let input = input_state(exp);
    let gate = build_gate(&exp.gate, &input).map_err(at("gate setup"))?;
    // the analytic reference is always computed alongside
    let pt = evaluate(exp, Engine::Both, &gate, &input, exp.seed).map_err(at("run"))?;
    let mc = pt.mc.as_ref().expect("Monte Carlo requested");
    let (ep, ef) = pt.exact.expect("analytic requested");
    let summary = json!({
        "z_success_probability": (mc.rate - ep) / mc.rate_se,
        "z_fidelity": (mc.fidelity - ef) / mc.fidelity_se,
        "budget_exhausted": mc.accepted < exp.montecarlo.trajectories,
    });
    let mut table = Table::new(header(&["g_f", "alpha_c", "t_s"]));
    let mut row = vec![
        num(gate.filter.g_f),
        num(gate.filter.alpha_c),
        num(gate.t_s),
    ];
    row.extend(pt.cells());
    table.push(row);
    Ok((table, summary))
}

fn fock_input(exp: &ExperimentConfig) -> herald::Result<FockState> {
    let a = Complex64::new(exp.alpha_re, exp.alpha_im);
    let dim = exp.fock.dim;
    match exp.fock.state {
        FockInput::Photon => fock_single_photon(dim),
        FockInput::Coherent => fock_coherent(a, dim),
        FockInput::CatEven => fock_cat(a, Parity::Even, dim),
        FockInput::CatOdd => fock_cat(a, Parity::Odd, dim),
    }
}

pub fn fock_demo(exp: &ExperimentConfig) -> Result<(Table, Value)> {
    let state = fock_input(exp).map_err(at("input state"))?;
    let probe = input_state(exp);
    let quad = FockQuadrature {
        radial: exp.fock.radial_nodes,
        angular: exp.fock.angular_nodes,
    };
    let mut table = Table::new(vec![
        "g_f",
        "alpha_c",
        "success_probability",
        "fidelity",
        "truncation_tail",
        "gaussian_fidelity",
    ]);
    let mut fids = Vec::new();
    for &g in grid(exp) {
        let ctx = format!("g_f {g}");
        let gate = build_gate(
            &GateParams {
                g_f: g,
                ..exp.gate.clone()
            },
            &probe,
        )
        .map_err(at(&ctx))?;
        let res = heralded_gate_fock(&gate, &state, quad).map_err(at(&ctx))?;
        let gaussian = match exp.fock.state {
            FockInput::Coherent => Some(
                heralded_output_with(&gate, &probe, OutcomeModel::ExactMoments)
                    .map_err(at(&ctx))?
                    .fidelity,
            ),
            _ => None,
        };
        fids.push(res.fidelity);
        table.push(vec![
            num(g),
            num(gate.filter.alpha_c),
            num(res.success_probability),
            num(res.fidelity),
            num(res.truncation_tail),
            opt(gaussian),
        ]);
    }
    Ok((
        table,
        json!({ "state": exp.fock.state, "dim": exp.fock.dim, "fidelities": fids }),
    ))
}

struct Check {
    name: String,
    value: f64,
    reference: f64,
    stderr: Option<f64>,
    pass: bool,
}

impl Check {
    fn z(name: String, value: f64, reference: f64, stderr: f64) -> Self {
        let pass = ((value - reference) / stderr).abs() < 3.0;
        Check {
            name,
            value,
            reference,
            stderr: Some(stderr),
            pass,
        }
    }
}

/// Monte Carlo against the analytic engines, each check at 3σ.
pub fn selftest(exp: &ExperimentConfig) -> Result<(Table, Value, usize)> {
    let mut checks = Vec::new();
    let vac = coherent(Complex64::new(0.0, 0.0));

    for t_m in [1.0, 0.5] {
        let p = GateParams {
            t_m,
            g_f: 1.0,
            alpha_c: Some(3.0),
            ..exp.gate.clone()
        };
        let gate = build_gate(&p, &vac).map_err(at("reduction setup"))?;
        let input = coherent(Complex64::new(0.4, -0.7));
        let a = heralded_output(&gate, &input).map_err(at("reduction"))?;
        let b = conventional_output(&gate, &input).map_err(at("reduction"))?;
        let diff = (a.output.cov() - b.output.cov())
            .amax()
            .max((a.output.mean() - b.output.mean()).amax());
        checks.push(Check {
            name: format!("heralded gate at g_f = 1 equals the deterministic gate (t_m {t_m})"),
            value: diff,
            reference: 0.0,
            stderr: None,
            pass: diff < 1e-10,
        });
    }

    let cases = [(1.0, 1.0, 0.9), (1.0, 1.5, 0.9), (0.5, 2.0, 0.9)];
    for (k, &(t_m, g, coverage)) in cases.iter().enumerate() {
        let p = GateParams {
            t_m,
            g_f: g,
            alpha_c: None,
            coverage,
            ..exp.gate.clone()
        };
        let input = coherent(Complex64::new(0.5, 0.3));
        let ctx = format!("selftest gate t_m {t_m}, g_f {g}");
        let gate = build_gate(&p, &input).map_err(at(&ctx))?;
        let exact =
            heralded_output_with(&gate, &input, OutcomeModel::ExactMoments).map_err(at(&ctx))?;
        let run = RunConfig::new(
            gate,
            input.clone(),
            200_000,
            exp.seed.wrapping_add(k as u64),
        )
        .with_shards(exp.shards);
        let stats = simulate(&run).map_err(at(&ctx))?;
        let (f, se) = estimate_fidelity(&stats, &exact.target).map_err(at(&ctx))?;
        checks.push(Check::z(
            format!("gate fidelity, t_m {t_m}, g_f {g}"),
            f,
            exact.fidelity,
            se,
        ));
        if g > 1.0 {
            let rate = acceptance_rate(&stats);
            checks.push(Check::z(
                format!("gate success probability, t_m {t_m}, g_f {g}"),
                rate.rate,
                exact.success_probability,
                rate.std_err,
            ));
        }
    }

    for (k, &(g, alpha_c)) in [(3.0, 2.0), (8.0, 1.5)].iter().enumerate() {
        let ctx = format!("selftest filter g_f {g}");
        let spec = FilterSpec::new(g, alpha_c, 2).map_err(at(&ctx))?;
        let outcome = OutcomeGaussian::isotropic(&[0.5, 0.0], 0.5).map_err(at(&ctx))?;
        let p = success_probability(&spec, &[0.5, 0.0], 0.5).map_err(at(&ctx))?;
        let acc = accepted_moments(&spec, &outcome).map_err(at(&ctx))?;
        let mc = simulate_filter(
            &spec,
            &outcome,
            2_000_000,
            exp.seed.wrapping_add(100 + k as u64),
            exp.shards,
            false,
        )
        .map_err(at(&ctx))?;
        let n = mc.total as f64;
        checks.push(Check::z(
            format!("filter success probability, g_f {g}"),
            mc.accepted as f64 / n,
            p,
            (p * (1.0 - p) / n).sqrt(),
        ));
        checks.push(Check::z(
            format!("filter accepted mean, g_f {g}"),
            mc.moments.mean[0],
            acc.mean[0],
            mc.moments.mean_se[0],
        ));
    }

    let mut table = Table::new(vec!["check", "value", "reference", "stderr", "z", "pass"]);
    for c in &checks {
        let z = c.stderr.map(|s| (c.value - c.reference) / s);
        println!(
            "{} {}: {:.6e} vs {:.6e}{}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.reference,
            z.map(|z| format!(" (z = {z:.2})")).unwrap_or_default()
        );
        table.push(vec![
            c.name.clone(),
            num(c.value),
            num(c.reference),
            opt(c.stderr),
            opt(z),
            c.pass.to_string(),
        ]);
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    Ok((
        table,
        json!({ "checks": checks.len(), "failed": failed }),
        failed,
    ))
}
