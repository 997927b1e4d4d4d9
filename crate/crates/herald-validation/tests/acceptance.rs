//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line
//! with its measured values and runtime against the budget.

#[path = "../../herald/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::{probe_inputs, truncated_normal_fit};
use herald::filter::{filter_outcome, success_probability, FilterSpec, OutcomeGaussian};
use herald::fock::{fock_coherent, heralded_gate_fock, FockQuadrature};
use herald::gate::*;
use herald::gaussian::*;
use herald::montecarlo::{
    estimate_fidelity, rate_from_counts, simulate, simulate_filter, CountMode, RunConfig,
};
use herald::units::db_to_r;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims(t_m: f64) -> usize {
    if t_m == 1.0 {
        1
    } else {
        2
    }
}

fn report(id: u32, name: &str, pass: bool, detail: &str, start: Instant, budget: Duration) -> bool {
    let took = start.elapsed();
    let in_time = took <= budget;
    let ok = pass && in_time;
    shout(&format!(
        "{} [{id}] {name}: {detail} ({:.2} s, budget {} s{})",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    ));
    ok
}

// the harness swallows print! output of passing tests, so go to the stream itself
fn shout(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn criterion_01_equivalence_point() {
    let start = Instant::now();
    let anc = AncillaSpec::pure_db(10.5).unwrap();
    let cfg = GateConfig::from_db(2.30, anc, 1.0, FilterSpec::identity(1)).unwrap();
    let probe = vacuum(1).unwrap();
    let analytic = conventional_output(&cfg, &probe).unwrap().fidelity;
    let analytic_time = start.elapsed();

    let mc_start = Instant::now();
    let run = RunConfig::new(cfg, probe, 1_000_000, 1).with_mode(CountMode::Total);
    let stats = simulate(&run).unwrap();
    let target = target_state(&vacuum(1).unwrap(), db_to_r(2.30)).unwrap();
    let (f_mc, se) = estimate_fidelity(&stats, &target).unwrap();
    let mc_time = mc_start.elapsed();

    let band = |f: f64| (f - 0.985).abs() <= 0.005;
    let z = (f_mc - analytic) / se;
    let pass = band(analytic)
        && band(f_mc)
        && z.abs() < 3.0
        && analytic_time < secs(1)
        && mc_time < secs(60);
    let detail = format!(
        "analytic F = {analytic:.6} ({:.3} s), MC F = {f_mc:.6} ± {se:.1e} at 1e6 trajectories (z = {z:.2}, {:.1} s); band 0.985 ± 0.005",
        analytic_time.as_secs_f64(),
        mc_time.as_secs_f64()
    );
    assert!(report(
        1,
        "equivalence point",
        pass,
        &detail,
        start,
        secs(61)
    ));
}

fn random_input(rng: &mut ChaCha8Rng) -> GaussianState {
    let alpha = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let base = coherent(alpha);
    if rng.random_bool(0.5) {
        return base;
    }
    let n = rng.random_range(1.0..1.6);
    let warm = GaussianState::new(base.mean().clone(), DMatrix::identity(2, 2) * n).unwrap();
    apply(
        &warm,
        &squeezer(
            1,
            0,
            rng.random_range(-0.3..0.3),
            rng.random_range(0.0..3.0),
        )
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn criterion_02_reduction_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0002);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let v_sq = rng.random_range(0.05..0.9);
        let anc = AncillaSpec::new(v_sq, rng.random_range(1.0..3.0) / v_sq, 0.0).unwrap();
        let t_m = if case % 2 == 0 {
            1.0
        } else {
            rng.random_range(0.2..0.9)
        };
        let filter = FilterSpec::new(1.0, rng.random_range(0.5..4.0), dims(t_m)).unwrap();
        let cfg = GateConfig::new(rng.random_range(0.0..1.2), anc, t_m, filter)
            .unwrap()
            .with_efficiencies(rng.random_range(0.5..=1.0), rng.random_range(0.5..=1.0))
            .unwrap();
        let input = random_input(&mut rng);
        let a = heralded_output(&cfg, &input).unwrap();
        let b = conventional_output(&cfg, &input).unwrap();
        let diff = (a.output.mean() - b.output.mean())
            .amax()
            .max((a.output.cov() - b.output.cov()).amax())
            .max((a.fidelity - b.fidelity).abs())
            .max((a.success_probability - 1.0).abs());
        worst = worst.max(diff);
    }
    let detail = format!("largest deviation over 100 configurations {worst:.2e} (tolerance 1e-10)");
    assert!(report(
        2,
        "reduction identity",
        worst < 1e-10,
        &detail,
        start,
        secs(10)
    ));
}

#[test]
fn criterion_03_filter_moment_law() {
    let start = Instant::now();
    let mean_in = 0.3;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, g) in [1.5, 3.0, 12.63].into_iter().enumerate() {
        let spec = FilterSpec::new(g, 2.0, 1).unwrap();
        let outcome = OutcomeGaussian::isotropic(&[mean_in], 0.5).unwrap();
        // a variance-1/2 kernel tilted by exp(λx²) has its mean and variance scaled by g
        let (want_mean, want_var) = (g * mean_in, g * 0.5);
        let law = filter_outcome(&spec, &outcome).unwrap();
        let law_ok =
            (law.mean[0] - want_mean).abs() < 1e-12 && (law.variance() - want_var).abs() < 1e-12;

        let mc = simulate_filter(&spec, &outcome, 10_000_000, 300 + k as u64, 4, true).unwrap();
        let inside: Vec<f64> = mc
            .samples
            .unwrap()
            .iter()
            .map(|s| s[0])
            .filter(|x| x.abs() < spec.alpha_c)
            .collect();
        let (m, m_se, v, v_se) = truncated_normal_fit(&inside, spec.alpha_c);
        let (zm, zv) = ((m - want_mean) / m_se, (v - want_var) / v_se);
        pass &= law_ok && zm.abs() < 3.0 && zv.abs() < 3.0;
        parts.push(format!(
            "g {g}: mean {m:.4} vs {want_mean:.4} (z {zm:.2}), variance {v:.4} vs {want_var:.4} (z {zv:.2}), {} samples inside",
            inside.len()
        ));
    }
    assert!(report(
        3,
        "filter moment law",
        pass,
        &parts.join("; "),
        start,
        secs(120)
    ));
}

#[test]
fn criterion_04_success_probability() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0004);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut smallest = 1.0f64;
    for case in 0..10 {
        let (spec, mean, v) = if case < 9 {
            let g = rng.random_range(1.2..10.0);
            let v = rng.random_range(0.3..1.0);
            let a0 = rng.random_range(0.0..2.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (
                FilterSpec::new(g, rng.random_range(0.5..3.0), 2).unwrap(),
                vec![a0 * phi.cos(), a0 * phi.sin()],
                v,
            )
        } else {
            // deep-filter case: raise the cutoff until the predicted rate falls to about 5e-5
            let (g, v, mean) = (8.0, 0.5, vec![0.4, 0.0]);
            let (mut lo, mut hi) = (0.5, 6.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if success_probability(&FilterSpec::new(g, mid, 2).unwrap(), &mean, v).unwrap()
                    > 5e-5
                {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (FilterSpec::new(g, hi, 2).unwrap(), mean, v)
        };
        let p = success_probability(&spec, &mean, v).unwrap();
        let outcome = OutcomeGaussian::isotropic(&mean, v).unwrap();
        let mc = simulate_filter(&spec, &outcome, 10_000_000, 400 + case as u64, 4, false).unwrap();
        let se = (p * (1.0 - p) / mc.total as f64).sqrt();
        let z = (rate_from_counts(mc.accepted, mc.total).rate - p) / se;
        pass &= z.abs() < 3.0;
        worst = worst.max(z.abs());
        smallest = smallest.min(p);
    }
    pass &= smallest <= 1e-4;
    let detail = format!("10 configurations at 1e7 trials, largest |z| = {worst:.2}, smallest predicted P_s = {smallest:.2e}");
    assert!(report(
        4,
        "success-probability formula",
        pass,
        &detail,
        start,
        secs(300)
    ));
}

fn tradeoff_sweep() -> (Vec<TradeoffPoint>, f64) {
    let anc = AncillaSpec::pure_db(6.0).unwrap();
    let grid: Vec<f64> = (0..41).map(|k| 10f64.powf(k as f64 * 0.05)).collect();
    let curve = tradeoff_curve(anc, db_to_r(2.0), 1.0, &grid, CutoffRule::Coverage(0.98)).unwrap();
    (curve, deterministic_limit(anc, db_to_r(2.0), 1.0).unwrap())
}

#[test]
fn criterion_05_near_unit_fidelity() {
    let start = Instant::now();
    let (curve, limit) = tradeoff_sweep();
    let best = curve
        .iter()
        .filter(|p| p.success_probability > 0.0)
        .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
        .unwrap();
    let first = curve
        .iter()
        .find(|p| p.fidelity >= 0.99 && p.success_probability > 0.0);
    let end = &curve[0];
    let pass = first.is_some()
        && (end.success_probability - 1.0).abs() < 1e-15
        && (end.fidelity - limit).abs() < 1e-12;
    let reached = first.map_or("never".to_string(), |p| {
        format!(
            "at g_f = {:.2} (P_s = {:.2e})",
            p.g_f, p.success_probability
        )
    });
    let detail = format!(
        "F >= 0.99 first reached {reached}; best F = {:.5} at g_f = {:.2} (P_s = {:.2e}); P_s = 1 endpoint F = {:.10} vs deterministic limit {limit:.10}",
        best.fidelity, best.g_f, best.success_probability, end.fidelity
    );
    assert!(report(
        5,
        "near-unit-fidelity regime",
        pass,
        &detail,
        start,
        secs(60)
    ));
}

#[test]
fn criterion_06_one_percent_claim() {
    let start = Instant::now();
    let (curve, _) = tradeoff_sweep();
    let f_conv = curve[0].fidelity;
    let f_max = curve.iter().map(|p| p.fidelity).fold(f64::MIN, f64::max);
    // fidelity at P_s = 1e-2, interpolated linearly in log P_s along the sweep
    let at = curve
        .windows(2)
        .find(|w| w[0].success_probability >= 1e-2 && w[1].success_probability <= 1e-2)
        .map(|w| {
            let (l0, l1) = (w[0].success_probability.ln(), w[1].success_probability.ln());
            let s = (1e-2f64.ln() - l0) / (l1 - l0);
            w[0].fidelity + s * (w[1].fidelity - w[0].fidelity)
        });
    let (pass, detail) = match at {
        Some(f) => {
            let share = (f - f_conv) / (f_max - f_conv);
            (
                share >= 0.9,
                format!(
                    "F(P_s = 1e-2) = {f:.5}, conventional {f_conv:.5}, best {f_max:.5}: {:.1}% of the gain (threshold 90%)",
                    100.0 * share
                ),
            )
        }
        None => (false, "sweep never reaches P_s = 1e-2".to_string()),
    };
    assert!(report(
        6,
        "1% success-probability claim",
        pass,
        &detail,
        start,
        secs(60)
    ));
}

#[test]
fn criterion_07_phase_invariance() {
    let start = Instant::now();
    let anc = AncillaSpec::pure_db(6.0).unwrap();
    let probe = vacuum(1).unwrap();
    let inputs = probe_inputs();
    let mut worst: f64 = 0.0;
    for &(target, _) in &inputs {
        let base = GateConfig::from_db(target, anc, 0.5, FilterSpec::identity(2)).unwrap();
        let mut cfg = base
            .with_filter(FilterSpec::new(3.38, 1.0, 2).unwrap())
            .unwrap();
        cfg.filter.alpha_c = inputs
            .iter()
            .map(|&(_, a)| coverage_cutoff(&cfg, &coherent(a), 3.38, 0.999).unwrap())
            .fold(0.0, f64::max);
        let reference = heralded_output(&cfg, &probe).unwrap().fidelity;
        for &(_, a) in &inputs {
            for phase in [0.0, 1.1, 2.5, 4.0] {
                let f = heralded_output(&cfg, &coherent(a * Complex64::from_polar(1.0, phase)))
                    .unwrap()
                    .fidelity;
                worst = worst.max((f - reference).abs());
            }
        }
    }

    let mut zs = Vec::new();
    for (k, &(target, a)) in inputs.iter().enumerate() {
        let input = coherent(a);
        let cfg = GateConfig::from_db(target, anc, 0.5, FilterSpec::identity(2))
            .unwrap()
            .with_coverage_filter(1.2, &input, 1.0 - 1e-6)
            .unwrap();
        let invariant = heralded_output(&cfg, &probe).unwrap().fidelity;
        let stats = simulate(&RunConfig::new(cfg, input.clone(), 200_000, 700 + k as u64)).unwrap();
        let (f, se) =
            estimate_fidelity(&stats, &target_state(&input, db_to_r(target)).unwrap()).unwrap();
        zs.push((f - invariant) / se);
    }
    let z_max = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let pass = worst < 1e-9 && z_max < 3.0;
    let detail = format!(
        "analytic spread {worst:.1e} over 5 targets x 5 inputs x 4 phases (tolerance 1e-9); MC z-scores {:?}",
        zs.iter().map(|z| format!("{z:.2}")).collect::<Vec<_>>()
    );
    assert!(report(
        7,
        "phase invariance",
        pass,
        &detail,
        start,
        secs(300)
    ));
}

#[test]
fn criterion_08_monotonicity() {
    let start = Instant::now();
    let anc = AncillaSpec::pure_db(6.0).unwrap();
    let grid: Vec<f64> = (0..20).map(|k| 1.0 + 0.5 * k as f64).collect();
    let mut violations = 0;
    let mut span = Vec::new();
    for target in [2.0, 4.0, 6.0] {
        let curve =
            tradeoff_curve(anc, db_to_r(target), 1.0, &grid, CutoffRule::Coverage(0.98)).unwrap();
        for w in curve.windows(2) {
            if w[1].fidelity < w[0].fidelity || w[1].success_probability > w[0].success_probability
            {
                violations += 1;
            }
        }
        span.push(format!(
            "{target} dB: F {:.4} -> {:.4}",
            curve[0].fidelity, curve[19].fidelity
        ));
    }
    let detail = format!(
        "{violations} ordering violations over 3 targets x 20 filter strengths ({})",
        span.join(", ")
    );
    assert!(report(
        8,
        "monotonicity",
        violations == 0,
        &detail,
        start,
        secs(60)
    ));
}

#[test]
fn criterion_09_cross_engine() {
    let start = Instant::now();
    let quad = FockQuadrature::default();
    let mut gap: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (g, alpha_c, a) in [
        (1.0, 2.0, Complex64::new(0.5, 0.3)),
        (1.0, 2.0, Complex64::new(-0.8, 0.6)),
        (5.0, 2.0, Complex64::new(0.5, 0.3)),
        (20.0, 2.0, Complex64::new(0.5, 0.3)),
        (2.0, 3.0, Complex64::new(0.2, -0.4)),
    ] {
        let cfg = GateConfig::from_db(
            2.0,
            AncillaSpec::pure_db(6.0).unwrap(),
            0.5,
            FilterSpec::new(g, alpha_c, 2).unwrap(),
        )
        .unwrap();
        let gauss = heralded_output_with(&cfg, &coherent(a), OutcomeModel::ExactMoments)
            .unwrap()
            .fidelity;
        let f40 = heralded_gate_fock(&cfg, &fock_coherent(a, 40).unwrap(), quad)
            .unwrap()
            .fidelity;
        let f80 = heralded_gate_fock(&cfg, &fock_coherent(a, 80).unwrap(), quad)
            .unwrap()
            .fidelity;
        gap = gap.max((f40 - gauss).abs());
        drift = drift.max((f80 - f40).abs());
    }
    let detail = format!("largest Fock/Gaussian gap at dim 40 {gap:.1e} (tolerance 1e-3), dim 40 -> 80 change {drift:.1e} (tolerance 1e-4)");
    assert!(report(
        9,
        "cross-engine oracle",
        gap < 1e-3 && drift < 1e-4,
        &detail,
        start,
        secs(600)
    ));
}

#[test]
fn criterion_10_imperfection_knobs() {
    let start = Instant::now();
    shout(
        "NOTE [10] the measured 0.985 ± 0.001 at g_f = 12.63 and the measured points of the fidelity-vs-target and \
         fidelity-vs-filter-strength data depend on imperfection parameters that are not available; they are not \
         reproduced. The eta_inloop/eta_verify knobs are checked for the qualitative orderings instead."
    );
    let anc = AncillaSpec::pure_db(6.0).unwrap();
    let probe = vacuum(1).unwrap();
    let mut pass = true;
    let mut rows = Vec::new();
    for t_m in [1.0, 0.5] {
        let run = |target_db: f64, eta_in: f64, eta_ver: f64, g: f64| {
            let cfg = GateConfig::from_db(target_db, anc, t_m, FilterSpec::identity(dims(t_m)))
                .unwrap()
                .with_efficiencies(eta_in, eta_ver)
                .unwrap()
                .with_coverage_filter(g, &probe, 0.99)
                .unwrap();
            heralded_output(&cfg, &probe).unwrap()
        };
        let fid = |eta_in: f64, eta_ver: f64, g: f64| run(2.30, eta_in, eta_ver, g).fidelity;
        for eta in [1.0, 0.9, 0.8] {
            let res: Vec<GateResult> = [1.0, 1.52, 3.38, 12.63]
                .iter()
                .map(|&g| run(2.30, eta, eta, g))
                .collect();
            // stronger filters raise fidelity and cost success probability at every efficiency
            pass &= res.windows(2).all(|w| {
                w[1].fidelity > w[0].fidelity && w[1].success_probability < w[0].success_probability
            });
            rows.push(format!(
                "t_m {t_m} eta {eta}: {:.4} -> {:.4}",
                res[0].fidelity, res[3].fidelity
            ));
        }
        // in-loop loss lowers fidelity, and deeper targets stay harder, at every filter strength
        for g in [1.0, 3.38] {
            pass &= fid(1.0, 1.0, g) > fid(0.9, 1.0, g) && fid(0.9, 1.0, g) > fid(0.8, 1.0, g);
            pass &= run(4.81, 0.9, 0.9, g).fidelity < fid(0.9, 0.9, g);
        }
    }
    let detail = format!("orderings under loss: {}", rows.join(", "));
    assert!(report(
        10,
        "imperfection knobs",
        pass,
        &detail,
        start,
        secs(60)
    ));
}
