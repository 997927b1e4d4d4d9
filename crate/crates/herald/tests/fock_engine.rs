use herald::filter::FilterSpec;
use herald::fock::*;
use herald::gate::*;
use herald::gaussian::*;
use herald::quadrature::gauss_hermite;
use herald::units::db_to_r;
use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

fn dual(target_db: f64, ancilla_db: f64, g: f64, alpha_c: f64) -> GateConfig {
    GateConfig::from_db(
        target_db,
        AncillaSpec::pure_db(ancilla_db).unwrap(),
        0.5,
        FilterSpec::new(g, alpha_c, 2).unwrap(),
    )
    .unwrap()
}

/// Photon fidelity of a deterministic unity-gain gate, from its Gaussian
/// description alone: the gate acts as `S` followed by random displacements
/// with covariance `N = V_out - S Sᵀ`, and `|⟨1|D(β)|1⟩|² = e^{-|β|²}(1 - |β|²)²`.
fn photon_channel_oracle(cfg: &GateConfig) -> f64 {
    let out = conventional_output(cfg, &vacuum(1).unwrap())
        .unwrap()
        .output;
    let (er, ir) = ((-cfg.r_t).exp(), cfg.r_t.exp());
    let s = Matrix2::new(er, 0.0, 0.0, ir);
    let v_out = Matrix2::new(
        out.cov()[(0, 0)],
        out.cov()[(0, 1)],
        out.cov()[(1, 0)],
        out.cov()[(1, 1)],
    );
    let noise = v_out - s * s.transpose();
    let s_inv = s.try_inverse().unwrap();
    let pulled = s_inv * noise * s_inv.transpose();
    let eig = SymmetricEigen::new(pulled);
    let (x, w) = gauss_hermite(80);
    let mut total = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            // quadrature displacements d = √2·σ·node; β = d/2
            let b2 = (2.0 * eig.eigenvalues[0] * x[i] * x[i]
                + 2.0 * eig.eigenvalues[1] * x[j] * x[j])
                / 4.0;
            total += w[i] * w[j] * (-b2).exp() * (1.0 - b2).powi(2);
        }
    }
    total / PI
}

#[test]
fn single_photon_through_deterministic_gate_matches_channel_oracle() {
    for (target, anc) in [(2.0, 6.0), (1.0, 4.0), (3.0, 8.0)] {
        let cfg = dual(target, anc, 1.0, 2.0);
        let fock = heralded_gate_fock(
            &cfg,
            &fock_single_photon(80).unwrap(),
            FockQuadrature::default(),
        )
        .unwrap();
        let oracle = photon_channel_oracle(&cfg);
        println!(
            "{target} dB target, {anc} dB ancilla: number basis {:.10}, channel {:.10}",
            fock.fidelity, oracle
        );
        assert!((fock.fidelity - oracle).abs() < 1e-8);
        assert!((fock.success_probability - 1.0).abs() < 1e-10);
    }
}

#[test]
fn coherent_inputs_agree_with_gaussian_engine() {
    let cases = [
        (1.0, 2.0, Complex64::new(0.5, 0.3)),
        (1.0, 2.0, Complex64::new(-0.8, 0.6)),
        (5.0, 2.0, Complex64::new(0.5, 0.3)),
        (20.0, 2.0, Complex64::new(0.5, 0.3)),
        (2.0, 3.0, Complex64::new(0.2, -0.4)),
    ];
    for (g, alpha_c, a) in cases {
        let cfg = dual(2.0, 6.0, g, alpha_c);
        let gauss = heralded_output_with(&cfg, &coherent(a), OutcomeModel::ExactMoments).unwrap();
        for dim in [40, 80] {
            let fock = match heralded_gate_fock(
                &cfg,
                &fock_coherent(a, dim).unwrap(),
                FockQuadrature::default(),
            ) {
                Ok(r) => r,
                Err(e) => panic!("g {g}, cutoff {alpha_c}, dim {dim}: {e}"),
            };
            let gap = (fock.fidelity - gauss.fidelity).abs();
            println!(
                "g {g} cutoff {alpha_c} alpha {a} dim {dim}: {:.9} vs {:.9} ({gap:.1e})",
                fock.fidelity, gauss.fidelity
            );
            assert!(gap < 1e-3);
            assert!(
                (fock.success_probability - gauss.success_probability).abs()
                    < 1e-8 * gauss.success_probability
            );
            // the wide cutoff makes the accepted output a non-Gaussian mixture; moments then
            // no longer fix the overlap, so the tight check is reserved for the near-Gaussian cases
            if dim == 80 && alpha_c <= 2.0 {
                assert!(gap < 1e-5);
            }
        }
    }
}

#[test]
fn truncation_convergence_under_dim_doubling() {
    let quad = FockQuadrature::default();
    for (g, alpha_c) in [(1.0, 2.0), (5.0, 2.0), (20.0, 2.0)] {
        let cfg = dual(2.0, 6.0, g, alpha_c);
        for make in [
            fock_single_photon as fn(usize) -> herald::Result<FockState>,
            |d| fock_coherent(Complex64::new(0.5, 0.3), d),
            |d| fock_cat(Complex64::new(0.8, 0.0), Parity::Even, d),
        ] {
            let f40 = heralded_gate_fock(&cfg, &make(40).unwrap(), quad)
                .unwrap()
                .fidelity;
            let f80 = heralded_gate_fock(&cfg, &make(80).unwrap(), quad)
                .unwrap()
                .fidelity;
            assert!((f40 - f80).abs() < 1e-4, "g {g}: {f40} vs {f80}");
        }
    }
}

#[test]
fn better_ancilla_drives_photon_fidelity_up() {
    let mut last = 0.0;
    for db in [2.0, 4.0, 6.0, 8.0] {
        let cfg = dual(1.0, db, 1.0, 2.0);
        let f = heralded_gate_fock(
            &cfg,
            &fock_single_photon(80).unwrap(),
            FockQuadrature::default(),
        )
        .unwrap()
        .fidelity;
        assert!(f > last, "{db} dB: {f} <= {last}");
        last = f;
    }
    // far beyond what the number basis can hold, the channel description carries the trend on;
    // the split's vacuum noise on the fed-forward quadrature caps it below one
    let f: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&v_sq| {
            let anc = AncillaSpec::new(v_sq, 1.0 / v_sq, 0.0).unwrap();
            photon_channel_oracle(
                &GateConfig::new(db_to_r(1.0), anc, 0.5, FilterSpec::identity(2)).unwrap(),
            )
        })
        .collect();
    println!("photon fidelity as the ancilla sharpens: {f:?}");
    for w in f.windows(3) {
        assert!(w[1] > w[0] && w[2] > w[1] && w[2] - w[1] < w[1] - w[0]);
    }
}

#[test]
fn strong_filter_does_not_help_single_photon() {
    // the gate is tuned on Gaussian statistics; a photon's outcome ring is reweighted the wrong way
    let quad = FockQuadrature::default();
    let f: Vec<f64> = [1.0, 5.0, 20.0]
        .iter()
        .map(|&g| {
            heralded_gate_fock(
                &dual(2.0, 6.0, g, 2.0),
                &fock_single_photon(40).unwrap(),
                quad,
            )
            .unwrap()
            .fidelity
        })
        .collect();
    println!("single photon, 6 dB ancilla, 2 dB target: {f:?}");
    assert!(f[0] > f[1] && f[1] > f[2]);
    assert!(f[2] < 0.98);
}

#[test]
fn heterodyne_q_functions() {
    let dim = 30;
    let vac = FockState::vacuum(dim).unwrap();
    let photon = fock_single_photon(dim).unwrap();
    let other = fock_coherent(Complex64::new(0.4, -0.2), dim).unwrap();
    for a in [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.7, -0.3),
        Complex64::new(-1.2, 1.5),
    ] {
        let (rest, q) = heterodyne_project(&other.tensor(&vac).unwrap(), 1, a).unwrap();
        assert!((q - (-a.norm_sqr()).exp() / PI).abs() < 1e-12);
        assert!((rest.overlap(&other).unwrap() - 1.0).abs() < 1e-12);
        if a.norm() > 0.0 {
            let (_, q) = heterodyne_project(&photon.tensor(&other).unwrap(), 0, a).unwrap();
            assert!((q - a.norm_sqr() * (-a.norm_sqr()).exp() / PI).abs() < 1e-12);
        }
    }
}

#[test]
fn q_function_integrates_to_one() {
    let dim = 25;
    let state = fock_cat(Complex64::new(1.0, 0.5), Parity::Odd, dim)
        .unwrap()
        .tensor(&fock_single_photon(dim).unwrap())
        .unwrap();
    let h = 0.05;
    let n = (7.0 / h) as i64;
    let mut total = 0.0;
    for i in -n..=n {
        for j in -n..=n {
            total += heterodyne_project(&state, 0, Complex64::new(i as f64 * h, j as f64 * h))
                .map(|r| r.1)
                .unwrap_or(0.0);
        }
    }
    total *= h * h;
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn coherent_pair_stays_a_product_through_beamsplitter() {
    let dim = 40;
    let (a, b) = (Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.5));
    for t in [0.0, 0.2, 0.5, 0.9, 1.0] {
        let input = fock_coherent(a, dim)
            .unwrap()
            .tensor(&fock_coherent(b, dim).unwrap())
            .unwrap();
        let out = fock_beamsplitter(&input, t).unwrap();
        let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
        let want = fock_coherent(a * st + b * sr, dim)
            .unwrap()
            .tensor(&fock_coherent(a * sr - b * st, dim).unwrap())
            .unwrap();
        let inner = out.amplitudes().dotc(want.amplitudes()).norm_sqr();
        assert!((inner - 1.0).abs() < 1e-10, "t = {t}");
    }
}

#[test]
fn unitaries_preserve_norm_and_photon_number() {
    let dim = 24;
    // random two-mode state supported on n0 + n1 < dim
    let mut amps = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut seed = 0x2545_f491_u64;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for n0 in 0..dim {
        for n1 in 0..dim - n0 {
            amps[n0 * dim + n1] = Complex64::new(next(), next()) * (-0.3 * (n0 + n1) as f64).exp();
        }
    }
    let state = FockState::from_two_mode_amplitudes(dim, amps).unwrap();
    let number = |s: &FockState| {
        let d = s.dim();
        (0..d)
            .flat_map(|n0| (0..d).map(move |n1| (n0, n1)))
            .map(|(n0, n1)| (n0 + n1) as f64 * s.amplitude2(n0, n1).norm_sqr())
            .sum::<f64>()
    };
    for t in [0.1, 0.37, 0.5, 0.83] {
        let out = fock_beamsplitter(&state, t).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
        assert!((number(&out) - number(&state)).abs() < 1e-10);
        // t and its complement undo each other up to the port sign convention
        let back = fock_beamsplitter(&out, t).unwrap();
        assert!((back.amplitudes().dotc(state.amplitudes()).norm_sqr() - 1.0).abs() < 1e-10);
    }
    let single = fock_cat(Complex64::new(0.9, 0.0), Parity::Even, 60).unwrap();
    for r in [-0.5, 0.3, 0.8] {
        let s = fock_squeeze(&single, r).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-8);
        let undone = fock_squeeze(&s, -r).unwrap();
        assert!((undone.overlap(&single).unwrap() - 1.0).abs() < 1e-8);
    }
    let d = displacement_matrix(Complex64::new(0.3, 0.4), 60);
    let v = d * fock_coherent(Complex64::new(0.1, 0.0), 60)
        .unwrap()
        .amplitudes();
    assert!((v.norm() - 1.0).abs() < 1e-8);
}

#[test]
fn constructors_match_closed_forms() {
    let vac = fock_coherent(Complex64::new(0.0, 0.0), 20).unwrap();
    assert!((vac.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
    let r = 0.7;
    let sq = fock_squeezed_vacuum(r, 60).unwrap();
    let ratio = sq.amplitudes()[2] / sq.amplitudes()[0];
    assert!((ratio.re + r.tanh() / 2f64.sqrt()).abs() < 1e-12 && ratio.im.abs() < 1e-15);
    assert!(sq
        .amplitudes()
        .iter()
        .skip(1)
        .step_by(2)
        .all(|c| c.norm() == 0.0));
    let a = Complex64::new(0.6, 0.0);
    let cat = fock_cat(a, Parity::Even, 40).unwrap();
    let norm = 1.0 / (2.0 + 2.0 * (-2.0 * a.norm_sqr()).exp()).sqrt();
    assert!((cat.amplitudes()[0].re - 2.0 * norm * (-0.5 * a.norm_sqr()).exp()).abs() < 1e-12);
}
