use herald::fock::{displacement_matrix, fock_squeeze, moments_of_density, FockState};
use herald::gaussian::*;
use herald::units::{db_to_r, db_to_variance};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn random_op(nmodes: usize, params: &[(f64, f64, f64)]) -> SymplecticOp {
    let mut op = SymplecticOp::identity(nmodes);
    for (k, &(r, angle, t)) in params.iter().enumerate() {
        let m = k % nmodes;
        op = squeezer(nmodes, m, r, angle).unwrap().compose(&op);
        op = rotation(nmodes, m, angle * 1.7).unwrap().compose(&op);
        if nmodes > 1 {
            op = beamsplitter(nmodes, (m, (m + 1) % nmodes), t)
                .unwrap()
                .compose(&op);
        }
    }
    op
}

/// Random physical state: thermal noise, then a random symplectic, then a displacement.
fn random_state(
    nmodes: usize,
    thermal: &[f64],
    params: &[(f64, f64, f64)],
    shift: &[f64],
) -> GaussianState {
    let diag = DVector::from_fn(2 * nmodes, |i, _| thermal[i / 2]);
    let base = GaussianState::new(
        DVector::from_column_slice(&shift[..2 * nmodes]),
        DMatrix::from_diagonal(&diag),
    )
    .unwrap();
    apply(&base, &random_op(nmodes, params)).unwrap()
}

fn op_params() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -3.2f64..3.2, 0.0f64..=1.0), 1..5)
}

proptest! {
    #[test]
    fn constructors_are_symplectic(params in op_params(), nmodes in 1usize..4) {
        prop_assert!(random_op(nmodes, &params).is_symplectic(1e-10));
    }

    #[test]
    fn inverse_restores_state(params in op_params(), th in prop::collection::vec(1.0f64..3.0, 2), sh in prop::collection::vec(-2.0f64..2.0, 4)) {
        let s = random_state(2, &th, &params, &sh);
        let op = random_op(2, &params);
        let back = apply(&apply(&s, &op).unwrap(), &op.inverse()).unwrap();
        prop_assert!((back.mean() - s.mean()).amax() < 1e-10);
        prop_assert!((back.cov() - s.cov()).amax() < 1e-10);
    }

    #[test]
    fn heterodyne_equals_split_dual_homodyne(
        params in op_params(),
        th in prop::collection::vec(1.0f64..2.5, 2),
        sh in prop::collection::vec(-2.0f64..2.0, 4),
        re in -2.0f64..2.0,
        im in -2.0f64..2.0,
    ) {
        let s = random_state(2, &th, &params, &sh);
        let outcome = Complex64::new(re, im);
        let direct = condition_on_heterodyne(&s, 1, outcome).unwrap();

        let split = apply(&s.tensor(&vacuum(1).unwrap()), &beamsplitter(3, (1, 2), 0.5).unwrap()).unwrap();
        // reflected port: x_e = (x - x_v)/√2; transmitted port: y_d = (y + y_v)/√2
        let (after_x, _) = condition_on_homodyne(&split, 2, Quadrature::X, std::f64::consts::SQRT_2 * re).unwrap();
        let (after_y, _) = condition_on_homodyne(&after_x, 1, Quadrature::Y, std::f64::consts::SQRT_2 * im).unwrap();
        let kept = after_y.mode(0);
        prop_assert!((kept.mean() - direct.mean()).amax() < 1e-10);
        prop_assert!((kept.cov() - direct.cov()).amax() < 1e-10);
    }

    #[test]
    fn fidelity_symmetric_and_uhlmann_invariant(
        pa in op_params(), pb in op_params(), pc in op_params(),
        th in prop::collection::vec(1.0f64..2.0, 2),
        sa in prop::collection::vec(-1.0f64..1.0, 2),
        sb in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let a = random_state(1, &th[..1], &pa, &sa);
        let b = random_state(1, &th[1..], &pb, &sb);
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-10);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        let u = random_op(1, &pc);
        let moved = fidelity(&apply(&a, &u).unwrap(), &apply(&b, &u).unwrap()).unwrap();
        prop_assert!((moved - f).abs() < 1e-10);
    }

    #[test]
    fn fidelity_matches_number_basis_overlap(
        r1 in -0.6f64..0.6, th1 in -3.2f64..3.2, b1 in (-0.8f64..0.8, -0.8f64..0.8),
        r2 in -0.6f64..0.6, th2 in -3.2f64..3.2, b2 in (-0.8f64..0.8, -0.8f64..0.8),
    ) {
        let dim = 60;
        let pure = |r: f64, th: f64, b: (f64, f64)| {
            let sq = fock_squeeze(&FockState::vacuum(dim).unwrap(), r).unwrap();
            let rotated: Vec<Complex64> = sq.amplitudes().iter().enumerate()
                .map(|(n, c)| c * Complex64::from_polar(1.0, th * n as f64)).collect();
            let v = displacement_matrix(Complex64::new(b.0, b.1), dim) * DVector::from_vec(rotated);
            FockState::from_amplitudes(v.iter().cloned().collect()).unwrap()
        };
        let (p, q) = (pure(r1, th1, b1), pure(r2, th2, b2));
        let overlap = p.overlap(&q).unwrap();
        let gp = moments_of_density(&(p.amplitudes() * p.amplitudes().adjoint())).unwrap();
        let gq = moments_of_density(&(q.amplitudes() * q.amplitudes().adjoint())).unwrap();
        prop_assert!((fidelity(&gp, &gq).unwrap() - overlap).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn loss_keeps_states_physical(
        params in op_params(),
        th in prop::collection::vec(1.0f64..4.0, 2),
        sh in prop::collection::vec(-3.0f64..3.0, 4),
        eta in 0.0f64..=1.0,
        mode in 0usize..2,
    ) {
        let s = random_state(2, &th, &params, &sh);
        let lossy = loss_channel(&s, mode, eta).unwrap();
        prop_assert!(lossy.is_physical(1e-9));
        prop_assert!(lossy.symplectic_eigenvalues().iter().all(|&nu| nu >= 1.0 - 1e-9));
    }
}

#[test]
fn squeezed_vacuum_fidelity_against_number_basis() {
    let r = db_to_r(3.0);
    let sq = squeezer(1, 0, r, 0.0).unwrap();
    let g = apply(&vacuum(1).unwrap(), &sq).unwrap();
    let f = fidelity(&vacuum(1).unwrap(), &g).unwrap();
    let fock = fock_squeeze(&FockState::vacuum(60).unwrap(), r).unwrap();
    let overlap = fock.overlap(&FockState::vacuum(60).unwrap()).unwrap();
    assert!((f - overlap).abs() < 1e-8, "{f} vs {overlap}");
    assert!((db_to_variance(3.0) - (-2.0 * r).exp()).abs() < 1e-14);
}

#[test]
fn loss_to_zero_gives_vacuum() {
    let s = squeezed_vacuum(&AncillaSpec::from_db(6.0, 6.5).unwrap());
    let s = displace(&s, 0, 1.2, -0.4).unwrap();
    let gone = loss_channel(&s, 0, 0.0).unwrap();
    assert!(gone.mean().amax() == 0.0);
    assert!((gone.cov() - DMatrix::identity(2, 2)).amax() < 1e-15);
}

#[test]
fn conditioning_never_increases_variances() {
    let s = random_state(
        2,
        &[1.5, 2.0],
        &[(0.4, 0.3, 0.6), (-0.7, 1.1, 0.2)],
        &[0.1, 0.2, 0.3, 0.4],
    );
    for q in [Quadrature::X, Quadrature::Y] {
        let (post, _) = condition_on_homodyne(&s, 1, q, 0.7).unwrap();
        assert!(post.cov()[(0, 0)] <= s.cov()[(0, 0)] + 1e-12);
        assert!(post.cov()[(1, 1)] <= s.cov()[(1, 1)] + 1e-12);
    }
}
