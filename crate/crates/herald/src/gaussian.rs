//! Gaussian states in the quadrature picture.
//!
//! Convention: `x = a + a†`, `y = -i(a - a†)`, vacuum variance 1, quadratures
//! ordered `(x1, y1, x2, y2, ...)`. A coherent amplitude `alpha` has mean
//! `(2 Re alpha, 2 Im alpha)`.
//!
//! Beamsplitter sign convention, for transmissivity `t` acting on modes
//! `(a1, a2)`:
//!
//! ```text
//! b = sqrt(t) a1 + sqrt(1-t) a2
//! c = sqrt(1-t) a1 - sqrt(t) a2
//! ```
//!
//! applied identically to both quadratures.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const PHYS_SLACK: f64 = 1e-9;

/// Quadrature selector for homodyne measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    Y,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::Y => 1,
        }
    }
}

/// Mean vector and covariance matrix of an N-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state, symmetrizing `cov`. Physicality is checked in debug builds.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "mean length {n} is not 2N"
            )));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "covariance is {}x{}, expected {n}x{n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite moments".into()));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let state = GaussianState { mean, cov };
        debug_assert!(
            state.is_physical(1e-6),
            "unphysical covariance {}",
            state.cov
        );
        Ok(state)
    }

    /// Builds a state and rejects it unless `cov + iΩ ⪰ 0`.
    pub fn new_checked(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidParameter("shape mismatch".into()));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let state = GaussianState { mean, cov };
        if !state.is_physical(PHYS_SLACK) {
            return Err(Error::Unphysical(format!(
                "smallest symplectic eigenvalue {:.3e}",
                state
                    .symplectic_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(state)
    }

    pub fn nmodes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Mean and covariance of one mode.
    pub fn mode(&self, mode: usize) -> GaussianState {
        let i = 2 * mode;
        GaussianState {
            mean: self.mean.rows(i, 2).into_owned(),
            cov: self.cov.view((i, i), (2, 2)).into_owned(),
        }
    }

    /// Mean and 2x2 covariance of a single-mode state.
    pub fn moments2(&self) -> ([f64; 2], Matrix2<f64>) {
        (
            [self.mean[0], self.mean[1]],
            Matrix2::new(
                self.cov[(0, 0)],
                self.cov[(0, 1)],
                self.cov[(1, 0)],
                self.cov[(1, 1)],
            ),
        )
    }

    /// Product state `self ⊗ other`, modes of `other` appended.
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let (n, m) = (self.mean.len(), other.mean.len());
        let mut mean = DVector::zeros(n + m);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean.rows_mut(n, m).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(n + m, n + m);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        cov.view_mut((n, n), (m, m)).copy_from(&other.cov);
        GaussianState { mean, cov }
    }

    /// Symplectic eigenvalues, ascending. All are ≥ 1 for a physical state.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        // ν are the moduli of the eigenvalues of the antisymmetric V^½ Ω V^½,
        // i.e. square roots of the eigenvalues of -(V^½ Ω V^½)^2 (each twice).
        let eig = SymmetricEigen::new(self.cov.clone());
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root =
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        let a = &root * omega(self.nmodes()) * &root;
        let sq = -(&a * &a);
        let sq = (&sq + sq.transpose()) * 0.5;
        let mut vals: Vec<f64> = SymmetricEigen::new(sq)
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.into_iter().step_by(2).collect()
    }

    /// `cov + iΩ ⪰ 0` up to `slack`, tested through the real embedding
    /// `[[V, -Ω], [Ω, V]] ⪰ 0`.
    pub fn is_physical(&self, slack: f64) -> bool {
        let n = self.mean.len();
        let om = omega(self.nmodes());
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        big.view_mut((n, n), (n, n)).copy_from(&self.cov);
        big.view_mut((0, n), (n, n)).copy_from(&(-&om));
        big.view_mut((n, 0), (n, n)).copy_from(&om);
        let min = SymmetricEigen::new(big).eigenvalues.min();
        min >= -slack
    }

    /// Purity `1/sqrt(det V)`.
    pub fn purity(&self) -> f64 {
        1.0 / self.cov.determinant().sqrt()
    }
}

/// Standard symplectic form for `n` modes.
pub fn omega(n: usize) -> DMatrix<f64> {
    let mut om = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        om[(2 * k, 2 * k + 1)] = 1.0;
        om[(2 * k + 1, 2 * k)] = -1.0;
    }
    om
}

fn rotation2(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn vacuum(n: usize) -> Result<GaussianState> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "vacuum needs at least one mode".into(),
        ));
    }
    Ok(GaussianState {
        mean: DVector::zeros(2 * n),
        cov: DMatrix::identity(2 * n, 2 * n),
    })
}

pub fn coherent(alpha: Complex64) -> GaussianState {
    GaussianState {
        mean: DVector::from_vec(vec![2.0 * alpha.re, 2.0 * alpha.im]),
        cov: DMatrix::identity(2, 2),
    }
}

/// Single-mode Gaussian ancilla described by its principal variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncillaSpec {
    pub v_sq: f64,
    pub v_asq: f64,
    pub angle: f64,
}

impl AncillaSpec {
    pub fn new(v_sq: f64, v_asq: f64, angle: f64) -> Result<Self> {
        if !(v_sq > 0.0 && v_sq <= 1.0 + 1e-12 && v_asq >= 1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "ancilla variances must satisfy v_sq <= 1 <= v_asq, got ({v_sq}, {v_asq})"
            )));
        }
        if v_sq * v_asq < 1.0 - 1e-12 {
            return Err(Error::Unphysical(format!(
                "v_sq * v_asq = {} < 1",
                v_sq * v_asq
            )));
        }
        Ok(AncillaSpec { v_sq, v_asq, angle })
    }

    /// Ancilla from squeezing and anti-squeezing levels in dB, squeezed along x.
    pub fn from_db(sq_db: f64, asq_db: f64) -> Result<Self> {
        Self::new(
            crate::units::db_to_variance(sq_db),
            crate::units::db_to_variance(-asq_db),
            0.0,
        )
    }

    /// Pure squeezed vacuum with `db` of squeezing along x.
    pub fn pure_db(db: f64) -> Result<Self> {
        Self::from_db(db, db)
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (self.v_sq * self.v_asq - 1.0).abs() <= tol
    }

    pub fn squeezing_db(&self) -> f64 {
        crate::units::variance_to_db(self.v_sq)
    }
}

pub fn squeezed_vacuum(spec: &AncillaSpec) -> GaussianState {
    let r = rotation2(spec.angle);
    let c = r * Matrix2::new(spec.v_sq, 0.0, 0.0, spec.v_asq) * r.transpose();
    GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::from_row_slice(2, 2, &[c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]]),
    }
}

/// Affine phase-space map `z -> M z + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    pub matrix: DMatrix<f64>,
    pub displacement: DVector<f64>,
}

impl SymplecticOp {
    pub fn identity(nmodes: usize) -> Self {
        SymplecticOp {
            matrix: DMatrix::identity(2 * nmodes, 2 * nmodes),
            displacement: DVector::zeros(2 * nmodes),
        }
    }

    pub fn nmodes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `M Ω Mᵀ = Ω` within `tol` (max-abs entry).
    pub fn is_symplectic(&self, tol: f64) -> bool {
        let om = omega(self.nmodes());
        (&self.matrix * &om * self.matrix.transpose() - om).amax() <= tol
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &SymplecticOp) -> SymplecticOp {
        SymplecticOp {
            matrix: &self.matrix * &first.matrix,
            displacement: &self.matrix * &first.displacement + &self.displacement,
        }
    }

    pub fn inverse(&self) -> SymplecticOp {
        // M⁻¹ = -Ω Mᵀ Ω for symplectic M
        let om = omega(self.nmodes());
        let inv = -(&om * self.matrix.transpose() * &om);
        let displacement = -(&inv * &self.displacement);
        SymplecticOp {
            matrix: inv,
            displacement,
        }
    }
}

fn check_mode(nmodes: usize, mode: usize) -> Result<()> {
    if mode >= nmodes {
        return Err(Error::InvalidParameter(format!(
            "mode {mode} out of range for {nmodes} modes"
        )));
    }
    Ok(())
}

/// Beamsplitter of transmissivity `t` between `modes.0` (first input, transmitted
/// into itself) and `modes.1`.
pub fn beamsplitter(nmodes: usize, modes: (usize, usize), t: f64) -> Result<SymplecticOp> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "transmissivity {t} outside [0,1]"
        )));
    }
    check_mode(nmodes, modes.0)?;
    check_mode(nmodes, modes.1)?;
    if modes.0 == modes.1 {
        return Err(Error::InvalidParameter(
            "beamsplitter needs two distinct modes".into(),
        ));
    }
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let mut op = SymplecticOp::identity(nmodes);
    for q in 0..2 {
        let (i, j) = (2 * modes.0 + q, 2 * modes.1 + q);
        op.matrix[(i, i)] = st;
        op.matrix[(i, j)] = sr;
        op.matrix[(j, i)] = sr;
        op.matrix[(j, j)] = -st;
    }
    Ok(op)
}

/// Single-mode squeezer; at `angle = 0` it maps `(x, y) -> (e^{-r} x, e^{r} y)`.
pub fn squeezer(nmodes: usize, mode: usize, r: f64, angle: f64) -> Result<SymplecticOp> {
    if !r.is_finite() || !angle.is_finite() {
        return Err(Error::InvalidParameter(
            "squeezing parameters must be finite".into(),
        ));
    }
    check_mode(nmodes, mode)?;
    let rot = rotation2(angle);
    let block = rot * Matrix2::new((-r).exp(), 0.0, 0.0, r.exp()) * rot.transpose();
    Ok(embed(nmodes, mode, &block))
}

/// Phase rotation by `theta`.
pub fn rotation(nmodes: usize, mode: usize, theta: f64) -> Result<SymplecticOp> {
    check_mode(nmodes, mode)?;
    Ok(embed(nmodes, mode, &rotation2(theta)))
}

fn embed(nmodes: usize, mode: usize, block: &Matrix2<f64>) -> SymplecticOp {
    let mut op = SymplecticOp::identity(nmodes);
    let i = 2 * mode;
    for a in 0..2 {
        for b in 0..2 {
            op.matrix[(i + a, i + b)] = block[(a, b)];
        }
    }
    op
}

pub fn apply(state: &GaussianState, op: &SymplecticOp) -> Result<GaussianState> {
    if op.matrix.nrows() != state.mean.len() {
        return Err(Error::InvalidParameter(format!(
            "operation on {} modes applied to {}-mode state",
            op.nmodes(),
            state.nmodes()
        )));
    }
    let mean = &op.matrix * &state.mean + &op.displacement;
    let cov = &op.matrix * &state.cov * op.matrix.transpose();
    GaussianState::new(mean, cov)
}

/// Pure-loss channel of transmission `eta` on one mode.
pub fn loss_channel(state: &GaussianState, mode: usize, eta: f64) -> Result<GaussianState> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "efficiency {eta} outside [0,1]"
        )));
    }
    check_mode(state.nmodes(), mode)?;
    let s = eta.sqrt();
    let n = state.mean.len();
    let mut scale = DVector::from_element(n, 1.0);
    scale[2 * mode] = s;
    scale[2 * mode + 1] = s;
    let mean = state.mean.component_mul(&scale);
    let mut cov = state.cov.clone();
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] *= scale[i] * scale[j];
        }
    }
    cov[(2 * mode, 2 * mode)] += 1.0 - eta;
    cov[(2 * mode + 1, 2 * mode + 1)] += 1.0 - eta;
    GaussianState::new(mean, cov)
}

pub fn displace(state: &GaussianState, mode: usize, dx: f64, dy: f64) -> Result<GaussianState> {
    check_mode(state.nmodes(), mode)?;
    let mut mean = state.mean.clone();
    mean[2 * mode] += dx;
    mean[2 * mode + 1] += dy;
    Ok(GaussianState {
        mean,
        cov: state.cov.clone(),
    })
}

/// Indices of all quadratures except those of `mode`.
fn others(n: usize, mode: usize) -> Vec<usize> {
    (0..2 * n).filter(|&i| i / 2 != mode).collect()
}

/// Gaussian conditioning of the rows `keep` on the rows `measured` taking
/// `value`, with `extra` added to the measured block (noise of the meter).
fn condition(
    state: &GaussianState,
    keep: &[usize],
    measured: &[usize],
    value: &DVector<f64>,
    extra: &DMatrix<f64>,
) -> Result<GaussianState> {
    let a = state.cov.select_rows(keep).select_columns(keep);
    let c = state.cov.select_rows(keep).select_columns(measured);
    let b = state.cov.select_rows(measured).select_columns(measured) + extra;
    let mu_a = state.mean.select_rows(keep);
    let mu_b = state.mean.select_rows(measured);
    let b_inv = b
        .clone()
        .try_inverse()
        .filter(|_| b.determinant() > 1e-300)
        .ok_or(Error::DegenerateMeasurement(b.determinant()))?;
    let gain = &c * b_inv;
    let mean = mu_a + &gain * (value - mu_b);
    let cov = a - &gain * c.transpose();
    GaussianState::new(mean, cov)
}

/// Homodyne measurement of one quadrature. Returns the state of the remaining
/// modes and the pre-measurement marginal `(mean, variance)` of the outcome.
pub fn condition_on_homodyne(
    state: &GaussianState,
    mode: usize,
    quadrature: Quadrature,
    outcome: f64,
) -> Result<(GaussianState, (f64, f64))> {
    check_mode(state.nmodes(), mode)?;
    if state.nmodes() < 2 {
        return Err(Error::InvalidParameter(
            "conditioning needs at least two modes".into(),
        ));
    }
    let idx = 2 * mode + quadrature.offset();
    let (m, v) = (state.mean[idx], state.cov[(idx, idx)]);
    if !(v > 0.0) {
        return Err(Error::DegenerateMeasurement(v));
    }
    let keep = others(state.nmodes(), mode);
    let post = condition(
        state,
        &keep,
        &[idx],
        &DVector::from_element(1, outcome),
        &DMatrix::zeros(1, 1),
    )?;
    Ok((post, (m, v)))
}

/// Heterodyne (coherent-state projection) on one mode with outcome `alpha`.
///
/// Equivalent to a balanced beamsplitter with vacuum followed by homodyne
/// detection of x on one output and y on the other.
pub fn condition_on_heterodyne(
    state: &GaussianState,
    mode: usize,
    outcome: Complex64,
) -> Result<GaussianState> {
    check_mode(state.nmodes(), mode)?;
    if state.nmodes() < 2 {
        return Err(Error::InvalidParameter(
            "conditioning needs at least two modes".into(),
        ));
    }
    let keep = others(state.nmodes(), mode);
    let value = DVector::from_vec(vec![2.0 * outcome.re, 2.0 * outcome.im]);
    condition(
        state,
        &keep,
        &[2 * mode, 2 * mode + 1],
        &value,
        &DMatrix::identity(2, 2),
    )
}

/// Fidelity between two single-mode Gaussian states.
pub fn fidelity(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    if a.nmodes() != 1 || b.nmodes() != 1 {
        return Err(Error::InvalidParameter(
            "fidelity is implemented for single-mode states".into(),
        ));
    }
    let (ma, va) = a.moments2();
    let (mb, vb) = b.moments2();
    Ok(fidelity_moments(ma, &va, mb, &vb))
}

/// Closed-form single-mode Gaussian fidelity from raw moments.
pub fn fidelity_moments(ma: [f64; 2], va: &Matrix2<f64>, mb: [f64; 2], vb: &Matrix2<f64>) -> f64 {
    let sum = va + vb;
    let big = sum.determinant();
    let small = ((va.determinant() - 1.0) * (vb.determinant() - 1.0)).max(0.0);
    let d = nalgebra::Vector2::new(ma[0] - mb[0], ma[1] - mb[1]);
    let quad = match sum.try_inverse() {
        Some(inv) => (d.transpose() * inv * d)[(0, 0)],
        None => return 0.0,
    };
    let f = 2.0 / ((big + small).sqrt() - small.sqrt()) * (-0.5 * quad).exp();
    f.clamp(0.0, 1.0)
}
