//! Truncated photon-number engine for running the heralded gate on
//! non-Gaussian inputs.
//!
//! Only the dual-homodyne topology (`t_m = 1/2`) with a pure ancilla and no
//! loss is supported: there the in-loop measurement is a heterodyne
//! projection onto coherent states.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{filter_outcome, OutcomeGaussian};
use crate::gate::{feedforward, joint, GateConfig};
use crate::gaussian::GaussianState;
use crate::quadrature::gauss_legendre;
use statrs::function::gamma::gamma_lr;

/// Largest truncation tail accepted by constructors and the gate.
pub const TAIL_LIMIT: f64 = 1e-6;

/// Default truncation dimension.
pub const DEFAULT_DIM: usize = 40;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Pure state of one or two modes in a truncated number basis.
///
/// Two-mode amplitudes are stored row-major: index `n0 * dim + n1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    dim: usize,
    modes: usize,
    amplitudes: DVector<Complex64>,
    tail: f64,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "truncation dimension {dim} must be >= 2"
        )));
    }
    Ok(())
}

impl FockState {
    /// Normalizes `amplitudes`; `tail` is the probability mass lost to truncation.
    fn from_truncated(
        dim: usize,
        modes: usize,
        amplitudes: DVector<Complex64>,
        tail: f64,
    ) -> Result<Self> {
        let tail = tail.max(0.0);
        if tail >= TAIL_LIMIT {
            return Err(Error::TruncationOverflow {
                tail,
                limit: TAIL_LIMIT,
            });
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("state has zero norm".into()));
        }
        Ok(FockState {
            dim,
            modes,
            amplitudes: amplitudes / Complex64::from(norm),
            tail,
        })
    }

    /// Single-mode state from explicit amplitudes (normalized on construction).
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        check_dim(dim)?;
        Self::from_truncated(dim, 1, DVector::from_vec(amplitudes), 0.0)
    }

    /// Two-mode state from row-major amplitudes of length `dim²`.
    pub fn from_two_mode_amplitudes(dim: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_dim(dim)?;
        if amplitudes.len() != dim * dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} amplitudes, got {}",
                dim * dim,
                amplitudes.len()
            )));
        }
        Self::from_truncated(dim, 2, DVector::from_vec(amplitudes), 0.0)
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        fock_number(0, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// Mass discarded by truncation when the state was built.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn amplitude2(&self, n0: usize, n1: usize) -> Complex64 {
        self.amplitudes[n0 * self.dim + n1]
    }

    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        if self.modes != 1 || other.modes != 1 || self.dim != other.dim {
            return Err(Error::InvalidParameter(
                "tensor needs two single-mode states of equal dimension".into(),
            ));
        }
        let d = self.dim;
        let amps = DVector::from_fn(d * d, |i, _| {
            self.amplitudes[i / d] * other.amplitudes[i % d]
        });
        Ok(FockState {
            dim: d,
            modes: 2,
            amplitudes: amps,
            tail: self.tail + other.tail,
        })
    }

    /// `|⟨self|other⟩|²` for single-mode states.
    pub fn overlap(&self, other: &FockState) -> Result<f64> {
        if self.modes != 1 || other.modes != 1 || self.dim != other.dim {
            return Err(Error::InvalidParameter(
                "overlap needs single-mode states of equal dimension".into(),
            ));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes).norm_sqr())
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Quadrature mean and covariance of a single-mode state.
    pub fn gaussian_moments(&self) -> Result<GaussianState> {
        if self.modes != 1 {
            return Err(Error::InvalidParameter(
                "moments are defined for single-mode states".into(),
            ));
        }
        moments_of_density(&(&self.amplitudes * self.amplitudes.adjoint()))
    }
}

/// Quadrature moments of a single-mode density matrix.
pub fn moments_of_density(rho: &DMatrix<Complex64>) -> Result<GaussianState> {
    let d = rho.nrows();
    let mut a = C0;
    let mut a2 = C0;
    let mut n = 0.0;
    // ⟨O⟩ = Σ ρ_{k,j} O_{j,k}; a has entries ⟨j|a|j+1⟩ = √(j+1)
    for j in 0..d {
        n += j as f64 * rho[(j, j)].re;
        if j + 1 < d {
            a += rho[(j + 1, j)] * ((j + 1) as f64).sqrt();
        }
        if j + 2 < d {
            a2 += rho[(j + 2, j)] * (((j + 1) * (j + 2)) as f64).sqrt();
        }
    }
    let mean = DVector::from_vec(vec![2.0 * a.re, 2.0 * a.im]);
    let xx = 2.0 * a2.re + 2.0 * n + 1.0 - mean[0] * mean[0];
    let yy = -2.0 * a2.re + 2.0 * n + 1.0 - mean[1] * mean[1];
    let xy = 2.0 * a2.im - mean[0] * mean[1];
    GaussianState::new(mean, DMatrix::from_row_slice(2, 2, &[xx, xy, xy, yy]))
}

/// Number state `|n⟩`.
pub fn fock_number(n: usize, dim: usize) -> Result<FockState> {
    check_dim(dim)?;
    if n >= dim {
        return Err(Error::TruncationOverflow {
            tail: 1.0,
            limit: TAIL_LIMIT,
        });
    }
    let mut amps = DVector::from_element(dim, C0);
    amps[n] = Complex64::new(1.0, 0.0);
    FockState::from_truncated(dim, 1, amps, 0.0)
}

pub fn fock_single_photon(dim: usize) -> Result<FockState> {
    fock_number(1, dim)
}

/// `Σ_{n >= start} exp(ln_mass(n))`, summed until the terms are decreasing and negligible.
fn tail_mass(start: usize, ln_mass: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for n in start..start + 100_000 {
        let v = ln_mass(n);
        total += v.exp();
        if v < -745.0 && ln_mass(n + 1) < v {
            break;
        }
    }
    total
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// `ln |⟨n|α⟩|²`.
fn coherent_ln_mass(alpha2: f64, n: usize) -> f64 {
    if alpha2 == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -alpha2 + n as f64 * alpha2.ln() - ln_factorial(n)
}

fn coherent_amplitudes(alpha: Complex64, dim: usize) -> DVector<Complex64> {
    let mut amps = DVector::from_element(dim, C0);
    let mut c = Complex64::from((-0.5 * alpha.norm_sqr()).exp());
    for n in 0..dim {
        amps[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    amps
}

pub fn fock_coherent(alpha: Complex64, dim: usize) -> Result<FockState> {
    check_dim(dim)?;
    let a2 = alpha.norm_sqr();
    FockState::from_truncated(
        dim,
        1,
        coherent_amplitudes(alpha, dim),
        tail_mass(dim, |n| coherent_ln_mass(a2, n)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Cat state `(|α⟩ ± |−α⟩) / sqrt(2 ± 2 e^{-2|α|²})`.
pub fn fock_cat(alpha: Complex64, parity: Parity, dim: usize) -> Result<FockState> {
    check_dim(dim)?;
    let (sign, keep) = match parity {
        Parity::Even => (1.0, 0),
        Parity::Odd => (-1.0, 1),
    };
    let a2 = alpha.norm_sqr();
    let norm2 = 2.0 + sign * 2.0 * (-2.0 * a2).exp();
    if norm2 < 1e-300 {
        return Err(Error::InvalidParameter(
            "odd cat with zero amplitude is null".into(),
        ));
    }
    let plus = coherent_amplitudes(alpha, dim);
    let amps = DVector::from_fn(dim, |n, _| {
        if n % 2 == keep {
            plus[n] * 2.0 / norm2.sqrt()
        } else {
            C0
        }
    });
    let tail = tail_mass(dim, |n| {
        if n % 2 == keep {
            coherent_ln_mass(a2, n) + (4.0 / norm2).ln()
        } else {
            f64::NEG_INFINITY
        }
    });
    FockState::from_truncated(dim, 1, amps, tail)
}

/// `ln |c_{2k}|²` of the squeezed vacuum.
fn squeezed_ln_mass(r: f64, k: usize) -> f64 {
    let th = r.tanh();
    let pow = if k == 0 {
        0.0
    } else {
        2.0 * k as f64 * th.ln()
    };
    pow + ln_factorial(2 * k) - 2.0 * (k as f64 * 2f64.ln() + ln_factorial(k)) - r.cosh().ln()
}

/// Squeezed vacuum `exp(r/2 (a² - a†²))|0⟩`, reducing the x variance by `e^{-2r}`.
pub fn fock_squeezed_vacuum(r: f64, dim: usize) -> Result<FockState> {
    check_dim(dim)?;
    let mut amps = DVector::from_element(dim, C0);
    let mut c = 1.0 / r.cosh().sqrt();
    let th = -r.tanh();
    let mut n = 0usize;
    while 2 * n < dim {
        amps[2 * n] = Complex64::from(c);
        c *= th * ((2 * n + 1) as f64 / (2 * n + 2) as f64).sqrt();
        n += 1;
    }
    let tail = if r == 0.0 {
        0.0
    } else {
        tail_mass(dim.div_ceil(2), |k| squeezed_ln_mass(r, k))
    };
    FockState::from_truncated(dim, 1, amps, tail)
}

/// Applies `b = √t a0 + √(1-t) a1`, `c = √(1-t) a0 − √t a1` to a two-mode state.
///
/// Photon number is conserved exactly; amplitude pushed above the truncation
/// is reported as tail.
pub fn fock_beamsplitter(state: &FockState, t: f64) -> Result<FockState> {
    if state.modes != 2 {
        return Err(Error::InvalidParameter(
            "beamsplitter needs a two-mode state".into(),
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "transmissivity {t} outside [0, 1]"
        )));
    }
    let d = state.dim;
    let lf = ln_factorials(2 * d);
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let lnc = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let mut out = DVector::from_element(d * d, C0);
    let mut lost = 0.0;
    for n0 in 0..d {
        for n1 in 0..d {
            let amp = state.amplitudes[n0 * d + n1];
            if amp == C0 {
                continue;
            }
            let total = n0 + n1;
            // coefficients on |m, total - m⟩
            let mut row = vec![0.0; total + 1];
            for k in 0..=n0 {
                for l in 0..=n1 {
                    let m = k + l;
                    let log_mag =
                        lnc(n0, k) + lnc(n1, l) + 0.5 * (lf[m] + lf[total - m] - lf[n0] - lf[n1]);
                    let sign = if (n1 - l) % 2 == 0 { 1.0 } else { -1.0 };
                    row[m] += sign
                        * log_mag.exp()
                        * st.powi((k + n1 - l) as i32)
                        * sr.powi((n0 - k + l) as i32);
                }
            }
            for (m, coef) in row.into_iter().enumerate() {
                if m < d && total - m < d {
                    out[m * d + total - m] += amp * coef;
                } else {
                    lost += (amp * coef).norm_sqr();
                }
            }
        }
    }
    let tail = state.tail + lost;
    if tail >= TAIL_LIMIT {
        return Err(Error::TruncationOverflow {
            tail,
            limit: TAIL_LIMIT,
        });
    }
    Ok(FockState {
        dim: d,
        modes: 2,
        amplitudes: out,
        tail,
    })
}

/// Unnormalized `⟨α|_mode |ψ⟩`, as a vector on the remaining mode.
fn project_raw(state: &FockState, mode: usize, alpha: Complex64) -> DVector<Complex64> {
    let d = state.dim;
    let bra = coherent_amplitudes(alpha.conj(), d);
    DVector::from_fn(d, |keep, _| {
        (0..d)
            .map(|n| {
                let idx = if mode == 0 {
                    n * d + keep
                } else {
                    keep * d + n
                };
                bra[n] * state.amplitudes[idx]
            })
            .sum()
    })
}

/// Heterodyne projection of `mode` onto `⟨alpha|`.
///
/// Returns the normalized state of the other mode and the outcome density
/// `‖⟨α|ψ⟩‖² / π` (the Q function of the measured mode).
pub fn heterodyne_project(
    state: &FockState,
    mode: usize,
    alpha: Complex64,
) -> Result<(FockState, f64)> {
    if state.modes != 2 || mode > 1 {
        return Err(Error::InvalidParameter(
            "heterodyne projection needs a two-mode state and mode 0 or 1".into(),
        ));
    }
    let raw = project_raw(state, mode, alpha);
    let density = raw.norm_squared() / std::f64::consts::PI;
    if !(density > 0.0) {
        return Err(Error::InvalidParameter(
            "outcome has zero probability density".into(),
        ));
    }
    let norm = raw.norm();
    Ok((
        FockState {
            dim: state.dim,
            modes: 1,
            amplitudes: raw / Complex64::from(norm),
            tail: state.tail,
        },
        density,
    ))
}

/// Matrix of `⟨m|D(β)|n⟩` for `m, n < dim`.
pub fn displacement_matrix(beta: Complex64, dim: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(dim, dim, C0);
    let mut c = Complex64::from((-0.5 * beta.norm_sqr()).exp());
    let minus_conj = -beta.conj();
    for n in 0..dim {
        out[(0, n)] = c;
        c = c * minus_conj / ((n + 1) as f64).sqrt();
    }
    for m in 1..dim {
        let inv = 1.0 / (m as f64).sqrt();
        for n in 0..dim {
            let down = if n > 0 {
                out[(m - 1, n - 1)] * (n as f64).sqrt()
            } else {
                C0
            };
            out[(m, n)] = (down + beta * out[(m - 1, n)]) * inv;
        }
    }
    out
}

/// Applies the single-mode squeezer `exp(r/2 (a² − a†²))`, computed by matrix
/// exponential in a padded space and truncated back.
pub fn fock_squeeze(state: &FockState, r: f64) -> Result<FockState> {
    if state.modes != 1 {
        return Err(Error::InvalidParameter(
            "squeezer acts on single-mode states".into(),
        ));
    }
    let d = state.dim;
    let padded = 2 * d + 40;
    let mut generator = DMatrix::<f64>::zeros(padded, padded);
    for n in 0..padded - 2 {
        let v = 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt();
        generator[(n, n + 2)] = v;
        generator[(n + 2, n)] = -v;
    }
    let u = generator.exp();
    let sub = u.view((0, 0), (padded, d));
    let re = sub * state.amplitudes.map(|c| c.re);
    let im = sub * state.amplitudes.map(|c| c.im);
    let full = DVector::from_fn(padded, |i, _| Complex64::new(re[i], im[i]));
    let kept = full.rows(0, d).into_owned();
    let tail = state.tail + full.rows(d, padded - d).norm_squared();
    FockState::from_truncated(d, 1, kept, tail)
}

/// Outcome-plane integration rule: polar Gauss–Legendre in radius, uniform in angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockQuadrature {
    pub radial: usize,
    pub angular: usize,
}

impl Default for FockQuadrature {
    fn default() -> Self {
        FockQuadrature {
            radial: 64,
            angular: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockGateResult {
    /// Conditional output density matrix, trace-normalized over the kept basis.
    pub output: DMatrix<Complex64>,
    pub target: FockState,
    pub success_probability: f64,
    pub fidelity: f64,
    /// Output mass displaced beyond the truncation, relative to the accepted mass.
    pub truncation_tail: f64,
}

/// Runs the heralded gate on `input` in the number basis.
///
/// The output density is `∫ P_f(α) D(β) ⟨α|ψ⟩⟨ψ|α⟩ D(β)† d²α/π`, with the
/// feedforward amplitude `β` a linear function of the outcome, normalized by
/// the success probability.
pub fn heralded_gate_fock(
    cfg: &GateConfig,
    input: &FockState,
    quad: FockQuadrature,
) -> Result<FockGateResult> {
    if input.modes != 1 {
        return Err(Error::InvalidParameter(
            "gate input must be single-mode".into(),
        ));
    }
    if (cfg.t_m - 0.5).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "number-basis gate supports only t_m = 1/2".into(),
        ));
    }
    if !cfg.ancilla.is_pure(1e-9) || cfg.ancilla.angle != 0.0 {
        return Err(Error::InvalidParameter(
            "number-basis gate needs a pure ancilla squeezed along x".into(),
        ));
    }
    if cfg.eta_inloop != 1.0 || cfg.eta_verify != 1.0 {
        return Err(Error::InvalidParameter(
            "number-basis gate models lossless operation only".into(),
        ));
    }
    if quad.radial < 2 || quad.angular < 2 {
        return Err(Error::InvalidParameter(
            "quadrature needs at least 2 nodes per axis".into(),
        ));
    }
    let d = input.dim;
    let r_anc = -0.5 * cfg.ancilla.v_sq.ln();
    let anc = fock_squeezed_vacuum(r_anc, d)?;
    let state = fock_beamsplitter(&input.tensor(&anc)?, cfg.t_s)?;

    let ff = feedforward(cfg)?;
    let scale = [ff.calibration[0], ff.calibration[1]];
    let gains = &ff.gains;
    let filter = cfg.filter;

    // Gaussian envelope of the outcomes (calibrated units) sizes the grid.
    let envelope = joint(cfg, &input.gaussian_moments()?)?;
    let mean = DVector::from_fn(2, |i, _| envelope.mean[2 + i] * scale[i]);
    let cov = DMatrix::from_fn(2, 2, |i, j| {
        envelope.cov[(2 + i, 2 + j)] * scale[i] * scale[j]
    });
    let reach = |m: &DVector<f64>, c: &DMatrix<f64>| {
        m.norm() + 12.0 * c.symmetric_eigenvalues().max().sqrt()
    };
    let outer = reach(&mean, &cov);
    let inner = if filter.g_f == 1.0 {
        filter.alpha_c.min(outer)
    } else {
        match filter_outcome(&filter, &OutcomeGaussian::new(mean.clone(), cov.clone())?) {
            Ok(f) => filter.alpha_c.min(reach(&f.mean, &f.cov)),
            Err(Error::FilterBreakdown(_)) => filter.alpha_c,
            Err(e) => return Err(e),
        }
    };

    let (gx, gw) = gauss_legendre(quad.radial);
    let dtheta = 2.0 * std::f64::consts::PI / quad.angular as f64;
    let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
    let mut ring = |lo: f64, hi: f64| {
        if hi <= lo {
            return;
        }
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        for (x, w) in gx.iter().zip(&gw) {
            let rho = mid + half * x;
            for j in 0..quad.angular {
                let th = j as f64 * dtheta;
                nodes.push((rho * th.cos(), rho * th.sin(), w * half * rho * dtheta));
            }
        }
    };
    ring(0.0, inner);
    ring(filter.alpha_c, outer);

    // d²α = du_x du_y / (2 s_x s_y); the POVM carries 1/π
    let jac = 1.0 / (2.0 * scale[0] * scale[1] * std::f64::consts::PI);
    let chunk = 256;
    let partials: Vec<(DMatrix<Complex64>, f64, f64, f64)> = nodes
        .par_chunks(chunk)
        .map(|block| {
            let mut rho = DMatrix::from_element(d, d, C0);
            let mut mass = 0.0;
            let mut lost = 0.0;
            let mut bound = 0.0;
            for &(ux, uy, w) in block {
                let weight = w * jac * filter.accept_r2(ux * ux + uy * uy);
                if weight == 0.0 {
                    continue;
                }
                let m = [ux / scale[0], uy / scale[1]];
                let alpha = Complex64::new(m[0], m[1]) / std::f64::consts::SQRT_2;
                let phi = project_raw(&state, 1, alpha);
                let p = phi.norm_squared();
                // Cauchy–Schwarz bound on the projection of the discarded tail
                let a2 = alpha.norm_sqr();
                let bra_tail = if a2 > 0.0 {
                    gamma_lr(d as f64, a2)
                } else {
                    0.0
                };
                let miss = (bra_tail * state.tail).sqrt();
                bound += weight * miss * (2.0 * p.sqrt() + miss);
                let shift_x = gains[(0, 0)] * m[0] + gains[(0, 1)] * m[1];
                let shift_y = gains[(1, 0)] * m[0] + gains[(1, 1)] * m[1];
                let moved = displacement_matrix(Complex64::new(shift_x, shift_y) * 0.5, d) * &phi;
                mass += weight * p;
                lost += weight * (p - moved.norm_squared()).max(0.0);
                rho.ger(
                    Complex64::from(weight),
                    &moved,
                    &moved.conjugate(),
                    Complex64::from(1.0),
                );
            }
            (rho, mass, lost, bound)
        })
        .collect();
    let mut rho = DMatrix::from_element(d, d, C0);
    let mut mass = 0.0;
    let mut lost = 0.0;
    let mut bound = 0.0;
    for (r, m, l, b) in partials {
        rho += r;
        mass += m;
        lost += l;
        bound += b;
    }
    if !(mass > 0.0) {
        return Err(Error::QuadratureNonConvergence(
            "no accepted outcome mass on the grid".into(),
        ));
    }
    if bound / mass >= TAIL_LIMIT {
        return Err(Error::TruncationOverflow {
            tail: bound / mass,
            limit: TAIL_LIMIT,
        });
    }
    let truncation_tail = lost / mass;
    rho /= Complex64::from(mass);
    let target = fock_squeeze(input, cfg.r_t)?;
    let t = &target.amplitudes;
    let fidelity = (t.adjoint() * &rho * t)[(0, 0)].re.clamp(0.0, 1.0);
    Ok(FockGateResult {
        output: rho,
        target,
        success_probability: mass.min(1.0),
        fidelity,
        truncation_tail,
    })
}
