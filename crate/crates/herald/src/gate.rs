//! Analytic model of the heralded squeezing gate.
//!
//! Topology (mode labels used throughout):
//!
//! 1. the input and a squeezed ancilla meet on a beamsplitter of
//!    transmissivity `t_s`; `b` is the transmitted input port, `c` the other;
//! 2. `c` passes a loss of efficiency `eta_inloop`;
//! 3. `c` is split with vacuum on a beamsplitter `t_m`; the transmitted port
//!    is homodyned in y (the quadrature conjugate to the ancilla's squeezed
//!    axis) and, when `t_m < 1`, the reflected port in x. Outcome vectors are
//!    ordered `(x, y)`, or `(y)` alone for `t_m = 1`;
//! 4. each outcome quadrature is rescaled to α-units so that, for a coherent
//!    input, its marginal has the filter's reference variance 1/2;
//! 5. the filter heralds the run, and the outcome is fed forward to `b` as a
//!    displacement `G m`; `eta_verify` models the verifying detector.
//!
//! The gains `G` are chosen so that the heralded output mean equals the
//! ideal squeezed mean for every coherent input.
//!
//! For `t_m = 1`, `t_s = e^{-2 r_t}`. For `t_m < 1` both outcome quadratures
//! are fed forward and unity gain holds for any `t_s`, so `t_s` is the value
//! in `[0, 1]` that maximizes the unity-gain fidelity under the configured
//! filter (cutoff ignored).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filter::{self, FilterSpec, OutcomeGaussian};
use crate::gaussian::{
    apply, beamsplitter, coherent, fidelity, loss_channel, squeezed_vacuum, squeezer, vacuum,
    AncillaSpec, GaussianState,
};
use crate::units::db_to_r;

/// Default operational-regime guard: minimum filtered mass inside the cutoff.
pub const DEFAULT_REGIME_COVERAGE: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub r_t: f64,
    pub ancilla: AncillaSpec,
    pub t_s: f64,
    pub t_m: f64,
    /// Feedforward gains override (2 x outcomes, raw quadrature units).
    pub gains: Option<DMatrix<f64>>,
    pub filter: FilterSpec,
    pub eta_inloop: f64,
    pub eta_verify: f64,
    pub regime_coverage: f64,
}

impl GateConfig {
    /// Ideal-efficiency gate with `t_s` solved for unity gain.
    pub fn new(r_t: f64, ancilla: AncillaSpec, t_m: f64, filter: FilterSpec) -> Result<Self> {
        if !(r_t >= 0.0) || !r_t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "target squeezing r_t = {r_t} must be >= 0"
            )));
        }
        if !(t_m > 0.0 && t_m <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_m = {t_m} outside (0,1]"
            )));
        }
        let dims = outcome_dims(t_m);
        if filter.dims != dims {
            return Err(Error::InvalidParameter(format!(
                "t_m = {t_m} produces {dims}-dimensional outcomes but the filter expects {}",
                filter.dims
            )));
        }
        let mut cfg = GateConfig {
            r_t,
            ancilla,
            t_s: 1.0,
            t_m,
            gains: None,
            filter,
            eta_inloop: 1.0,
            eta_verify: 1.0,
            regime_coverage: DEFAULT_REGIME_COVERAGE,
        };
        cfg.t_s = transmissivity_rule(&cfg)?;
        Ok(cfg)
    }

    /// Same as [`GateConfig::new`] with the target given in dB.
    pub fn from_db(
        target_db: f64,
        ancilla: AncillaSpec,
        t_m: f64,
        filter: FilterSpec,
    ) -> Result<Self> {
        Self::new(db_to_r(target_db), ancilla, t_m, filter)
    }

    /// Sets detector efficiencies; `t_s` is re-solved since it depends on `eta_inloop`.
    pub fn with_efficiencies(mut self, eta_inloop: f64, eta_verify: f64) -> Result<Self> {
        for (name, eta) in [("eta_inloop", eta_inloop), ("eta_verify", eta_verify)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {eta} outside (0,1]"
                )));
            }
        }
        self.eta_inloop = eta_inloop;
        self.eta_verify = eta_verify;
        self.t_s = transmissivity_rule(&self)?;
        Ok(self)
    }

    /// Replaces the filter; for `t_m < 1` the transmissivity is re-solved.
    pub fn with_filter(mut self, filter: FilterSpec) -> Result<Self> {
        if filter.dims != self.dims() {
            return Err(Error::InvalidParameter(
                "filter dimension does not match t_m".into(),
            ));
        }
        self.filter = filter;
        self.t_s = transmissivity_rule(&self)?;
        Ok(self)
    }

    /// Overrides the transmissivity; gains are still solved for it.
    pub fn with_t_s(mut self, t_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_s) {
            return Err(Error::InvalidParameter(format!(
                "t_s = {t_s} outside [0,1]"
            )));
        }
        self.t_s = t_s;
        Ok(self)
    }

    /// Replaces the solved gains by fixed ones (raw quadrature units).
    pub fn with_gains(mut self, gains: DMatrix<f64>) -> Result<Self> {
        if gains.shape() != (2, self.dims()) {
            return Err(Error::InvalidParameter(format!(
                "gains must be 2x{}",
                self.dims()
            )));
        }
        self.gains = Some(gains);
        Ok(self)
    }

    /// Sets filter strength `g_f` with the cutoff chosen by [`coverage_cutoff`]
    /// for `probe`, after `t_s` has been re-solved for that strength.
    pub fn with_coverage_filter(
        self,
        g_f: f64,
        probe: &GaussianState,
        coverage: f64,
    ) -> Result<Self> {
        let dims = self.dims();
        let mut cfg = self.with_filter(FilterSpec::new(g_f, 1.0, dims)?)?;
        if g_f > 1.0 {
            // t_s ignores the cutoff, so it stays valid
            cfg.filter.alpha_c = coverage_cutoff(&cfg, probe, g_f, coverage)?;
        }
        Ok(cfg)
    }

    pub fn with_regime_coverage(mut self, coverage: f64) -> Self {
        self.regime_coverage = coverage;
        self
    }

    /// Number of in-loop outcome quadratures.
    pub fn dims(&self) -> usize {
        outcome_dims(self.t_m)
    }

    pub fn target_db(&self) -> f64 {
        crate::units::r_to_db(self.r_t)
    }
}

fn outcome_dims(t_m: f64) -> usize {
    if t_m == 1.0 {
        1
    } else {
        2
    }
}

/// Joint Gaussian of the transmitted mode `b` (first two rows) and the raw
/// in-loop outcomes (remaining rows).
#[derive(Debug, Clone)]
pub struct Joint {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Joint {
    fn d(&self) -> usize {
        self.mean.len() - 2
    }
    fn zz(&self) -> DMatrix<f64> {
        self.cov.view((0, 0), (2, 2)).into_owned()
    }
    fn zm(&self) -> DMatrix<f64> {
        self.cov.view((0, 2), (2, self.d())).into_owned()
    }
    fn mm(&self) -> DMatrix<f64> {
        self.cov.view((2, 2), (self.d(), self.d())).into_owned()
    }
    fn mu_z(&self) -> DVector<f64> {
        self.mean.rows(0, 2).into_owned()
    }
    fn mu_m(&self) -> DVector<f64> {
        self.mean.rows(2, self.d()).into_owned()
    }
}

/// Propagates `input` through the gate up to the in-loop detectors.
pub fn joint(cfg: &GateConfig, input: &GaussianState) -> Result<Joint> {
    if input.nmodes() != 1 {
        return Err(Error::InvalidParameter(
            "gate input must be single-mode".into(),
        ));
    }
    let state = input
        .tensor(&squeezed_vacuum(&cfg.ancilla))
        .tensor(&vacuum(1)?);
    let state = apply(&state, &beamsplitter(3, (0, 1), cfg.t_s)?)?;
    let state = loss_channel(&state, 1, cfg.eta_inloop)?;
    let state = apply(&state, &beamsplitter(3, (1, 2), cfg.t_m)?)?;
    // transmitted split port (mode 1) gives y, reflected (mode 2) gives x
    let rows: Vec<usize> = if cfg.dims() == 1 {
        vec![0, 1, 3]
    } else {
        vec![0, 1, 4, 3]
    };
    Ok(Joint {
        mean: state.mean().select_rows(&rows),
        cov: state.cov().select_rows(&rows).select_columns(&rows),
    })
}

/// Linear maps from the input mean to the mean of `b` and of the outcomes.
fn mean_maps(cfg: &GateConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = cfg.dims();
    let zero = joint(cfg, &vacuum(1)?)?;
    let mut b = DMatrix::zeros(2, 2);
    let mut a = DMatrix::zeros(d, 2);
    for q in 0..2 {
        let mut mean = DVector::zeros(2);
        mean[q] = 1.0;
        let unit = GaussianState::new(mean, DMatrix::identity(2, 2))?;
        let j = joint(cfg, &unit)?;
        let diff = &j.mean - &zero.mean;
        b.set_column(q, &diff.rows(0, 2));
        a.set_column(q, &diff.rows(2, d));
    }
    Ok((b, a))
}

/// Per-quadrature scale taking raw outcomes to α-units: a coherent input
/// yields marginal variance 1/2 in each.
pub fn calibration(cfg: &GateConfig) -> Result<DVector<f64>> {
    let reference = joint(cfg, &vacuum(1)?)?;
    let mm = reference.mm();
    let scale = DVector::from_iterator(
        mm.nrows(),
        (0..mm.nrows()).map(|i| 1.0 / (2.0 * mm[(i, i)]).sqrt()),
    );
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateMeasurement(0.0));
    }
    Ok(scale)
}

/// Transmissivity for the configured target (see module docs).
pub fn transmissivity_rule(cfg: &GateConfig) -> Result<f64> {
    if cfg.t_m == 1.0 {
        return Ok((-2.0 * cfg.r_t).exp());
    }
    // at unity gain the fidelity does not depend on the input mean, so the vacuum probe scores t_s
    let probe = vacuum(1)?;
    let mut trial = cfg.clone();
    trial.gains = None;
    trial.regime_coverage = 0.0;
    let score = |t: f64| -> f64 {
        let mut c = trial.clone();
        c.t_s = t;
        heralded_output(&c, &probe)
            .map(|r| r.fidelity)
            .unwrap_or(f64::NEG_INFINITY)
    };
    const STEPS: usize = 65;
    let grid: Vec<f64> = (0..STEPS).map(|k| k as f64 / (STEPS - 1) as f64).collect();
    let scores: Vec<f64> = grid.iter().map(|&t| score(t)).collect();
    let best = (0..STEPS)
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap();
    if !scores[best].is_finite() {
        return Err(Error::NoUnityGain(
            "no transmissivity admits a unity-gain feedforward".into(),
        ));
    }
    // golden-section refinement inside the neighbouring grid cells
    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(STEPS - 1)],
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (score(a), score(b));
    while hi - lo > 1e-10 {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = score(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = score(b);
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(if score(t) >= scores[best] {
        t
    } else {
        grid[best]
    })
}

/// Transmissivity and feedforward of a unity-gain gate.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitySolution {
    pub t_s: f64,
    /// Feedforward gains, 2 x outcomes, acting on raw outcomes.
    pub gains: DMatrix<f64>,
    /// Raw-to-α scale per outcome quadrature.
    pub calibration: DVector<f64>,
}

/// Solves `t_s` and the gains for the given target, resources and filter.
pub fn unity_gain_solve(
    r_t: f64,
    t_m: f64,
    ancilla: AncillaSpec,
    filter: FilterSpec,
    eta_inloop: f64,
) -> Result<UnitySolution> {
    let cfg = GateConfig::new(r_t, ancilla, t_m, filter)?.with_efficiencies(eta_inloop, 1.0)?;
    let (gains, calibration) = solve_gains(&cfg)?;
    Ok(UnitySolution {
        t_s: cfg.t_s,
        gains,
        calibration,
    })
}

fn diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

/// Unity-gain feedforward for the configured `t_s`, returned in raw units
/// together with the calibration.
fn solve_gains(cfg: &GateConfig) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let scale = calibration(cfg)?;
    let dmat = diag(&scale);
    let reference = joint(cfg, &vacuum(1)?)?;
    let (b, a) = mean_maps(cfg)?;
    let sa = &dmat * reference.mm() * &dmat;
    let ca = reference.zm() * &dmat;
    let aa = &dmat * &a;
    let sa_inv = sa
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMeasurement(0.0))?;
    let filtered = filter::filter_outcome(
        &cfg.filter,
        &OutcomeGaussian::new(DVector::zeros(cfg.dims()), sa.clone())?,
    )?;
    let amplify = &filtered.cov * &sa_inv;
    let k = &ca * &sa_inv;
    let target = squeeze_matrix(cfg.r_t);
    let rhs = &target - &b + &k * &aa;
    let lhs = &amplify * &aa;
    let h = if cfg.dims() == 2 {
        // least squares, so a singular map still works when the target needs no feedforward
        let pinv = lhs
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::NoUnityGain(e.into()))?;
        let h = &rhs * pinv;
        let resid = (&rhs - &h * &lhs).amax();
        if resid > 1e-9 * (1.0 + rhs.amax()) {
            return Err(Error::NoUnityGain(format!(
                "outcome mean map is singular (residual {resid:.3e})"
            )));
        }
        h
    } else {
        let row = lhs.row(0).transpose();
        let norm2 = row.norm_squared();
        if rhs.amax() < 1e-14 {
            return Ok((DMatrix::zeros(2, 1), scale));
        }
        if norm2 < 1e-300 {
            return Err(Error::NoUnityGain(
                "outcome carries no information on the input".into(),
            ));
        }
        let h = DMatrix::from_column_slice(2, 1, (&rhs * &row / norm2).as_slice());
        let resid = (&rhs - &h * row.transpose()).amax();
        if resid > 1e-9 * (1.0 + rhs.amax()) {
            return Err(Error::NoUnityGain(format!(
                "single-quadrature feedforward leaves mean residual {resid:.3e}"
            )));
        }
        h
    };
    let gains_alpha = h - k;
    Ok((gains_alpha * dmat, scale))
}

/// The feedforward actually used by a configuration: override or solved.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedforward {
    pub gains: DMatrix<f64>,
    pub calibration: DVector<f64>,
    pub overridden: bool,
}

pub fn feedforward(cfg: &GateConfig) -> Result<Feedforward> {
    match &cfg.gains {
        Some(g) => Ok(Feedforward {
            gains: g.clone(),
            calibration: calibration(cfg)?,
            overridden: true,
        }),
        None => {
            let (gains, calibration) = solve_gains(cfg)?;
            Ok(Feedforward {
                gains,
                calibration,
                overridden: false,
            })
        }
    }
}

fn squeeze_matrix(r: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[(-r).exp(), 0.0, 0.0, r.exp()])
}

pub fn target_state(input: &GaussianState, r_t: f64) -> Result<GaussianState> {
    apply(input, &squeezer(1, 0, r_t, 0.0)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub output: GaussianState,
    pub target: GaussianState,
    pub fidelity: f64,
    pub success_probability: f64,
    /// Unfiltered in-loop outcome distribution, α-units.
    pub outcome_marginal: OutcomeGaussian,
    /// Filtered mass inside the cutoff (1 for the deterministic gate).
    pub coverage: f64,
    pub t_s: f64,
    pub gains: DMatrix<f64>,
    pub gains_overridden: bool,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &GateConfig,
    input: &GaussianState,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    success_probability: f64,
    outcome_marginal: OutcomeGaussian,
    coverage: f64,
    ff: Feedforward,
) -> Result<GateResult> {
    let output = loss_channel(&GaussianState::new(mean, cov)?, 0, cfg.eta_verify)?;
    let target = target_state(input, cfg.r_t)?;
    let fidelity = fidelity(&output, &target)?;
    Ok(GateResult {
        output,
        target,
        fidelity,
        success_probability,
        outcome_marginal,
        coverage,
        t_s: cfg.t_s,
        gains: ff.gains,
        gains_overridden: ff.overridden,
    })
}

fn alpha_marginal(j: &Joint, scale: &DVector<f64>) -> Result<OutcomeGaussian> {
    let dmat = diag(scale);
    OutcomeGaussian::new(&dmat * j.mu_m(), &dmat * j.mm() * &dmat)
}

/// Deterministic gate: unconditional propagation `z_b + G m` of the joint state.
pub fn conventional_output(cfg: &GateConfig, input: &GaussianState) -> Result<GateResult> {
    if cfg.filter.g_f != 1.0 {
        return Err(Error::InvalidParameter(
            "conventional gate requires g_f = 1".into(),
        ));
    }
    let ff = feedforward(cfg)?;
    let j = joint(cfg, input)?;
    let d = j.d();
    let mut map = DMatrix::zeros(2, 2 + d);
    map.view_mut((0, 0), (2, 2)).fill_with_identity();
    map.view_mut((0, 2), (2, d)).copy_from(&ff.gains);
    let mean = &map * &j.mean;
    let cov = &map * &j.cov * map.transpose();
    let marginal = alpha_marginal(&j, &ff.calibration)?;
    finish(cfg, input, mean, cov, 1.0, marginal, 1.0, ff)
}

/// How the accepted outcome ensemble enters the output moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeModel {
    /// Gaussian filter law, cutoff ignored beyond the regime guard.
    FilterLaw,
    /// Exact first and second moments of the accepted outcomes, cutoff included.
    ExactMoments,
}

/// Heralded gate with the Gaussian filter law.
pub fn heralded_output(cfg: &GateConfig, input: &GaussianState) -> Result<GateResult> {
    heralded_output_with(cfg, input, OutcomeModel::FilterLaw)
}

/// Heralded gate. The output is the conditional state of `b` given the
/// outcome, averaged over the accepted outcomes and displaced by the feedforward.
pub fn heralded_output_with(
    cfg: &GateConfig,
    input: &GaussianState,
    model: OutcomeModel,
) -> Result<GateResult> {
    let ff = feedforward(cfg)?;
    let j = joint(cfg, input)?;
    let dmat = diag(&ff.calibration);
    let dinv = diag(&ff.calibration.map(|s| 1.0 / s));
    let marginal = alpha_marginal(&j, &ff.calibration)?;
    let ca = j.zm() * &dmat;
    let sa_inv = marginal
        .cov
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMeasurement(0.0))?;
    let k = &ca * &sa_inv;
    let cond_cov = j.zz() - &k * ca.transpose();
    let gains_alpha = &ff.gains * &dinv;
    let h = &k + &gains_alpha;

    let filtered = filter::filter_outcome(&cfg.filter, &marginal)?;
    let (acc_mean, acc_cov, success) = match model {
        OutcomeModel::FilterLaw => {
            if cfg.filter.g_f > 1.0 && filtered.coverage < cfg.regime_coverage {
                return Err(Error::OperationalRegime {
                    coverage: filtered.coverage,
                    required: cfg.regime_coverage,
                });
            }
            let p = filter::outcome_success_probability(&cfg.filter, &marginal)?;
            (filtered.mean.clone(), filtered.cov.clone(), p)
        }
        OutcomeModel::ExactMoments => {
            let acc = filter::accepted_moments(&cfg.filter, &marginal)?;
            (acc.mean, acc.cov, acc.probability)
        }
    };
    let mean = j.mu_z() + &k * (&acc_mean - &marginal.mean) + &gains_alpha * &acc_mean;
    let cov = cond_cov + &h * acc_cov * h.transpose();
    let coverage = if cfg.filter.g_f == 1.0 {
        1.0
    } else {
        filtered.coverage
    };
    finish(cfg, input, mean, cov, success, marginal, coverage, ff)
}

/// Ideal deterministic fidelity for a resource/target pair.
pub fn deterministic_limit(ancilla: AncillaSpec, r_t: f64, t_m: f64) -> Result<f64> {
    let cfg = GateConfig::new(r_t, ancilla, t_m, FilterSpec::identity(outcome_dims(t_m)))?;
    Ok(conventional_output(&cfg, &vacuum(1)?)?.fidelity)
}

/// Cutoff that keeps `coverage` of the filtered outcomes of `input` inside,
/// from the `g² |α_m| + β g σ/√2` rule with the smallest sufficient β.
pub fn coverage_cutoff(
    cfg: &GateConfig,
    input: &GaussianState,
    g_f: f64,
    coverage: f64,
) -> Result<f64> {
    let ff = feedforward(cfg)?;
    let marginal = alpha_marginal(&joint(cfg, input)?, &ff.calibration)?;
    Ok(filter::cutoff_for_coverage(g_f, &marginal, coverage)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffRule {
    Fixed(f64),
    /// Coverage target for the probe input (vacuum) at each filter strength.
    Coverage(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub g_f: f64,
    pub alpha_c: f64,
    pub success_probability: f64,
    pub fidelity: f64,
}

/// Fidelity and success probability along a grid of filter strengths, for
/// an ideal gate with a vacuum probe input.
pub fn tradeoff_curve(
    ancilla: AncillaSpec,
    r_t: f64,
    t_m: f64,
    grid: &[f64],
    rule: CutoffRule,
) -> Result<Vec<TradeoffPoint>> {
    let probe = coherent(Complex64::new(0.0, 0.0));
    let dims = outcome_dims(t_m);
    let base = GateConfig::new(r_t, ancilla, t_m, FilterSpec::identity(dims))?;
    grid.iter()
        .map(|&g| {
            let cfg = match rule {
                CutoffRule::Fixed(c) => base.clone().with_filter(FilterSpec::new(g, c, dims)?)?,
                CutoffRule::Coverage(c) => base.clone().with_coverage_filter(g, &probe, c)?,
            };
            let res = heralded_output(&cfg, &probe)?;
            Ok(TradeoffPoint {
                g_f: g,
                alpha_c: cfg.filter.alpha_c,
                success_probability: res.success_probability,
                fidelity: res.fidelity,
            })
        })
        .collect()
}
