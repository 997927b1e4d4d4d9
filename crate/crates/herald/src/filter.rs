//! The heralding filter.
//!
//! An outcome `alpha` (in α-units, where a coherent kernel has variance 1/2
//! per dimension) is accepted with probability
//!
//! ```text
//! P(alpha) = exp[(1 - 1/g)(|alpha|² - alpha_c²)]   for |alpha| < alpha_c
//!          = 1                                    otherwise
//! ```
//!
//! Acting on a Gaussian ensemble of per-dimension variance `V`, the filter
//! multiplies the density by `exp(λ|alpha|²)`, `λ = 1 - 1/g`, which keeps it
//! Gaussian with variance `V/(1 - 2λV)` and mean `μ/(1 - 2λV)` as long as
//! `2λV < 1`. For `V = 1/2` both are amplified by exactly `g`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, norm_interval, norm_pdf, norm_sf};

const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub g_f: f64,
    pub alpha_c: f64,
    pub dims: usize,
}

impl FilterSpec {
    pub fn new(g_f: f64, alpha_c: f64, dims: usize) -> Result<Self> {
        if !(g_f >= 1.0) || !g_f.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "filter strength {g_f} must be >= 1"
            )));
        }
        if !(alpha_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {alpha_c} must be > 0"
            )));
        }
        if dims != 1 && dims != 2 {
            return Err(Error::InvalidParameter(format!(
                "outcome dimension {dims} must be 1 or 2"
            )));
        }
        Ok(FilterSpec { g_f, alpha_c, dims })
    }

    /// The deterministic (pass-everything) filter.
    pub fn identity(dims: usize) -> Self {
        FilterSpec {
            g_f: 1.0,
            alpha_c: 1.0,
            dims,
        }
    }

    /// Exponent coefficient `1 - 1/g_f`.
    pub fn lambda(&self) -> f64 {
        1.0 - 1.0 / self.g_f
    }

    /// Acceptance probability for an outcome of squared magnitude `r2`.
    #[inline]
    pub fn accept_r2(&self, r2: f64) -> f64 {
        let c2 = self.alpha_c * self.alpha_c;
        if self.g_f == 1.0 || r2 >= c2 {
            1.0
        } else {
            (self.lambda() * (r2 - c2)).exp()
        }
    }

    /// Acceptance probability of a complex outcome; single-quadrature filters
    /// read only the real part.
    pub fn acceptance_probability(&self, alpha: Complex64) -> f64 {
        let r2 = if self.dims == 1 {
            alpha.re * alpha.re
        } else {
            alpha.norm_sqr()
        };
        self.accept_r2(r2)
    }
}

/// Converts a raw homodyne outcome `x` (vacuum variance 1) to α-units.
pub fn quadrature_to_alpha(x: f64) -> f64 {
    x / 2.0
}

/// Gaussian distribution of in-loop outcomes, in α-units.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl OutcomeGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d != 1 && d != 2 || cov.shape() != (d, d) {
            return Err(Error::InvalidParameter(
                "outcome Gaussian must be 1- or 2-dimensional".into(),
            ));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        if cov.clone().cholesky().is_none() {
            return Err(Error::DegenerateMeasurement(cov.determinant()));
        }
        Ok(OutcomeGaussian { mean, cov })
    }

    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::identity(d, d) * variance,
        )
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Total RMS spread `sqrt(tr cov)`.
    pub fn spread(&self) -> f64 {
        self.cov.trace().sqrt()
    }
}

/// The filtered ensemble: Gaussian moments after multiplication by
/// `exp(λ|alpha|²)`, the mass factor of that multiplication, and the filtered
/// mass inside the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weight: f64,
    pub coverage: f64,
}

impl FilteredGaussian {
    /// Per-dimension variance (first diagonal entry; the isotropic case).
    pub fn variance(&self) -> f64 {
        self.cov[(0, 0)]
    }

    pub fn as_outcome(&self) -> OutcomeGaussian {
        OutcomeGaussian {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

fn check_dims(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<()> {
    if spec.dims != outcome.dims() {
        return Err(Error::InvalidParameter(format!(
            "filter expects {}-dimensional outcomes, got {}",
            spec.dims,
            outcome.dims()
        )));
    }
    Ok(())
}

/// Moments of the ensemble reshaped by the filter's exponential, ignoring the cutoff.
fn tilt(lambda: f64, outcome: &OutcomeGaussian) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let d = outcome.dims();
    let prec = outcome
        .cov
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMeasurement(0.0))?;
    let tilted = &prec - DMatrix::identity(d, d) * (2.0 * lambda);
    let worst = 2.0 * lambda * outcome.cov.symmetric_eigenvalues().max();
    let chol = tilted
        .clone()
        .cholesky()
        .ok_or(Error::FilterBreakdown(worst))?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mean = &cov * (&prec * &outcome.mean);
    // weight = sqrt(det Σ'/det Σ) exp(½ μ'ᵀΣ'⁻¹μ' − ½ μᵀΣ⁻¹μ)
    let q_new = (mean.transpose() * &tilted * &mean)[(0, 0)];
    let q_old = (outcome.mean.transpose() * &prec * &outcome.mean)[(0, 0)];
    let log_w = 0.5 * (cov.determinant() / outcome.cov.determinant()).ln() + 0.5 * (q_new - q_old);
    Ok((mean, cov, log_w))
}

/// Applies the filter law to a general outcome Gaussian.
pub fn filter_outcome(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<FilteredGaussian> {
    check_dims(spec, outcome)?;
    let lambda = spec.lambda();
    let (mean, cov, log_w) = tilt(lambda, outcome)?;
    let weight = (log_w - lambda * spec.alpha_c * spec.alpha_c).exp();
    let (coverage, _) = region_mass(&mean, &cov, spec.alpha_c)?;
    Ok(FilteredGaussian {
        mean,
        cov,
        weight,
        coverage,
    })
}

/// Filter law for an isotropic ensemble of variance `variance` per dimension.
pub fn filtered_gaussian(
    spec: &FilterSpec,
    mean: &[f64],
    variance: f64,
) -> Result<FilteredGaussian> {
    filter_outcome(spec, &OutcomeGaussian::isotropic(mean, variance)?)
}

/// Probability that an outcome drawn from `outcome` is accepted.
pub fn outcome_success_probability(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<f64> {
    check_dims(spec, outcome)?;
    if spec.g_f == 1.0 {
        return Ok(1.0);
    }
    let (_, outside) = region_mass(&outcome.mean, &outcome.cov, spec.alpha_c)?;
    match filter_outcome(spec, outcome) {
        Ok(f) if (f.weight * f.coverage).is_finite() => Ok(f.weight * f.coverage + outside),
        // near breakdown the closed form is inf · 0
        Ok(_) | Err(Error::FilterBreakdown(_)) => Ok(tilted_inside_mass(spec, outcome)? + outside),
        Err(e) => Err(e),
    }
}

/// Success probability for an isotropic outcome ensemble.
pub fn success_probability(spec: &FilterSpec, mean: &[f64], variance: f64) -> Result<f64> {
    outcome_success_probability(spec, &OutcomeGaussian::isotropic(mean, variance)?)
}

/// Filtered mass inside the cutoff for an isotropic outcome ensemble.
pub fn coverage_fraction(spec: &FilterSpec, mean: &[f64], variance: f64) -> Result<f64> {
    Ok(filtered_gaussian(spec, mean, variance)?.coverage)
}

/// Cutoff rule `alpha_c = g² |alpha_m| + β g σ / √2`.
pub fn recommended_cutoff(g_f: f64, outcome_magnitude: f64, sigma: f64, beta: f64) -> f64 {
    g_f * g_f * outcome_magnitude + beta * g_f * sigma / std::f64::consts::SQRT_2
}

/// Smallest `β ≥ 0` whose cutoff keeps at least `target` of the filtered
/// ensemble inside. Returns `(alpha_c, beta)`.
pub fn cutoff_for_coverage(g_f: f64, outcome: &OutcomeGaussian, target: f64) -> Result<(f64, f64)> {
    if !(0.0 < target && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "coverage target {target} outside (0,1)"
        )));
    }
    let lambda = 1.0 - 1.0 / g_f;
    let (mean, cov, _) = tilt(lambda, outcome)?;
    let magnitude = outcome.mean.norm();
    let sigma = outcome.spread();
    let base = recommended_cutoff(g_f, magnitude, sigma, 0.0);
    let cover = |c: f64| region_mass(&mean, &cov, c).map(|m| m.0);
    if base > 0.0 && cover(base)? >= target {
        return Ok((base, 0.0));
    }
    let step = g_f * sigma / std::f64::consts::SQRT_2;
    let (mut lo, mut hi) = (0.0, 1.0);
    while cover(recommended_cutoff(g_f, magnitude, sigma, hi))? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::QuadratureNonConvergence(
                "coverage root not bracketed".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cover(recommended_cutoff(g_f, magnitude, sigma, mid))? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) * step < 1e-13 * (1.0 + base) {
            break;
        }
    }
    Ok((recommended_cutoff(g_f, magnitude, sigma, hi), hi))
}

/// Mass of `N(mean, cov)` inside and outside the region `|alpha| < radius`
/// (an interval in one dimension, a disk in two).
pub fn region_mass(mean: &DVector<f64>, cov: &DMatrix<f64>, radius: f64) -> Result<(f64, f64)> {
    match mean.len() {
        1 => {
            let s = cov[(0, 0)].sqrt();
            let (a, b) = ((-radius - mean[0]) / s, (radius - mean[0]) / s);
            let inside = norm_interval(a, b);
            let outside = norm_sf(b) + norm_sf(-a);
            Ok((inside, outside))
        }
        2 => disk_mass(mean, cov, radius),
        d => Err(Error::InvalidParameter(format!(
            "unsupported outcome dimension {d}"
        ))),
    }
}

/// Shape of a 2-D Gaussian for the chord decomposition `p(x, y) = p(x) p(y|x)`.
struct Chords {
    mx: f64,
    sx: f64,
    my: f64,
    slope: f64,
    s: f64,
    radius: f64,
}

impl Chords {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, radius: f64) -> Self {
        let vx = cov[(0, 0)];
        let slope = cov[(0, 1)] / vx;
        let s = (cov[(1, 1)] - cov[(0, 1)] * slope).max(1e-300).sqrt();
        Chords {
            mx: mean[0],
            sx: vx.sqrt(),
            my: mean[1],
            slope,
            s,
            radius,
        }
    }

    /// Integrates `g(x, half_chord, cond_mean, cond_sd) · p(x)` over `|x| < radius`
    /// with the substitution `x = radius · sin θ`.
    fn integrate<G: Fn(f64, f64, f64, f64) -> f64>(&self, g: G, abs: f64) -> Result<f64> {
        let r = self.radius;
        let mut breaks = Vec::new();
        for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
            let u = (self.mx + k * self.sx) / r;
            if u.abs() < 1.0 {
                breaks.push(u.asin());
            }
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        integrate(
            |th: f64| {
                let (sn, cs) = th.sin_cos();
                let x = r * sn;
                let h = r * cs;
                let px = norm_pdf((x - self.mx) / self.sx) / self.sx;
                let m = self.my + self.slope * (x - self.mx);
                g(x, h, m, self.s) * px * h
            },
            -half_pi,
            half_pi,
            &breaks,
            REL_TOL,
            abs,
        )
    }
}

fn disk_mass(mean: &DVector<f64>, cov: &DMatrix<f64>, radius: f64) -> Result<(f64, f64)> {
    let ch = Chords::new(mean, cov, radius);
    let inside = ch.integrate(
        |_, h, m, s| norm_interval((-h - m) / s, (h - m) / s),
        1e-300,
    )?;
    let beyond_x = norm_sf((radius - ch.mx) / ch.sx) + norm_sf((radius + ch.mx) / ch.sx);
    let off_chord = ch.integrate(
        |_, h, m, s| norm_sf((h - m) / s) + norm_sf((h + m) / s),
        1e-300,
    )?;
    Ok((
        inside.clamp(0.0, 1.0),
        (beyond_x + off_chord).clamp(0.0, 1.0),
    ))
}

/// Mass of an isotropic 2-D Gaussian inside a disk, from the noncentral
/// chi-square (Marcum-Q) series. Independent of [`region_mass`].
pub fn marcum_disk_mass(offset: f64, variance: f64, radius: f64) -> f64 {
    let a = offset * offset / (2.0 * variance);
    let y = radius * radius / (2.0 * variance);
    let kmax = (a + 20.0 * a.sqrt() + 60.0) as usize;
    let mut log_pois = -a;
    let mut total = 0.0;
    for k in 0..=kmax {
        if k > 0 {
            log_pois += a.ln() - (k as f64).ln();
        }
        total += log_pois.exp() * gamma_lr(k as f64 + 1.0, y);
    }
    total
}

/// Inside-cutoff mass of the tilted density computed by direct quadrature;
/// valid whether or not the tilted density is normalizable.
fn tilted_inside_mass(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<f64> {
    tilted_inside_integral(spec, outcome, |_, _| 1.0, 1e-300)
}

/// Raw moments of the tilted density inside the cutoff, by direct quadrature.
fn tilted_inside_moments(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<RawMoments> {
    let mass = tilted_inside_mass(spec, outcome)?;
    // |x|, |y| < alpha_c inside, which bounds every moment by the mass
    let c = spec.alpha_c.max(1.0);
    let (abs1, abs2) = (
        (REL_TOL * mass * c).max(1e-300),
        (REL_TOL * mass * c * c).max(1e-300),
    );
    if outcome.dims() == 1 {
        let m1 = tilted_inside_integral(spec, outcome, |x, _| x, abs1)?;
        let m2 = tilted_inside_integral(spec, outcome, |x, _| x * x, abs2)?;
        return Ok((
            mass,
            DVector::from_element(1, m1),
            DMatrix::from_element(1, 1, m2),
        ));
    }
    let mx = tilted_inside_integral(spec, outcome, |x, _| x, abs1)?;
    let my = tilted_inside_integral(spec, outcome, |_, y| y, abs1)?;
    let xx = tilted_inside_integral(spec, outcome, |x, _| x * x, abs2)?;
    let xy = tilted_inside_integral(spec, outcome, |x, y| x * y, abs2)?;
    let yy = tilted_inside_integral(spec, outcome, |_, y| y * y, abs2)?;
    Ok((
        mass,
        DVector::from_vec(vec![mx, my]),
        DMatrix::from_row_slice(2, 2, &[xx, xy, xy, yy]),
    ))
}

fn tilted_inside_integral<H: Fn(f64, f64) -> f64>(
    spec: &FilterSpec,
    outcome: &OutcomeGaussian,
    h_fn: H,
    abs: f64,
) -> Result<f64> {
    let lambda = spec.lambda();
    let c = spec.alpha_c;
    let prec = outcome
        .cov
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMeasurement(0.0))?;
    let norm = 1.0
        / ((2.0 * std::f64::consts::PI).powi(outcome.dims() as i32) * outcome.cov.determinant())
            .sqrt();
    match outcome.dims() {
        1 => {
            let (m, v) = (outcome.mean[0], outcome.cov[(0, 0)]);
            integrate(
                |a| {
                    h_fn(a, 0.0)
                        * norm
                        * (-0.5 * (a - m) * (a - m) / v + lambda * (a * a - c * c)).exp()
                },
                -c,
                c,
                &[m.clamp(-c, c)],
                REL_TOL,
                abs,
            )
        }
        _ => {
            let mu = &outcome.mean;
            let density = |x: f64, y: f64| {
                let (dx, dy) = (x - mu[0], y - mu[1]);
                let q =
                    prec[(0, 0)] * dx * dx + 2.0 * prec[(0, 1)] * dx * dy + prec[(1, 1)] * dy * dy;
                h_fn(x, y) * norm * (-0.5 * q + lambda * (x * x + y * y - c * c)).exp()
            };
            let half_pi = std::f64::consts::FRAC_PI_2;
            let failure = std::cell::Cell::new(None);
            let total = integrate(
                |th: f64| {
                    let (sn, cs) = th.sin_cos();
                    let x = c * sn;
                    let h = c * cs;
                    let chord = |u: f64| density(x, h * u.sin()) * h * u.cos();
                    match integrate(chord, -half_pi, half_pi, &[], REL_TOL, abs / (2.0 * c)) {
                        Ok(v) => v * h,
                        Err(e) => {
                            failure.set(Some(e));
                            0.0
                        }
                    }
                },
                -half_pi,
                half_pi,
                &[],
                REL_TOL,
                abs,
            )?;
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(total),
            }
        }
    }
}

/// Exact mean and covariance of the accepted outcomes, including the cutoff:
/// filtered mass inside the region plus raw mass outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedMoments {
    pub probability: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

type RawMoments = (f64, DVector<f64>, DMatrix<f64>);

/// Truncated moments of `N(m, s²)` on `[m + s a, m + s b]`, and on its complement.
fn interval_moments(m: f64, s: f64, a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let p_in = norm_interval(a, b);
    let p_out = norm_sf(b) + norm_sf(-a);
    let (pa, pb) = (norm_pdf(a), norm_pdf(b));
    let dphi = pa - pb;
    let tail = a * pa - b * pb;
    let inside = [
        p_in,
        m * p_in + s * dphi,
        (m * m + s * s) * p_in + 2.0 * m * s * dphi + s * s * tail,
    ];
    let outside = [
        p_out,
        m * p_out - s * dphi,
        (m * m + s * s) * p_out - 2.0 * m * s * dphi - s * s * tail,
    ];
    (inside, outside)
}

/// Zeroth, first and second raw moments of `N(mean, cov)` restricted to the
/// region and to its complement, each computed directly.
fn region_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    radius: f64,
) -> Result<(RawMoments, RawMoments)> {
    match mean.len() {
        1 => {
            let (m, s) = (mean[0], cov[(0, 0)].sqrt());
            let (i, o) = interval_moments(m, s, (-radius - m) / s, (radius - m) / s);
            let pack = |v: [f64; 3]| {
                (
                    v[0],
                    DVector::from_element(1, v[1]),
                    DMatrix::from_element(1, 1, v[2]),
                )
            };
            Ok((pack(i), pack(o)))
        }
        _ => {
            let ch = Chords::new(mean, cov, radius);
            // moments that vanish by symmetry need an absolute floor; scale it by the region's mass
            let scale = 1.0 + mean.norm() + 3.0 * cov.trace().sqrt();
            let chord_set = |outside: bool| -> Result<[f64; 6]> {
                let pick = move |h: f64, m: f64, s: f64| {
                    let (i, o) = interval_moments(m, s, (-h - m) / s, (h - m) / s);
                    if outside {
                        o
                    } else {
                        i
                    }
                };
                let mass = ch.integrate(|_, h, m, s| pick(h, m, s)[0], 1e-300)?;
                let abs1 = (REL_TOL * mass * scale).max(1e-300);
                let abs2 = (REL_TOL * mass * scale * scale).max(1e-300);
                Ok([
                    mass,
                    ch.integrate(|x, h, m, s| x * pick(h, m, s)[0], abs1)?,
                    ch.integrate(|_, h, m, s| pick(h, m, s)[1], abs1)?,
                    ch.integrate(|x, h, m, s| x * x * pick(h, m, s)[0], abs2)?,
                    ch.integrate(|x, h, m, s| x * pick(h, m, s)[1], abs2)?,
                    ch.integrate(|_, h, m, s| pick(h, m, s)[2], abs2)?,
                ])
            };
            let pack = |v: [f64; 6]| {
                (
                    v[0],
                    DVector::from_vec(vec![v[1], v[2]]),
                    DMatrix::from_row_slice(2, 2, &[v[3], v[4], v[4], v[5]]),
                )
            };
            let inside = chord_set(false)?;
            let mut outside = chord_set(true)?;
            // strips |x| >= radius, where y keeps its full conditional law
            let (_, tails) = interval_moments(
                ch.mx,
                ch.sx,
                (-radius - ch.mx) / ch.sx,
                (radius - ch.mx) / ch.sx,
            );
            let [p, m1, m2] = tails;
            let c0 = ch.my - ch.slope * ch.mx;
            outside[0] += p;
            outside[1] += m1;
            outside[2] += c0 * p + ch.slope * m1;
            outside[3] += m2;
            outside[4] += c0 * m1 + ch.slope * m2;
            outside[5] +=
                ch.s * ch.s * p + c0 * c0 * p + 2.0 * c0 * ch.slope * m1 + ch.slope * ch.slope * m2;
            Ok((pack(inside), pack(outside)))
        }
    }
}

/// Exact accepted-ensemble moments. Requires a normalizable filtered ensemble.
pub fn accepted_moments(spec: &FilterSpec, outcome: &OutcomeGaussian) -> Result<AcceptedMoments> {
    check_dims(spec, outcome)?;
    let d = outcome.dims();
    if spec.g_f == 1.0 {
        return Ok(AcceptedMoments {
            probability: 1.0,
            mean: outcome.mean.clone(),
            cov: outcome.cov.clone(),
        });
    }
    let f = filter_outcome(spec, outcome)?;
    let ((fi0, fi1, fi2), _) = region_moments(&f.mean, &f.cov, spec.alpha_c)?;
    let (fi0, fi1, fi2) = if (f.weight * fi0).is_finite() && f.weight.is_finite() {
        (f.weight * fi0, fi1 * f.weight, fi2 * f.weight)
    } else {
        tilted_inside_moments(spec, outcome)?
    };
    let (_, (ro0, ro1, ro2)) = region_moments(&outcome.mean, &outcome.cov, spec.alpha_c)?;
    let p = fi0 + ro0;
    let m1 = (fi1 + ro1) / p;
    let m2 = (fi2 + ro2) / p;
    let cov = m2 - &m1 * m1.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    debug_assert_eq!(cov.nrows(), d);
    Ok(AcceptedMoments {
        probability: p,
        mean: m1,
        cov,
    })
}
