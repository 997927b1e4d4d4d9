//! Trajectory-level Monte Carlo of the heralded gate.
//!
//! Each trajectory draws phase-space samples of the input, the ancilla and
//! every vacuum port, pushes them through the beamsplitters and losses,
//! reads the in-loop outcome, accepts it with the filter probability, and on
//! acceptance records the fed-forward output. Only the setup parameters
//! (`t_s`, gains, calibration) are shared with the analytic engine; the
//! propagation is independent of it.
//!
//! Randomness: shard `s` uses a ChaCha8 stream keyed by `(seed, s)`, so
//! results depend only on `(seed, shards)`, never on thread scheduling.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{FilterSpec, OutcomeGaussian};
use crate::gate::{feedforward, GateConfig};
use crate::gaussian::{fidelity_moments, GaussianState};

/// Hard cap on trajectories per run.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Run until this many trajectories are accepted (or the budget runs out).
    Accepted,
    /// Run exactly this many trajectories.
    Total,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub gate: GateConfig,
    pub input: GaussianState,
    pub n_trajectories: u64,
    pub mode: CountMode,
    pub seed: u64,
    pub shards: usize,
    pub budget: u64,
    /// Keep accepted output samples (needed for bootstrap errors).
    pub keep_samples: bool,
    /// Optional raw trajectory dump.
    pub dump: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(gate: GateConfig, input: GaussianState, n_trajectories: u64, seed: u64) -> Self {
        RunConfig {
            gate,
            input,
            n_trajectories,
            mode: CountMode::Accepted,
            seed,
            shards: 1,
            budget: DEFAULT_BUDGET,
            keep_samples: true,
            dump: None,
        }
    }

    pub fn with_shards(mut self, shards: usize) -> Self {
        self.shards = shards;
        self
    }

    pub fn with_mode(mut self, mode: CountMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 || self.shards == 0 || self.budget == 0 {
            return Err(Error::InvalidParameter(
                "trajectory count, shards and budget must be >= 1".into(),
            ));
        }
        if self.input.nmodes() != 1 {
            return Err(Error::InvalidParameter("input must be single-mode".into()));
        }
        Ok(())
    }
}

/// Sample moments with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub mean_se: DVector<f64>,
    pub cov_se: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub accepted: u64,
    pub total: u64,
    /// Accepted outcomes, α-units.
    pub outcome: Moments,
    /// Accepted output quadratures.
    pub output: Moments,
    pub samples: Option<Vec<[f64; 2]>>,
    pub budget_exhausted: bool,
    pub seed: u64,
}

/// Power sums `Σ dx^a dy^b` (a + b ≤ 4) about a fixed shift, mergeable.
#[derive(Debug, Clone, Default)]
struct PowerSums {
    n: u64,
    shift: [f64; 2],
    s: [[f64; 5]; 5],
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl PowerSums {
    #[inline]
    fn push(&mut self, x: f64, y: f64) {
        if self.n == 0 {
            self.shift = [x, y];
        }
        self.n += 1;
        let (dx, dy) = (x - self.shift[0], y - self.shift[1]);
        let px = [1.0, dx, dx * dx, dx * dx * dx, dx * dx * dx * dx];
        let py = [1.0, dy, dy * dy, dy * dy * dy, dy * dy * dy * dy];
        for a in 0..5 {
            for b in 0..5 - a {
                self.s[a][b] += px[a] * py[b];
            }
        }
    }

    /// Sums re-expressed about `shift`.
    fn recentered(&self, shift: [f64; 2]) -> [[f64; 5]; 5] {
        let (ex, ey) = (self.shift[0] - shift[0], self.shift[1] - shift[1]);
        let mut out = [[0.0; 5]; 5];
        for a in 0..5 {
            for b in 0..5 - a {
                let mut v = 0.0;
                for i in 0..=a {
                    for j in 0..=b {
                        v += binom(a, i)
                            * binom(b, j)
                            * ex.powi((a - i) as i32)
                            * ey.powi((b - j) as i32)
                            * self.s[i][j];
                    }
                }
                out[a][b] = v;
            }
        }
        out
    }

    fn merge(&mut self, other: &PowerSums) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let add = other.recentered(self.shift);
        for a in 0..5 {
            for b in 0..5 - a {
                self.s[a][b] += add[a][b];
            }
        }
        self.n += other.n;
    }

    fn moments(&self, dims: usize) -> Moments {
        let n = self.n as f64;
        if self.n < 2 {
            let nan_v = DVector::from_element(dims, f64::NAN);
            let nan_m = DMatrix::from_element(dims, dims, f64::NAN);
            return Moments {
                n: self.n,
                mean: nan_v.clone(),
                cov: nan_m.clone(),
                mean_se: nan_v,
                cov_se: nan_m,
            };
        }
        let mean = [
            self.shift[0] + self.s[1][0] / n,
            self.shift[1] + self.s[0][1] / n,
        ];
        let c = self.recentered(mean);
        let mu = |a: usize, b: usize| c[a][b] / n;
        let bessel = n / (n - 1.0);
        let cov2 = [
            [mu(2, 0) * bessel, mu(1, 1) * bessel],
            [mu(1, 1) * bessel, mu(0, 2) * bessel],
        ];
        let fourth = [[mu(4, 0), mu(2, 2)], [mu(2, 2), mu(0, 4)]];
        let central = [[mu(2, 0), mu(1, 1)], [mu(1, 1), mu(0, 2)]];
        Moments {
            n: self.n,
            mean: DVector::from_iterator(dims, (0..dims).map(|i| mean[i])),
            cov: DMatrix::from_fn(dims, dims, |i, j| cov2[i][j]),
            mean_se: DVector::from_iterator(dims, (0..dims).map(|i| (cov2[i][i] / n).sqrt())),
            cov_se: DMatrix::from_fn(dims, dims, |i, j| {
                ((fourth[i][j] - central[i][j].powi(2)).max(0.0) / n).sqrt()
            }),
        }
    }
}

/// Precomputed linear optics of one gate configuration.
struct Optics {
    ts: [f64; 2],
    loss_in: [f64; 2],
    split: [f64; 2],
    loss_out: [f64; 2],
    input_mean: [f64; 2],
    input_chol: Matrix2<f64>,
    anc_chol: Matrix2<f64>,
    dims: usize,
    scale: [f64; 2],
    gains: [[f64; 2]; 2],
    filter: FilterSpec,
}

fn chol2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter("covariance not positive definite".into()))
}

impl Optics {
    fn new(gate: &GateConfig, input: &GaussianState) -> Result<Self> {
        let ff = feedforward(gate)?;
        let (mean, cov) = input.moments2();
        let anc = crate::gaussian::squeezed_vacuum(&gate.ancilla);
        let (_, anc_cov) = anc.moments2();
        let pair = |t: f64| [t.sqrt(), (1.0 - t).sqrt()];
        let dims = gate.dims();
        let mut gains = [[0.0; 2]; 2];
        let mut scale = [0.0; 2];
        for k in 0..dims {
            scale[k] = ff.calibration[k];
            for q in 0..2 {
                gains[q][k] = ff.gains[(q, k)];
            }
        }
        Ok(Optics {
            ts: pair(gate.t_s),
            loss_in: pair(gate.eta_inloop),
            split: pair(gate.t_m),
            loss_out: pair(gate.eta_verify),
            input_mean: mean,
            input_chol: chol2(&cov)?,
            anc_chol: chol2(&anc_cov)?,
            dims,
            scale,
            gains,
            filter: gate.filter,
        })
    }
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
fn correlated(rng: &mut ChaCha8Rng, l: &Matrix2<f64>, mean: [f64; 2]) -> [f64; 2] {
    let (u, v) = (normal(rng), normal(rng));
    [
        mean[0] + l[(0, 0)] * u,
        mean[1] + l[(1, 0)] * u + l[(1, 1)] * v,
    ]
}

struct ShardResult {
    accepted: u64,
    total: u64,
    outcome: PowerSums,
    output: PowerSums,
    samples: Vec<[f64; 2]>,
    dump: Vec<u8>,
    exhausted: bool,
}

fn run_shard(o: &Optics, run: &RunConfig, shard: usize, quota: u64, budget: u64) -> ShardResult {
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    rng.set_stream(shard as u64);
    let mut res = ShardResult {
        accepted: 0,
        total: 0,
        outcome: PowerSums::default(),
        output: PowerSums::default(),
        samples: Vec::new(),
        dump: Vec::new(),
        exhausted: false,
    };
    let dumping = run.dump.is_some();
    let trivial = o.filter.g_f == 1.0;
    loop {
        let done = match run.mode {
            CountMode::Accepted => res.accepted >= quota,
            CountMode::Total => res.total >= quota,
        };
        if done {
            break;
        }
        if res.total >= budget {
            res.exhausted = true;
            break;
        }
        res.total += 1;

        let input = correlated(&mut rng, &o.input_chol, o.input_mean);
        let anc = correlated(&mut rng, &o.anc_chol, [0.0, 0.0]);
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        for q in 0..2 {
            b[q] = o.ts[0] * input[q] + o.ts[1] * anc[q];
            c[q] = o.ts[1] * input[q] - o.ts[0] * anc[q];
        }
        if o.loss_in[1] > 0.0 {
            for cq in c.iter_mut() {
                *cq = o.loss_in[0] * *cq + o.loss_in[1] * normal(&mut rng);
            }
        }
        // transmitted split port measures y, reflected port measures x
        let raw = if o.dims == 1 {
            [c[1], 0.0]
        } else {
            let (vx, vy) = (normal(&mut rng), normal(&mut rng));
            let reflected_x = o.split[1] * c[0] - o.split[0] * vx;
            let transmitted_y = o.split[0] * c[1] + o.split[1] * vy;
            [reflected_x, transmitted_y]
        };
        let alpha = [raw[0] * o.scale[0], raw[1] * o.scale[1]];
        let r2 = alpha[0] * alpha[0] + alpha[1] * alpha[1];
        let accept = trivial || rng.random::<f64>() < o.filter.accept_r2(r2);

        let mut out = [f64::NAN; 2];
        if accept {
            res.accepted += 1;
            for q in 0..2 {
                out[q] = b[q] + o.gains[q][0] * raw[0] + o.gains[q][1] * raw[1];
            }
            if o.loss_out[1] > 0.0 {
                for v in out.iter_mut() {
                    *v = o.loss_out[0] * *v + o.loss_out[1] * normal(&mut rng);
                }
            }
            res.outcome.push(alpha[0], alpha[1]);
            res.output.push(out[0], out[1]);
            if run.keep_samples {
                res.samples.push(out);
            }
        }
        if dumping {
            for v in alpha.iter().take(o.dims) {
                res.dump.extend_from_slice(&v.to_le_bytes());
            }
            res.dump.push(accept as u8);
            for v in out {
                res.dump.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    res
}

fn split_evenly(n: u64, shards: usize, k: usize) -> u64 {
    let base = n / shards as u64;
    base + u64::from((k as u64) < n % shards as u64)
}

/// Runs the trajectory simulation.
pub fn simulate(run: &RunConfig) -> Result<EnsembleStats> {
    run.validate()?;
    let optics = Optics::new(&run.gate, &run.input)?;
    let shards: Vec<ShardResult> = (0..run.shards)
        .into_par_iter()
        .map(|k| {
            let quota = split_evenly(run.n_trajectories, run.shards, k);
            let budget = split_evenly(run.budget, run.shards, k).max(1);
            run_shard(&optics, run, k, quota, budget)
        })
        .collect();

    let mut accepted = 0;
    let mut total = 0;
    let mut outcome = PowerSums::default();
    let mut output = PowerSums::default();
    let mut samples = run.keep_samples.then(Vec::new);
    let mut exhausted = false;
    for s in &shards {
        accepted += s.accepted;
        total += s.total;
        outcome.merge(&s.outcome);
        output.merge(&s.output);
        exhausted |= s.exhausted;
        if let Some(all) = samples.as_mut() {
            all.extend_from_slice(&s.samples);
        }
    }
    if let Some(path) = &run.dump {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&dump_header(optics.dims))?;
        for s in &shards {
            f.write_all(&s.dump)?;
        }
        f.flush()?;
    }
    if accepted == 0 {
        return Err(Error::AcceptanceStarvation {
            trials: total,
            rate_bound: 3.0 / total as f64,
        });
    }
    Ok(EnsembleStats {
        accepted,
        total,
        outcome: outcome.moments(optics.dims),
        output: output.moments(2),
        samples,
        budget_exhausted: exhausted,
        seed: run.seed,
    })
}

/// Gaussian fidelity of the accepted ensemble's moments, with a bootstrap
/// standard error over trajectories (200 resamples).
pub fn estimate_fidelity(stats: &EnsembleStats, target: &GaussianState) -> Result<(f64, f64)> {
    estimate_fidelity_with(stats, target, 200)
}

fn moments_fidelity(mean: [f64; 2], cov: &Matrix2<f64>, target: &GaussianState) -> f64 {
    let (tm, tc) = target.moments2();
    fidelity_moments(mean, cov, tm, &tc)
}

pub fn estimate_fidelity_with(
    stats: &EnsembleStats,
    target: &GaussianState,
    resamples: usize,
) -> Result<(f64, f64)> {
    if target.nmodes() != 1 {
        return Err(Error::InvalidParameter("target must be single-mode".into()));
    }
    let m = &stats.output;
    let f = moments_fidelity(
        [m.mean[0], m.mean[1]],
        &Matrix2::new(m.cov[(0, 0)], m.cov[(0, 1)], m.cov[(1, 0)], m.cov[(1, 1)]),
        target,
    );
    let samples = stats
        .samples
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("bootstrap needs stored samples".into()))?;
    let n = samples.len();
    if n < 2 || resamples < 2 {
        return Ok((f, f64::NAN));
    }
    let boot: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(stats.seed ^ 0x5eed_b007_u64);
            rng.set_stream(k as u64);
            let mut acc = PowerSums::default();
            for _ in 0..n {
                let s = samples[rng.random_range(0..n)];
                acc.push(s[0], s[1]);
            }
            let mo = acc.moments(2);
            moments_fidelity(
                [mo.mean[0], mo.mean[1]],
                &Matrix2::new(
                    mo.cov[(0, 0)],
                    mo.cov[(0, 1)],
                    mo.cov[(1, 0)],
                    mo.cov[(1, 1)],
                ),
                target,
            )
        })
        .collect();
    let mean = boot.iter().sum::<f64>() / resamples as f64;
    let var = boot.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok((f, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRate {
    pub rate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`.
    pub std_err: f64,
    /// 95% Wilson score interval.
    pub wilson: (f64, f64),
}

pub fn acceptance_rate(stats: &EnsembleStats) -> AcceptanceRate {
    rate_from_counts(stats.accepted, stats.total)
}

pub fn rate_from_counts(accepted: u64, total: u64) -> AcceptanceRate {
    let n = total as f64;
    let p = accepted as f64 / n;
    let z = 1.959_963_984_540_054;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    AcceptanceRate {
        rate: p,
        std_err: (p * (1.0 - p) / n).sqrt(),
        wilson: (centre - half, centre + half),
    }
}

/// Statistics of rejection-sampling the filter alone on a Gaussian outcome ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSample {
    pub accepted: u64,
    pub total: u64,
    pub moments: Moments,
    pub samples: Option<Vec<[f64; 2]>>,
}

/// Draws `trials` outcomes from `outcome` and accepts each with the filter
/// probability, exactly as the heralding procedure does.
pub fn simulate_filter(
    spec: &FilterSpec,
    outcome: &OutcomeGaussian,
    trials: u64,
    seed: u64,
    shards: usize,
    keep_samples: bool,
) -> Result<FilterSample> {
    if spec.dims != outcome.dims() || trials == 0 || shards == 0 {
        return Err(Error::InvalidParameter(
            "invalid filter simulation request".into(),
        ));
    }
    let d = outcome.dims();
    let chol = outcome
        .cov
        .clone()
        .cholesky()
        .ok_or(Error::DegenerateMeasurement(0.0))?
        .l();
    let parts: Vec<(u64, PowerSums, Vec<[f64; 2]>)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut sums = PowerSums::default();
            let mut kept = Vec::new();
            let mut accepted = 0;
            for _ in 0..split_evenly(trials, shards, k) {
                let u = normal(&mut rng);
                let (x, y) = if d == 1 {
                    (outcome.mean[0] + chol[(0, 0)] * u, 0.0)
                } else {
                    let v = normal(&mut rng);
                    (
                        outcome.mean[0] + chol[(0, 0)] * u,
                        outcome.mean[1] + chol[(1, 0)] * u + chol[(1, 1)] * v,
                    )
                };
                if rng.random::<f64>() < spec.accept_r2(x * x + y * y) {
                    accepted += 1;
                    sums.push(x, y);
                    if keep_samples {
                        kept.push([x, y]);
                    }
                }
            }
            (accepted, sums, kept)
        })
        .collect();
    let mut sums = PowerSums::default();
    let mut accepted = 0;
    let mut samples = keep_samples.then(Vec::new);
    for (a, s, kept) in &parts {
        accepted += a;
        sums.merge(s);
        if let Some(all) = samples.as_mut() {
            all.extend_from_slice(kept);
        }
    }
    Ok(FilterSample {
        accepted,
        total: trials,
        moments: sums.moments(d),
        samples,
    })
}

const DUMP_MAGIC: &[u8; 8] = b"HSGTRAJ\0";
const DUMP_VERSION: u32 = 1;

/// 16-byte header: 8-byte magic, u32 version, u8 outcome dimension, 3 reserved bytes.
fn dump_header(dims: usize) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[..8].copy_from_slice(DUMP_MAGIC);
    h[8..12].copy_from_slice(&DUMP_VERSION.to_le_bytes());
    h[12] = dims as u8;
    h
}

/// One record of a trajectory dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub outcome: Vec<f64>,
    pub accepted: bool,
    pub output: [f64; 2],
}

/// Reads a dump written by [`simulate`].
pub fn read_trajectory_dump(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != DUMP_MAGIC {
        return Err(Error::Io("not a trajectory dump".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != DUMP_VERSION {
        return Err(Error::Io(format!("unsupported dump version {version}")));
    }
    let dims = bytes[12] as usize;
    let rec = 8 * dims + 1 + 16;
    let body = &bytes[16..];
    if body.len() % rec != 0 {
        return Err(Error::Io("truncated trajectory dump".into()));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    Ok(body
        .chunks_exact(rec)
        .map(|r| TrajectoryRecord {
            outcome: (0..dims).map(|i| f(&r[8 * i..8 * i + 8])).collect(),
            accepted: r[8 * dims] != 0,
            output: [
                f(&r[8 * dims + 1..8 * dims + 9]),
                f(&r[8 * dims + 9..8 * dims + 17]),
            ],
        })
        .collect())
}
