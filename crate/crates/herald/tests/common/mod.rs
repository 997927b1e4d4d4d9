#![allow(dead_code)]

use herald::quadrature::integrate;
use statrs::distribution::{Binomial, DiscreteCDF};

/// Counts 3σ exceedances over a family of z-scores. The family passes when
/// every |z| < 5 and the number above 3 is within what a binomial with the
/// two-sided 3σ rate allows at the 0.1% level.
#[derive(Debug, Default)]
pub struct Family {
    pub label: String,
    scores: Vec<(String, f64)>,
}

const P3: f64 = 0.002_699_796_063_260_2;

impl Family {
    pub fn new(label: &str) -> Self {
        Family {
            label: label.into(),
            scores: Vec::new(),
        }
    }

    pub fn push(&mut self, what: impl Into<String>, z: f64) {
        self.scores.push((what.into(), z));
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn allowed(&self) -> u64 {
        let n = self.scores.len() as u64;
        if n == 0 {
            return 0;
        }
        let b = Binomial::new(P3, n).unwrap();
        (0..=n).find(|&k| 1.0 - b.cdf(k) < 1e-3).unwrap_or(n)
    }

    pub fn exceed(&self) -> usize {
        self.scores.iter().filter(|(_, z)| z.abs() > 3.0).count()
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.scores
            .iter()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
    }

    pub fn passes(&self) -> bool {
        self.scores
            .iter()
            .all(|(_, z)| z.is_finite() && z.abs() < 5.0)
            && self.exceed() as u64 <= self.allowed()
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} comparisons, {} beyond 3σ (allowed {}), worst {:?}",
            self.label,
            self.len(),
            self.exceed(),
            self.allowed(),
            self.worst()
        )
    }
}

/// Maximum-likelihood fit of a normal law observed only on `[-a, a]`.
///
/// Works in natural parameters `(m/s², -1/(2s²))` with Newton steps on the
/// log-partition function; standard errors come from the Fisher information.
/// Returns `(mean, mean_se, variance, variance_se)`.
pub fn truncated_normal_fit(samples: &[f64], a: f64) -> (f64, f64, f64, f64) {
    let n = samples.len() as f64;
    let t1 = samples.iter().sum::<f64>() / n;
    let t2 = samples.iter().map(|x| x * x).sum::<f64>() / n;
    // moments of exp(e1 x + e2 x²) on [-a, a], scaled by the peak to avoid overflow
    let moments = |e1: f64, e2: f64| {
        let peak = [-a, a, (-e1 / (2.0 * e2)).clamp(-a, a)]
            .iter()
            .map(|&x| e1 * x + e2 * x * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let f = |k: i32| {
            integrate(
                |x| x.powi(k) * (e1 * x + e2 * x * x - peak).exp(),
                -a,
                a,
                &[0.0],
                1e-13,
                0.0,
            )
            .unwrap()
        };
        let z = f(0);
        [f(1) / z, f(2) / z, f(3) / z, f(4) / z]
    };
    let var0 = (t2 - t1 * t1).max(1e-6);
    let (mut e1, mut e2) = (t1 / var0, -0.5 / var0);
    for _ in 0..200 {
        let m = moments(e1, e2);
        let (g1, g2) = (t1 - m[0], t2 - m[1]);
        let h11 = m[1] - m[0] * m[0];
        let h12 = m[2] - m[0] * m[1];
        let h22 = m[3] - m[1] * m[1];
        let det = h11 * h22 - h12 * h12;
        let d1 = (h22 * g1 - h12 * g2) / det;
        let d2 = (h11 * g2 - h12 * g1) / det;
        // keep the quadratic coefficient negative while stepping
        let mut step = 1.0;
        while e2 + step * d2 >= 0.0 {
            step *= 0.5;
        }
        e1 += step * d1;
        e2 += step * d2;
        if (d1.abs() + d2.abs()) * step < 1e-12 * (1.0 + e1.abs() + e2.abs()) {
            break;
        }
    }
    let m = moments(e1, e2);
    let h11 = m[1] - m[0] * m[0];
    let h12 = m[2] - m[0] * m[1];
    let h22 = m[3] - m[1] * m[1];
    let det = h11 * h22 - h12 * h12;
    let (c11, c12, c22) = (h22 / det / n, -h12 / det / n, h11 / det / n);
    let mean = -e1 / (2.0 * e2);
    let var = -0.5 / e2;
    let jm = [-1.0 / (2.0 * e2), e1 / (2.0 * e2 * e2)];
    let jv = [0.0, 0.5 / (e2 * e2)];
    let quad = |j: [f64; 2]| j[0] * j[0] * c11 + 2.0 * j[0] * j[1] * c12 + j[1] * j[1] * c22;
    (mean, quad(jm).sqrt(), var, quad(jv).sqrt())
}

/// The five coherent probe inputs, each paired with its target in dB:
/// magnitudes spread over 0.70..1.92, phases spread round the circle.
pub fn probe_inputs() -> Vec<(f64, num_complex::Complex64)> {
    let targets = [2.30, 4.81, 5.84, 8.85, 10.16];
    let magnitudes = [0.70, 1.00, 1.31, 1.62, 1.92];
    (0..5)
        .map(|k| {
            let phase = 0.3 + k as f64 * std::f64::consts::TAU / 5.0;
            (
                targets[k],
                num_complex::Complex64::from_polar(magnitudes[k], phase),
            )
        })
        .collect()
}
