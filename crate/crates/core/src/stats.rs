//! Sample summaries shared by the Monte Carlo engines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::par::pairwise_sum;

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, stderr: 0.0, n_samples: 0, seed: 0 }
    }

    /// Mean and `sd/√n` of the samples.
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self { mean, stderr, n_samples: xs.len() as u64, seed }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within_sigma(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error (`sd / √n`, unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = mean(xs);
    if n == 1 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Control-variate estimate of `E[y]` using covariates `xs[k][i]` whose means
/// `known[k]` are known exactly. The coefficients are the least-squares fit of
/// `y` on the centred covariates; returns (estimate, stderr).
pub fn control_variate_mean(y: &[f64], xs: &[Vec<f64>], known: &[f64]) -> (f64, f64) {
    let n = y.len();
    let k = xs.len();
    assert_eq!(k, known.len());
    if k == 0 || n <= k + 1 {
        return mean_stderr(y);
    }
    let ybar = mean(y);
    let xbar: Vec<f64> = xs.iter().map(|x| mean(x)).collect();
    let mut sxx = DMatrix::<f64>::zeros(k, k);
    let mut sxy = DVector::<f64>::zeros(k);
    for a in 0..k {
        let da: Vec<f64> = xs[a].iter().map(|v| v - xbar[a]).collect();
        let cov_y: Vec<f64> = da.iter().zip(y).map(|(d, yi)| d * (yi - ybar)).collect();
        sxy[a] = pairwise_sum(&cov_y);
        for b in a..k {
            let cov: Vec<f64> = da.iter().zip(&xs[b]).map(|(d, v)| d * (v - xbar[b])).collect();
            let s = pairwise_sum(&cov);
            sxx[(a, b)] = s;
            sxx[(b, a)] = s;
        }
    }
    let beta = match sxx.clone().cholesky() {
        Some(ch) => ch.solve(&sxy),
        None => return mean_stderr(y),
    };
    let resid: Vec<f64> = (0..n).map(|i| y[i] - (0..k).map(|a| beta[a] * (xs[a][i] - known[a])).sum::<f64>()).collect();
    let est = mean(&resid);
    let centred: Vec<f64> = (0..n)
        .map(|i| {
            let fit: f64 = (0..k).map(|a| beta[a] * (xs[a][i] - xbar[a])).sum();
            let e = y[i] - ybar - fit;
            e * e
        })
        .collect();
    let var = pairwise_sum(&centred) / (n - k - 1) as f64;
    (est, (var / n as f64).sqrt())
}

/// Linear-interpolation-free empirical quantile (the `ceil(q n)`-th order statistic).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value `c(α) √((n+m)/(nm))` with
/// `c(α) = √(-ln(α/2)/2)`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
