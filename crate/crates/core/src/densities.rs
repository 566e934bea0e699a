//! Log-densities of the COE corner, the symmetric Gaussian and the Haar
//! unitary corner; their normalizing constants; `ζ`; and the supremum of the
//! COE-to-Gaussian density ratio.
//!
//! "Scaled" refers to `√M·A`, whose support is `λ_max(Z†Z) < M`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::ensembles::sample_gsym;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::quadrature::tanh_sinh;
use crate::rng::RngStream;
use crate::stats::{control_variate_mean, MCEstimate};
use crate::weingarten::gsym_trace_moment;

/// Inputs whose asymmetry exceeds this (relative to `max(1, max|Z_ij|)`) are rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative slack on the support boundary `λ_max < M`.
pub const SUPPORT_SLACK: f64 = 1e-12;

/// Eigenvalues of `Z†Z` for rectangular `Z`, descending, clamped at zero.
pub fn gram_eigs(z: &ComplexMatrix) -> Vec<f64> {
    let h = z.gram();
    let n = h.rows();
    let mut ev: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![h[(0, 0)].re],
        2 => {
            let (a, d, b) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)].norm());
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            vec![mid + rad, mid - rad]
        }
        _ => h.to_nalgebra().symmetric_eigenvalues().iter().copied().collect(),
    };
    for l in &mut ev {
        *l = l.max(0.0);
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Eigenvalues of `Z†Z` for square `Z`, descending, clamped at zero.
pub fn eigs_psd(z: &ComplexMatrix) -> Result<Vec<f64>> {
    if !z.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", z.rows(), z.cols())));
    }
    Ok(gram_eigs(z))
}

fn symmetric_input(z: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !z.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", z.rows(), z.cols())));
    }
    let asym = z.symmetry_residual();
    if asym > SYMMETRY_TOL * z.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(z.symmetrized())
}

fn check_coe_regime(big_m: usize, n: usize) -> Result<()> {
    if 2 * n > big_m || big_m == 0 {
        return Err(Error::Regime(format!("COE corner density needs 2N <= M, got N={n}, M={big_m}")));
    }
    Ok(())
}

/// Number of independent complex coordinates of an `N x N` symmetric matrix.
pub fn sym_dim(n: usize) -> f64 {
    (n * (n + 1)) as f64 / 2.0
}

/// `log` of the symmetric Gaussian density's constant, `-N log 2 - N(N+1)/2 log π`.
pub fn gsym_log_constant(n: usize) -> f64 {
    -(n as f64) * 2f64.ln() - sym_dim(n) * PI.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizerMethod {
    HuaFormula,
    ImportanceSampling,
    Quadrature,
}

/// A value of `log c'_{M,N}`, the constant of the unscaled COE corner density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerEstimate {
    pub m: usize,
    pub n: usize,
    pub log_c_unscaled: f64,
    pub stderr: f64,
    pub method: NormalizerMethod,
    pub samples: u64,
    pub seed: u64,
}

impl NormalizerEstimate {
    /// Constant of the density of `√M·A`: each of the `N(N+1)/2` complex
    /// coordinates is stretched by `√M`.
    pub fn log_c_scaled(&self) -> f64 {
        self.log_c_unscaled - sym_dim(self.n) * (self.m as f64).ln()
    }

    fn closed_form(m: usize, n: usize, log_c_unscaled: f64, method: NormalizerMethod) -> Self {
        Self { m, n, log_c_unscaled, stderr: 0.0, method, samples: 0, seed: 0 }
    }
}

/// The Hua product/Gamma formula for `c'_{M,N}` as it is commonly
/// transcribed:
///
/// `(M-2N)(M-2N+1)⋯(M-N-1) / (2^N π^{N(N+1)/2}) ·
///  Γ(M-N+1)Γ(M-N+2)⋯Γ(M-1) / (Γ(M-2N+2)Γ(M-2N+4)⋯Γ(M-2))`
///
/// with empty products equal to 1. At `N = 1` this gives `(M-2)/(2π)`,
/// which disagrees with direct integration; see [`compare_with_reference`].
pub fn hua_log_constant(big_m: usize, n: usize) -> Result<NormalizerEstimate> {
    check_coe_regime(big_m, n)?;
    if n == 0 {
        return Ok(NormalizerEstimate::closed_form(big_m, 0, 0.0, NormalizerMethod::HuaFormula));
    }
    let (m, nn) = (big_m as i64, n as i64);
    let mut log_c = gsym_log_constant(n);
    for k in (m - 2 * nn)..=(m - nn - 1) {
        log_c += (k as f64).ln();
    }
    for a in (m - nn + 1)..=(m - 1) {
        log_c += ln_gamma(a as f64);
    }
    let mut a = m - 2 * nn + 2;
    while a <= m - 2 {
        log_c -= ln_gamma(a as f64);
        a += 2;
    }
    if !log_c.is_finite() {
        return Err(Error::Regime(format!("Hua formula undefined at M={big_m}, N={n}")));
    }
    Ok(NormalizerEstimate::closed_form(big_m, n, log_c, NormalizerMethod::HuaFormula))
}

/// `log c'_{M,1}` by radial quadrature: the unscaled `N = 1` density is
/// `c' (1-|z|²)^{(M-3)/2}` on the unit disk, whose mass is
/// `π ∫₀¹ (1-t)^{(M-3)/2} dt`.
pub fn quadrature_log_constant(big_m: usize, n: usize) -> Result<NormalizerEstimate> {
    if n != 1 {
        return Err(Error::Parameter(format!("quadrature normalizer is available for N = 1 only, got N={n}")));
    }
    check_coe_regime(big_m, n)?;
    let a = (big_m as f64 - 3.0) / 2.0;
    let mass = PI * tanh_sinh(|t| (a * (-t).ln_1p()).exp(), 0.0, 1.0, 1e-15);
    Ok(NormalizerEstimate::closed_form(big_m, 1, -mass.ln(), NormalizerMethod::Quadrature))
}

/// A log-density together with its support indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDensityValue {
    pub value: f64,
    pub support: bool,
}

impl LogDensityValue {
    pub fn inside(value: f64) -> Self {
        Self { value, support: true }
    }

    pub fn outside() -> Self {
        Self { value: f64::NEG_INFINITY, support: false }
    }
}

/// `Σ log(1 - λ/R)`, or `None` unless `λ_max < R` (with relative slack).
fn log_det_term(lambdas: &[f64], radius: f64) -> Option<f64> {
    if lambdas.first().is_some_and(|&top| top >= radius * (1.0 - SUPPORT_SLACK)) {
        return None;
    }
    Some(lambdas.iter().map(|l| (-l / radius).ln_1p()).sum())
}

/// Exponent `(M - 2N - 1)/2` of the determinant in the COE corner density.
pub fn coe_exponent(big_m: usize, n: usize) -> f64 {
    (big_m as f64 - 2.0 * n as f64 - 1.0) / 2.0
}

/// Log-density of the `N x N` COE corner `A` (`scaled = false`) or of `√M·A`
/// (`scaled = true`) at the symmetric matrix `z`.
pub fn log_density_coe_sub(
    z: &ComplexMatrix,
    big_m: usize,
    scaled: bool,
    log_c: &NormalizerEstimate,
) -> Result<LogDensityValue> {
    let z = symmetric_input(z)?;
    let n = z.rows();
    check_coe_regime(big_m, n)?;
    if log_c.m != big_m || log_c.n != n {
        return Err(Error::Parameter(format!(
            "normalizer is for (M={}, N={}), density requested at (M={big_m}, N={n})",
            log_c.m, log_c.n
        )));
    }
    let lambdas = gram_eigs(&z);
    let (radius, constant) = if scaled { (big_m as f64, log_c.log_c_scaled()) } else { (1.0, log_c.log_c_unscaled) };
    Ok(match log_det_term(&lambdas, radius) {
        Some(ld) => LogDensityValue::inside(constant + coe_exponent(big_m, n) * ld),
        None => LogDensityValue::outside(),
    })
}

/// Log-density of the symmetric Gaussian ensemble:
/// `-N log 2 - N(N+1)/2 log π - Tr(Z†Z)/2`.
pub fn log_density_gsym(z: &ComplexMatrix) -> Result<LogDensityValue> {
    let z = symmetric_input(z)?;
    Ok(LogDensityValue::inside(gsym_log_constant(z.rows()) - 0.5 * z.frobenius_sq()))
}

/// `log(f/g)` up to the normalizer, as a function of the eigenvalues of
/// `Z†Z`: `(M-2N-1)/2 Σ log(1-λ/M) + Σ λ/2`. `None` outside the support.
pub fn coe_log_weight(lambdas: &[f64], big_m: usize, n: usize) -> Option<f64> {
    let ld = log_det_term(lambdas, big_m as f64)?;
    Some(coe_exponent(big_m, n) * ld + 0.5 * lambdas.iter().sum::<f64>())
}

/// Power sums used as control variates: `Σλ, Σλ², Σλ³`, and `(Σλ)²` when `N >= 2`.
pub(crate) fn power_sums(lambdas: &[f64], with_square_of_trace: bool) -> Vec<f64> {
    let s1: f64 = lambdas.iter().sum();
    let s2: f64 = lambdas.iter().map(|l| l * l).sum();
    let s3: f64 = lambdas.iter().map(|l| l * l * l).sum();
    let mut v = vec![s1, s2, s3];
    if with_square_of_trace {
        v.push(s1 * s1);
    }
    v
}

/// Exact expectations of [`power_sums`] under the symmetric Gaussian ensemble.
pub(crate) fn gsym_power_sum_means(n: usize) -> Result<Vec<f64>> {
    let nf = n as f64;
    let mut v = vec![gsym_trace_moment(1, n)?, gsym_trace_moment(2, n)?, gsym_trace_moment(3, n)?];
    if n >= 2 {
        // Tr(G†G) is a sum of N(N+1)/2 independent 2·Exp(1) variables.
        let k = nf * (nf + 1.0);
        v.push(k * k + 2.0 * k);
    }
    Ok(v)
}

/// Estimates `log E_g[exp(L)]` with `L` from [`coe_log_weight`], `g` the
/// symmetric Gaussian, using power-sum control variates. Returns
/// `(log mean, stderr of log mean)`.
pub(crate) fn gaussian_log_mean_weight(
    big_m: usize,
    n: usize,
    samples: usize,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::Parameter("importance sampling needs at least 2 samples".into()));
    }
    let rows: Vec<(f64, Vec<f64>)> = crate::par::map_indexed(samples, |i| {
        let g = sample_gsym(n, &mut stream.child(i as u64).rng()).expect("n >= 1");
        let lambdas = gram_eigs(&g);
        let w = coe_log_weight(&lambdas, big_m, n).map_or(0.0, f64::exp);
        (w, power_sums(&lambdas, n >= 2))
    });
    let known = gsym_power_sum_means(n)?;
    let (w, cov) = unzip_covariates(rows, known.len());
    let (mean, se) = control_variate_mean(&w, &cov, &known);
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::Invariant(format!("importance weight mean {mean} is not positive")));
    }
    Ok((mean.ln(), se / mean))
}

pub(crate) fn unzip_covariates(rows: Vec<(f64, Vec<f64>)>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut y = Vec::with_capacity(rows.len());
    let mut cov = vec![Vec::with_capacity(rows.len()); k];
    for (v, xs) in rows {
        y.push(v);
        for (c, x) in cov.iter_mut().zip(xs) {
            c.push(x);
        }
    }
    (y, cov)
}

/// Importance-sampling estimate of `log c'_{M,N}` with the symmetric
/// Gaussian as proposal: `1/c_scaled = 2^N π^{N(N+1)/2} E_g[exp(L)]`.
pub fn importance_normalizer(big_m: usize, n: usize, samples: usize, stream: &RngStream) -> Result<NormalizerEstimate> {
    check_coe_regime(big_m, n)?;
    if n == 0 {
        return Err(Error::Parameter("importance normalizer needs N >= 1".into()));
    }
    if samples == 0 {
        return Err(Error::Parameter("importance normalizer needs samples >= 1".into()));
    }
    let (log_mean, se) = gaussian_log_mean_weight(big_m, n, samples, stream)?;
    let log_c_scaled = gsym_log_constant(n) - log_mean;
    Ok(NormalizerEstimate {
        m: big_m,
        n,
        log_c_unscaled: log_c_scaled + sym_dim(n) * (big_m as f64).ln(),
        stderr: se,
        method: NormalizerMethod::ImportanceSampling,
        samples: samples as u64,
        seed: stream.seed,
    })
}

/// Disagreement between a candidate constant (typically Hua's) and a
/// reference value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerComparison {
    pub candidate: NormalizerEstimate,
    pub reference: NormalizerEstimate,
    /// `c_candidate / c_reference - 1`.
    pub relative_difference: f64,
    /// Log-difference in units of the combined standard error (infinite for
    /// two closed forms that differ).
    pub z_score: f64,
}

impl NormalizerComparison {
    pub fn agrees(&self, sigmas: f64, rel_tol: f64) -> bool {
        self.relative_difference.abs() <= rel_tol || self.z_score.abs() <= sigmas
    }
}

pub fn compare_with_reference(candidate: &NormalizerEstimate, reference: &NormalizerEstimate) -> NormalizerComparison {
    let diff = candidate.log_c_unscaled - reference.log_c_unscaled;
    let se = candidate.stderr.hypot(reference.stderr);
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    NormalizerComparison {
        candidate: *candidate,
        reference: *reference,
        relative_difference: diff.exp_m1(),
        z_score: z,
    }
}

/// Computes Hua's constant next to the reference and logs the discrepancy.
pub fn hua_discrepancy(reference: &NormalizerEstimate) -> Result<NormalizerComparison> {
    let hua = hua_log_constant(reference.m, reference.n)?;
    let cmp = compare_with_reference(&hua, reference);
    if !cmp.agrees(3.0, 1e-10) {
        log::warn!(
            "Hua constant differs from {:?} reference at M={}, N={}: relative difference {:.3e} ({:.1} sigma)",
            reference.method,
            reference.m,
            reference.n,
            cmp.relative_difference,
            cmp.z_score
        );
    }
    Ok(cmp)
}

/// `ζ = exp(-N³/(2M)) / (2^N π^{N(N+1)/2} c_{M,N})` with `c` the scaled constant.
pub fn zeta(big_m: usize, n: usize, log_c: &NormalizerEstimate) -> Result<MCEstimate> {
    if log_c.m != big_m || log_c.n != n {
        return Err(Error::Parameter("normalizer does not match (M, N)".into()));
    }
    let nf = n as f64;
    let log_zeta = -nf.powi(3) / (2.0 * big_m as f64) + gsym_log_constant(n) - log_c.log_c_scaled();
    let z = log_zeta.exp();
    Ok(MCEstimate { mean: z, stderr: z * log_c.stderr, n_samples: log_c.samples, seed: log_c.seed })
}

/// Per-eigenvalue part of `log(f/g)`: `(M-2N-1)/2 log(1-λ/M) + λ/2`.
pub fn ratio_profile(lambda: f64, big_m: usize, n: usize) -> f64 {
    coe_exponent(big_m, n) * (-lambda / big_m as f64).ln_1p() + 0.5 * lambda
}

/// `sup_Z f(Z)/g(Z)` for the scaled COE corner against the symmetric
/// Gaussian. Every eigenvalue sits at the maximizer `λ* = 2N + 1` of
/// [`ratio_profile`].
pub fn density_ratio_sup(big_m: usize, n: usize, log_c: &NormalizerEstimate) -> Result<f64> {
    if 2 * n + 1 >= big_m {
        return Err(Error::Regime(format!("ratio supremum needs 2N+1 < M, got N={n}, M={big_m}")));
    }
    if log_c.m != big_m || log_c.n != n {
        return Err(Error::Parameter("normalizer does not match (M, N)".into()));
    }
    let lambda_star = 2.0 * n as f64 + 1.0;
    let log_sup = log_c.log_c_scaled() - gsym_log_constant(n) + n as f64 * ratio_profile(lambda_star, big_m, n);
    Ok(log_sup.exp())
}

/// Grid maximizer of [`ratio_profile`] over `[0, M)`; returns `(argmax, step)`.
pub fn ratio_profile_grid_argmax(big_m: usize, n: usize, points: usize) -> (f64, f64) {
    let step = big_m as f64 / points as f64;
    let best = (0..points)
        .map(|k| k as f64 * step)
        .max_by(|a, b| ratio_profile(*a, big_m, n).total_cmp(&ratio_profile(*b, big_m, n)))
        .unwrap_or(0.0);
    (best, step)
}

/// Exact log-density of `√M·B` with `B` the top-left `p x q` block of an
/// `M x M` Haar unitary, `p >= q`, `p + q <= M`. A `q x p` input is
/// transposed first.
pub fn log_density_unitary_sub(z: &ComplexMatrix, big_m: usize, p: usize, q: usize) -> Result<LogDensityValue> {
    let z = if z.rows() == p && z.cols() == q {
        z.clone()
    } else if z.rows() == q && z.cols() == p {
        z.transpose()
    } else {
        return Err(Error::Dimension(format!("expected a {p}x{q} matrix, got {}x{}", z.rows(), z.cols())));
    };
    let lambdas = gram_eigs(&z);
    Ok(match log_det_term(&lambdas, big_m as f64) {
        Some(ld) => LogDensityValue::inside(unitary_sub_log_constant(big_m, p, q)? + (big_m - p - q) as f64 * ld),
        None => LogDensityValue::outside(),
    })
}

/// `-pq log(Mπ) + Σ_{j=1}^{q} [lnΓ(M-j+1) - lnΓ(M-j-p+1)]`.
pub fn unitary_sub_log_constant(big_m: usize, p: usize, q: usize) -> Result<f64> {
    if q == 0 || p < q || p + q > big_m {
        return Err(Error::Regime(format!(
            "unitary corner density needs p >= q >= 1 and p+q <= M, got p={p}, q={q}, M={big_m}"
        )));
    }
    let mf = big_m as f64;
    let mut v = -((p * q) as f64) * (mf * PI).ln();
    for j in 1..=q {
        let j = j as f64;
        v += ln_gamma(mf - j + 1.0) - ln_gamma(mf - j - p as f64 + 1.0);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_coe_submatrix, sample_haar_unitary};
    use crate::matrix::C64;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigs_examples() {
        assert_eq!(eigs_psd(&ComplexMatrix::identity(2)).unwrap(), vec![1.0, 1.0]);
        let d = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(eigs_psd(&d).unwrap(), vec![4.0, 0.0]);
        assert!(eigs_psd(&ComplexMatrix::zeros(2, 3)).is_err());
        let mut rng = RngStream::from_seed(1).rng();
        for n in [2, 3, 5] {
            let z = crate::ensembles::sample_ginibre(n, n, 1.0, &mut rng).unwrap();
            let ev = eigs_psd(&z).unwrap();
            assert!((ev.iter().sum::<f64>() - z.frobenius_sq()).abs() < 1e-10);
            assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn two_by_two_fast_path_matches_general_solver() {
        let mut rng = RngStream::from_seed(2).rng();
        for _ in 0..20 {
            let z = crate::ensembles::sample_ginibre(2, 2, 1.0, &mut rng).unwrap();
            let fast = gram_eigs(&z);
            let mut slow: Vec<f64> = z.gram().to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
            slow.sort_by(|a, b| b.total_cmp(a));
            assert!((fast[0] - slow[0]).abs() < 1e-12 && (fast[1] - slow[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn hua_values() {
        let h = hua_log_constant(10, 1).unwrap();
        assert!((h.log_c_unscaled - (8.0 / (2.0 * PI)).ln()).abs() < 1e-13);
        assert!((h.log_c_unscaled - 0.2416).abs() < 1e-4);
        let h2 = hua_log_constant(100, 2).unwrap();
        let lit = (96.0f64 * 97.0 * 98.0 / (4.0 * PI.powi(3))).ln();
        assert!((h2.log_c_unscaled - lit).abs() < 1e-10);
        assert!(matches!(hua_log_constant(3, 2), Err(Error::Regime(_))));
        assert_eq!(h.stderr, 0.0);
    }

    #[test]
    fn quadrature_constant_and_discrepancy() {
        let q = quadrature_log_constant(10, 1).unwrap();
        assert!((q.log_c_unscaled - (9.0 / (2.0 * PI)).ln()).abs() < 1e-12);
        assert!((q.log_c_unscaled - 0.3593).abs() < 1e-4);
        let cmp = hua_discrepancy(&q).unwrap();
        assert!((cmp.relative_difference - (8.0 / 9.0 - 1.0)).abs() < 1e-12);
        assert!(!cmp.agrees(3.0, 1e-10));
        assert!(quadrature_log_constant(10, 2).is_err());
    }

    #[test]
    fn coe_density_examples() {
        let big_m = 10;
        let q = quadrature_log_constant(big_m, 1).unwrap();
        let zero = ComplexMatrix::zeros(1, 1);
        let v = log_density_coe_sub(&zero, big_m, true, &q).unwrap();
        assert!(v.support && v.value == q.log_c_scaled());
        let outside = ComplexMatrix::from_diagonal(&[c(11f64.sqrt(), 0.0)]);
        assert!(!log_density_coe_sub(&outside, big_m, true, &q).unwrap().support);
        let edge = ComplexMatrix::from_diagonal(&[c(10f64.sqrt(), 0.0)]);
        assert!(!log_density_coe_sub(&edge, big_m, true, &q).unwrap().support);
        let asym = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let h = hua_log_constant(big_m, 2).unwrap();
        assert!(matches!(log_density_coe_sub(&asym, big_m, true, &h), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn n1_density_integrates_to_one() {
        // Radial integral of the scaled density over |z|² < M: π ∫₀^M f dt.
        let big_m = 10;
        let q = quadrature_log_constant(big_m, 1).unwrap();
        let f = |t: f64| {
            let z = ComplexMatrix::from_diagonal(&[c(t.sqrt(), 0.0)]);
            let v = log_density_coe_sub(&z, big_m, true, &q).unwrap();
            if v.support {
                v.value.exp()
            } else {
                0.0
            }
        };
        let mass = PI * tanh_sinh(f, 0.0, big_m as f64, 1e-14);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn gsym_density_examples() {
        let v = log_density_gsym(&ComplexMatrix::zeros(1, 1)).unwrap().value;
        assert!((v + (2.0 * PI).ln()).abs() < 1e-14);
        assert!((v + 1.8379).abs() < 1e-4);
        let v = log_density_gsym(&ComplexMatrix::zeros(2, 2)).unwrap().value;
        assert!((v - (-2.0 * 2f64.ln() - 3.0 * PI.ln())).abs() < 1e-14);
    }

    #[test]
    fn gsym_density_box_mass() {
        // Uniform sampling on the square [-L, L]² for N = 1.
        let l = 12.0;
        let mut rng = RngStream::from_seed(3).rng();
        let n = 400_000;
        let area = 4.0 * l * l;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let z = c(rng.random_range(-l..l), rng.random_range(-l..l));
                area * log_density_gsym(&ComplexMatrix::from_diagonal(&[z])).unwrap().value.exp()
            })
            .collect();
        let m = crate::stats::mean(&xs);
        assert!((m - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn scaled_and_unscaled_consistency() {
        let big_m = 12;
        let h = hua_log_constant(big_m, 2).unwrap();
        let mut rng = RngStream::from_seed(4).rng();
        let a = sample_coe_submatrix(2, big_m, &mut rng).unwrap();
        let un = log_density_coe_sub(&a, big_m, false, &h).unwrap();
        let sc = log_density_coe_sub(&a.scale_real((big_m as f64).sqrt()), big_m, true, &h).unwrap();
        assert!(un.support && sc.support);
        assert!((sc.value - (un.value - 3.0 * (big_m as f64).ln())).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn unitary_invariance(seed in any::<u64>()) {
            let s = RngStream::from_seed(seed);
            let big_m = 16;
            let h = hua_log_constant(big_m, 3).unwrap();
            let z = sample_coe_submatrix(3, big_m, &mut s.child(0).rng()).unwrap().scale_real(2.0);
            let v = sample_haar_unitary(3, &mut s.child(1).rng()).unwrap();
            let rotated = v.matmul(&z).unwrap().matmul(&v.transpose()).unwrap().symmetrized();
            let a = log_density_coe_sub(&z, big_m, true, &h).unwrap();
            let b = log_density_coe_sub(&rotated, big_m, true, &h).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-10);
        }
    }

    #[test]
    fn importance_matches_quadrature_at_n1() {
        let q = quadrature_log_constant(50, 1).unwrap();
        let is = importance_normalizer(50, 1, 50_000, &RngStream::from_seed(5)).unwrap();
        assert!(is.stderr > 0.0);
        let cmp = compare_with_reference(&is, &q);
        assert!(cmp.z_score.abs() < 3.0, "{cmp:?}");
    }

    #[test]
    fn importance_precision_at_n2() {
        let is = importance_normalizer(200, 2, 100_000, &RngStream::from_seed(6)).unwrap();
        assert!(is.stderr < 0.01, "{}", is.stderr);
        assert!(matches!(importance_normalizer(200, 2, 0, &RngStream::from_seed(6)), Err(Error::Parameter(_))));
    }

    #[test]
    fn zeta_matches_quadrature_at_n1() {
        let q = quadrature_log_constant(50, 1).unwrap();
        let exact = zeta(50, 1, &q).unwrap();
        let est = zeta(50, 1, &importance_normalizer(50, 1, 50_000, &RngStream::from_seed(7)).unwrap()).unwrap();
        assert!((est.mean - exact.mean).abs() <= 3.0 * est.stderr, "{est:?} vs {exact:?}");
        // Consistency identity exp(-N³/2M) = ζ c 2^N π^{N(N+1)/2}.
        let lhs = -1.0 / 100.0;
        let rhs = exact.mean.ln() + q.log_c_scaled() - gsym_log_constant(1);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn ratio_sup_examples() {
        let q = quadrature_log_constant(10_000, 1).unwrap();
        let s = density_ratio_sup(10_000, 1, &q).unwrap();
        assert!(s > 1.0 && s <= 1.01, "{s}");
        for (big_m, n) in [(100usize, 2usize), (1000, 2), (50, 1)] {
            let (arg, step) = ratio_profile_grid_argmax(big_m, n, 200_000);
            assert!((arg - (2 * n + 1) as f64).abs() <= step, "{arg}");
        }
        assert!(density_ratio_sup(5, 2, &hua_log_constant(5, 2).unwrap()).is_err());
    }

    #[test]
    fn unitary_sub_density() {
        let v = log_density_unitary_sub(&ComplexMatrix::zeros(1, 1), 10, 1, 1).unwrap();
        assert!((v.value - (9.0 / (10.0 * PI)).ln()).abs() < 1e-13);
        let big_m = 10;
        let f = |t: f64| {
            let z = ComplexMatrix::from_diagonal(&[c(t.sqrt(), 0.0)]);
            let v = log_density_unitary_sub(&z, big_m, 1, 1).unwrap();
            if v.support {
                v.value.exp()
            } else {
                0.0
            }
        };
        let mass = PI * tanh_sinh(f, 0.0, big_m as f64, 1e-14);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
        let edge =
            ComplexMatrix::from_fn(3, 2, |i, j| if i == j && i == 0 { c(10f64.sqrt(), 0.0) } else { c(0.0, 0.0) });
        assert!(!log_density_unitary_sub(&edge, 10, 3, 2).unwrap().support);
        // Transposed input is accepted.
        assert!(log_density_unitary_sub(&ComplexMatrix::zeros(2, 3), 10, 3, 2).unwrap().support);
        assert!(log_density_unitary_sub(&ComplexMatrix::zeros(2, 2), 3, 2, 2).is_err());
    }
}
