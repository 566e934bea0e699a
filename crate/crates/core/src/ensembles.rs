//! Random-matrix ensembles: Ginibre, Haar unitary, COE, the symmetric
//! Gaussian ensemble, `GGᵀ`, and the Gram–Schmidt coupling between a COE
//! corner and `ZZᵀ`.
//!
//! Haar frames are produced by Gram–Schmidt on the rows of a Ginibre matrix.
//! Each Gram–Schmidt step divides by a positive real norm, which is the same
//! as QR with the diagonal of `R` forced positive; that phase choice is what
//! makes the result exactly Haar rather than merely unitary.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};
use crate::rng::RngStream;

/// A draw from `CN(0, variance)`: real and imaginary parts independent with
/// variance `variance / 2` each.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn check_variance(variance: f64) -> Result<()> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Parameter(format!("entry variance must be positive, got {variance}")));
    }
    Ok(())
}

/// `rows x cols` matrix of i.i.d. `CN(0, variance)` entries.
pub fn sample_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("Ginibre matrix needs positive dimensions, got {rows}x{cols}")));
    }
    check_variance(variance)?;
    Ok(ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, variance)))
}

/// Orthonormalizes the rows in place (classical Gram–Schmidt, two passes).
pub fn orthonormalize_rows(a: &mut ComplexMatrix) -> Result<()> {
    let (n, m) = (a.rows(), a.cols());
    if n > m {
        return Err(Error::Dimension(format!("cannot orthonormalize {n} rows of length {m}")));
    }
    for k in 0..n {
        for _pass in 0..2 {
            for j in 0..k {
                let proj: C64 = a.row(j).iter().zip(a.row(k)).map(|(u, v)| u.conj() * v).sum();
                let basis: Vec<C64> = a.row(j).to_vec();
                for (v, u) in a.row_mut(k).iter_mut().zip(&basis) {
                    *v -= proj * u;
                }
            }
        }
        let norm = a.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invariant(format!("row {k} degenerate during Gram-Schmidt")));
        }
        let inv = 1.0 / norm;
        for v in a.row_mut(k) {
            *v *= inv;
        }
    }
    Ok(())
}

/// The first `n` rows of an `m x m` Haar unitary (uniform on the Stiefel
/// manifold of orthonormal `n`-frames in `C^m`). Costs `O(m n²)`.
pub fn haar_rows<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if n == 0 || n > m {
        return Err(Error::Dimension(format!("need 1 <= rows <= {m}, got {n}")));
    }
    let mut z = sample_ginibre(n, m, 1.0, rng)?;
    orthonormalize_rows(&mut z)?;
    Ok(z)
}

/// `m x m` Haar-distributed unitary.
pub fn sample_haar_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<ComplexMatrix> {
    haar_rows(m, m, rng)
}

/// `m x m` COE matrix `W = U Uᵀ`, bit-exactly symmetric.
pub fn sample_coe<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<ComplexMatrix> {
    let u = sample_haar_unitary(m, rng)?;
    Ok(u.times_own_transpose())
}

/// Upper-left `n x n` block of an `m x m` COE matrix. Only the first `n`
/// rows of the underlying unitary are generated.
pub fn sample_coe_submatrix<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<ComplexMatrix> {
    let v = haar_rows(n, m, rng)?;
    Ok(v.times_own_transpose())
}

/// Upper-left `p x q` block of an `m x m` Haar unitary, built from `q`
/// orthonormal columns.
pub fn sample_haar_corner<R: Rng + ?Sized>(p: usize, q: usize, m: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if p == 0 || p > m {
        return Err(Error::Dimension(format!("need 1 <= p <= {m}, got {p}")));
    }
    // Columns of a Haar unitary are distributed like rows of one.
    let cols = haar_rows(q, m, rng)?;
    Ok(ComplexMatrix::from_fn(p, q, |i, j| cols[(j, i)]))
}

/// Restriction of `a` to the given rows and columns (order preserving).
pub fn submatrix(a: &ComplexMatrix, row_idx: &[usize], col_idx: &[usize]) -> Result<ComplexMatrix> {
    a.submatrix(row_idx, col_idx)
}

/// `n x n` symmetric Gaussian: `CN(0,2)` diagonal, `CN(0,1)` off-diagonal.
pub fn sample_gsym<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::Dimension("symmetric Gaussian needs n >= 1".into()));
    }
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = complex_normal(rng, 2.0);
        for j in i + 1..n {
            let z = complex_normal(rng, 1.0);
            g[(i, j)] = z;
            g[(j, i)] = z;
        }
    }
    Ok(g)
}

/// `G Gᵀ` (plain transpose) for `G` an `n x k` matrix of `CN(0, variance)`.
pub fn sample_ggt<R: Rng + ?Sized>(n: usize, k: usize, variance: f64, rng: &mut R) -> Result<ComplexMatrix> {
    if n > k {
        return Err(Error::Dimension(format!("GGᵀ needs n <= k, got n={n}, k={k}")));
    }
    Ok(sample_ginibre(n, k, variance, rng)?.times_own_transpose())
}

/// The two halves of the Gram–Schmidt coupling.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    /// `√K · W_NN` where `W = V Vᵀ` and `V` orthonormalizes the rows of `Z`.
    pub scaled_coe: ComplexMatrix,
    /// `(Z Zᵀ)_NN`, a draw from the `GGᵀ` ensemble.
    pub ggt: ComplexMatrix,
}

impl CoupledPair {
    pub fn max_entry_distance(&self) -> f64 {
        self.scaled_coe.max_abs_diff(&self.ggt).expect("coupled pair shapes agree")
    }
}

/// Default entry variance of `Z` in the coupling: `1/√K`, which makes both
/// `√K W_NN` and `ZZᵀ` have order-one entries.
pub fn coupling_default_variance(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

/// Builds `(√K W_NN, (ZZᵀ)_NN)` from one Ginibre matrix `Z`. Only the top `n`
/// rows of `Z` matter: Gram–Schmidt on rows is causal. Outside
/// `N² <= K/12` the pair is still produced, with a logged warning.
pub fn coupled_coe_and_ggt<R: Rng + ?Sized>(n: usize, k: usize, variance: f64, rng: &mut R) -> Result<CoupledPair> {
    if n == 0 || n > k {
        return Err(Error::Dimension(format!("coupling needs 1 <= n <= k, got n={n}, k={k}")));
    }
    if 12 * n * n > k {
        log::warn!("coupling outside N^2 <= K/12 (N={n}, K={k}); bound on entry distance does not apply");
    }
    let z = sample_ginibre(n, k, variance, rng)?;
    let ggt = z.times_own_transpose();
    let mut v = z;
    orthonormalize_rows(&mut v)?;
    let scaled_coe = v.times_own_transpose().scale_real((k as f64).sqrt());
    Ok(CoupledPair { scaled_coe, ggt })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    Ginibre,
    HaarUnitary,
    Coe,
    GaussianSym,
    Ggt,
}

/// Tagged description of one of the ensembles, with its dimensions.
///
/// `m` is the ambient dimension, `n` the number of rows of the drawn matrix
/// and `k` its column / squeezed-mode count. Fields a kind does not use are
/// ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub entry_variance: f64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        check_variance(self.entry_variance)?;
        match self.kind {
            EnsembleKind::Ginibre if self.n == 0 || self.k == 0 => {
                Err(Error::Dimension("Ginibre needs n, k >= 1".into()))
            }
            EnsembleKind::HaarUnitary | EnsembleKind::Coe if self.m == 0 => {
                Err(Error::Dimension("unitary ensembles need m >= 1".into()))
            }
            EnsembleKind::GaussianSym if self.n == 0 => Err(Error::Dimension("need n >= 1".into())),
            EnsembleKind::Ggt if self.n == 0 || self.n > self.k => {
                Err(Error::Dimension(format!("GGᵀ needs 1 <= n <= k, got n={}, k={}", self.n, self.k)))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ComplexMatrix> {
        self.validate()?;
        match self.kind {
            EnsembleKind::Ginibre => sample_ginibre(self.n, self.k, self.entry_variance, rng),
            EnsembleKind::HaarUnitary => sample_haar_unitary(self.m, rng),
            EnsembleKind::Coe => sample_coe(self.m, rng),
            EnsembleKind::GaussianSym => sample_gsym(self.n, rng),
            EnsembleKind::Ggt => sample_ggt(self.n, self.k, self.entry_variance, rng),
        }
    }

    /// Sample number `index` drawn from its own child stream of `stream`.
    pub fn sample_indexed(&self, stream: &RngStream, index: u64) -> Result<ComplexMatrix> {
        self.sample(&mut stream.child(index).rng())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_value, ks_statistic, mean_stderr};

    fn stream(seed: u64) -> RngStream {
        RngStream::from_seed(seed)
    }

    #[test]
    fn ginibre_scalar_second_moment() {
        let mut rng = stream(1).rng();
        let xs: Vec<f64> =
            (0..100_000).map(|_| sample_ginibre(1, 1, 1.0, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 1.0).abs() < 3.0 * se, "E|z|^2 = {m} ± {se}");
    }

    #[test]
    fn ginibre_shape_and_zero_mean() {
        let mut rng = stream(2).rng();
        let g = sample_ginibre(2, 3, 1.0, &mut rng).unwrap();
        assert_eq!((g.rows(), g.cols(), g.as_slice().len()), (2, 3, 6));
        let n = 20_000;
        let (re, im): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| {
                let z = sample_ginibre(2, 3, 1.0, &mut rng).unwrap()[(1, 2)];
                (z.re, z.im)
            })
            .unzip();
        let (mr, ser) = mean_stderr(&re);
        let (mi, sei) = mean_stderr(&im);
        assert!(mr.abs() < 3.0 * ser && mi.abs() < 3.0 * sei);
    }

    #[test]
    fn ginibre_variance_scaling() {
        let mut rng = stream(3).rng();
        let mut xs = Vec::new();
        while xs.len() < 100_000 {
            let g = sample_ginibre(4, 4, 0.25, &mut rng).unwrap();
            xs.extend(g.as_slice().iter().map(|z| z.norm_sqr()));
        }
        let (m, se) = mean_stderr(&xs);
        assert!((m - 0.25).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn ginibre_rejects_bad_input() {
        let mut rng = stream(4).rng();
        assert!(sample_ginibre(0, 3, 1.0, &mut rng).is_err());
        assert!(sample_ginibre(2, 3, 0.0, &mut rng).is_err());
        assert!(sample_ginibre(2, 3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn haar_one_by_one_is_uniform_phase() {
        let mut rng = stream(5).rng();
        let (re, im): (Vec<f64>, Vec<f64>) = (0..20_000)
            .map(|_| {
                let u = sample_haar_unitary(1, &mut rng).unwrap()[(0, 0)];
                assert!((u.norm() - 1.0).abs() < 1e-14);
                (u.re, u.im)
            })
            .unzip();
        let (mr, ser) = mean_stderr(&re);
        let (mi, sei) = mean_stderr(&im);
        assert!(mr.abs() < 3.0 * ser && mi.abs() < 3.0 * sei);
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = stream(6).rng();
        for m in [2, 5, 17, 40] {
            let u = sample_haar_unitary(m, &mut rng).unwrap();
            assert!(u.unitarity_residual() < 1e-12, "m={m}: {}", u.unitarity_residual());
        }
    }

    #[test]
    fn haar_entry_second_moment() {
        // E|U_11|^2 = Wg(id) at n = 1, i.e. 1/8 for M = 8
        let mut rng = stream(7).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_haar_unitary(8, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 0.125).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn haar_invariance_under_diagonal_phases() {
        let m = 4;
        let phases: Vec<C64> = [0.3, 1.9, -2.2, 0.7].iter().map(|&t| C64::from_polar(1.0, t)).collect();
        let d = ComplexMatrix::from_diagonal(&phases);
        let s = stream(8);
        let n = 10_000;
        let plain: Vec<f64> =
            (0..n).map(|i| sample_haar_unitary(m, &mut s.child(i).rng()).unwrap().trace().norm()).collect();
        let rotated: Vec<f64> = (0..n)
            .map(|i| {
                let u = sample_haar_unitary(m, &mut s.child(n + i).rng()).unwrap();
                d.matmul(&u).unwrap().trace().norm()
            })
            .collect();
        let ks = ks_statistic(&plain, &rotated);
        assert!(ks < ks_critical_value(0.01, n as usize, n as usize), "KS = {ks}");
    }

    #[test]
    fn coe_symmetric_and_unitary() {
        let mut rng = stream(9).rng();
        for m in [2, 6, 25] {
            let w = sample_coe(m, &mut rng).unwrap();
            assert_eq!(w.symmetry_residual(), 0.0);
            assert!(w.unitarity_residual() < 1e-12);
        }
    }

    #[test]
    fn coe_entry_moments() {
        // E|W_11|^2 = 2/(M+1), E|W_12|^2 = 1/(M+1)
        let m = 10;
        let s = stream(10);
        let (d, o): (Vec<f64>, Vec<f64>) = crate::par::map_indexed(40_000, |i| {
            let w = sample_coe(m, &mut s.child(i as u64).rng()).unwrap();
            (w[(0, 0)].norm_sqr(), w[(0, 1)].norm_sqr())
        })
        .into_iter()
        .unzip();
        let (md, sed) = mean_stderr(&d);
        let (mo, seo) = mean_stderr(&o);
        assert!((md - 2.0 / 11.0).abs() < 3.0 * sed, "{md} ± {sed}");
        assert!((mo - 1.0 / 11.0).abs() < 3.0 * seo, "{mo} ± {seo}");
    }

    #[test]
    fn coe_corner_is_symmetric_principal_block() {
        let mut rng = stream(11).rng();
        let w = sample_coe(4, &mut rng).unwrap();
        let a = submatrix(&w, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(a.symmetry_residual(), 0.0);
        assert_eq!(a[(0, 1)], w[(0, 1)]);
    }

    #[test]
    fn coe_submatrix_sampler_matches_full_coe_moment() {
        // The reduced sampler must reproduce E|A_11|^2 = 2/(M+1).
        let s = stream(12);
        let xs: Vec<f64> = crate::par::map_indexed(40_000, |i| {
            sample_coe_submatrix(2, 10, &mut s.child(i as u64).rng()).unwrap()[(0, 0)].norm_sqr()
        });
        let (m, se) = mean_stderr(&xs);
        assert!((m - 2.0 / 11.0).abs() < 3.0 * se);
    }

    #[test]
    fn gsym_moments_and_symmetry() {
        let mut rng = stream(13).rng();
        let g = sample_gsym(2, &mut rng).unwrap();
        assert_eq!(g[(0, 1)], g[(1, 0)]);
        let one: Vec<f64> = (0..50_000).map(|_| sample_gsym(1, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let (m, se) = mean_stderr(&one);
        assert!((m - 2.0).abs() < 3.0 * se);
        let tr: Vec<f64> = (0..50_000).map(|_| sample_gsym(3, &mut rng).unwrap().frobenius_sq()).collect();
        let (m, se) = mean_stderr(&tr);
        assert!((m - 12.0).abs() < 3.0 * se, "{m} ± {se}");
        let off: Vec<f64> = (0..50_000).map(|_| sample_gsym(3, &mut rng).unwrap()[(0, 2)].norm_sqr()).collect();
        let (m, se) = mean_stderr(&off);
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn ggt_cases() {
        let mut rng = stream(14).rng();
        // Scalar: G_11^2, whose modulus has the law of |z|^2.
        let a: Vec<f64> = (0..50_000).map(|_| sample_ggt(1, 1, 1.0, &mut rng).unwrap()[(0, 0)].norm()).collect();
        let (m, se) = mean_stderr(&a);
        assert!((m - 1.0).abs() < 3.0 * se);
        let k = 100;
        let v = 1.0 / (k as f64).sqrt();
        let e: Vec<f64> = (0..20_000).map(|_| sample_ggt(2, k, v, &mut rng).unwrap()[(0, 1)].norm_sqr()).collect();
        let (m, se) = mean_stderr(&e);
        // E|(GGᵀ)_12|^2 = K v^2 = 1
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
        let g = sample_ggt(3, 7, 1.0, &mut rng).unwrap();
        assert!(g.symmetry_residual() <= 1e-14);
        assert!(sample_ggt(3, 2, 1.0, &mut rng).is_err());
    }

    #[test]
    fn coupling_well_formed() {
        let mut rng = stream(15).rng();
        let p = coupled_coe_and_ggt(1, 50, coupling_default_variance(50), &mut rng).unwrap();
        assert_eq!((p.scaled_coe.rows(), p.ggt.rows()), (1, 1));
        assert!(p.max_entry_distance().is_finite());
        let p = coupled_coe_and_ggt(2, 400, coupling_default_variance(400), &mut rng).unwrap();
        assert!(p.scaled_coe.symmetry_residual() <= 1e-12);
        assert!(p.ggt.symmetry_residual() <= 1e-12);
    }

    #[test]
    fn coupling_distance_shrinks_with_k() {
        let s = stream(16);
        let medians: Vec<f64> = [100usize, 400, 1600]
            .iter()
            .map(|&k| {
                let d: Vec<f64> = (0..200)
                    .map(|i| {
                        coupled_coe_and_ggt(2, k, coupling_default_variance(k), &mut s.child(i).rng())
                            .unwrap()
                            .max_entry_distance()
                    })
                    .collect();
                crate::stats::median(&d)
            })
            .collect();
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    #[test]
    fn determinism() {
        let spec = EnsembleSpec { kind: EnsembleKind::Coe, m: 6, n: 0, k: 0, entry_variance: 1.0 };
        let s = stream(17);
        assert_eq!(spec.sample_indexed(&s, 3).unwrap(), spec.sample_indexed(&s, 3).unwrap());
        assert_ne!(spec.sample_indexed(&s, 3).unwrap(), spec.sample_indexed(&s, 4).unwrap());
    }

    #[test]
    fn spec_validation() {
        let bad = EnsembleSpec { kind: EnsembleKind::Ggt, m: 0, n: 3, k: 2, entry_variance: 1.0 };
        assert!(bad.validate().is_err());
        let bad = EnsembleSpec { kind: EnsembleKind::Ginibre, m: 0, n: 2, k: 2, entry_variance: 0.0 };
        assert!(bad.validate().is_err());
    }
}
