//! Hafnians of complex symmetric matrices.
//!
//! `hafnian_enum` walks every perfect matching and is the oracle.
//! `hafnian` expands along the lowest remaining index and memoizes on the
//! bitmask of indices still unpaired.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};

/// Absolute asymmetry (relative to `max(1, max|A_ij|)`) tolerated before an
/// input is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Largest dimension the memoized engine accepts (index sets are `u64` masks).
pub const MAX_DIM: usize = 64;

/// Iterates over the perfect matchings of `{0, …, 2n-1}`.
///
/// The cursor is a mixed-radix counter: digit `k` selects the partner of the
/// smallest index still unpaired after `k` pairs have been fixed, so digit
/// `k` ranges over `2n - 2k - 1` values.
#[derive(Debug, Clone)]
pub struct PairingIterator {
    n: usize,
    digits: Vec<usize>,
    done: bool,
}

impl PairingIterator {
    pub fn new(n: usize) -> Self {
        Self { n, digits: vec![0; n], done: false }
    }

    pub fn half_dimension(&self) -> usize {
        self.n
    }

    fn decode(&self) -> Vec<(usize, usize)> {
        let mut free: Vec<usize> = (0..2 * self.n).collect();
        let mut pairs = Vec::with_capacity(self.n);
        for &d in &self.digits {
            let i = free.remove(0);
            let j = free.remove(d);
            pairs.push((i, j));
        }
        pairs
    }

    fn advance(&mut self) {
        for k in (0..self.n).rev() {
            let radix = 2 * (self.n - k) - 1;
            self.digits[k] += 1;
            if self.digits[k] < radix {
                return;
            }
            self.digits[k] = 0;
        }
        self.done = true;
    }
}

impl Iterator for PairingIterator {
    type Item = Vec<(usize, usize)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.decode();
        if self.n == 0 {
            self.done = true;
        } else {
            self.advance();
        }
        Some(out)
    }
}

/// `(2n-1)!!` as a float, the number of perfect matchings of `2n` points.
pub fn double_factorial_odd(n: usize) -> f64 {
    (1..=n).map(|k| (2 * k - 1) as f64).product()
}

/// Checks shape and symmetry; returns the symmetrized matrix.
fn prepare(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("hafnian needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    if !a.rows().is_multiple_of(2) {
        return Err(Error::Dimension(format!("hafnian needs even dimension, got {}", a.rows())));
    }
    let scale = a.max_abs().max(1.0);
    let asym = a.symmetry_residual();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(a.symmetrized())
}

/// Sum over all pairings of the product of paired entries.
pub fn hafnian_enum(a: &ComplexMatrix) -> Result<C64> {
    let a = prepare(a)?;
    let n = a.rows() / 2;
    Ok(PairingIterator::new(n).map(|p| p.iter().map(|&(i, j)| a[(i, j)]).product::<C64>()).sum())
}

struct Memo<'a> {
    a: &'a ComplexMatrix,
    table: HashMap<u64, C64>,
}

impl Memo<'_> {
    fn haf(&mut self, mask: u64) -> C64 {
        if mask == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if let Some(v) = self.table.get(&mask) {
            return *v;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1u64 << i);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut m = rest;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            m &= m - 1;
            let aij = self.a[(i, j)];
            if aij != Complex64::new(0.0, 0.0) {
                acc += aij * self.haf(rest & !(1u64 << j));
            }
        }
        // Masks with two bits left are leaves; caching them costs more than it saves.
        if mask.count_ones() > 2 {
            self.table.insert(mask, acc);
        }
        acc
    }
}

/// Hafnian by row expansion `Haf(A) = Σ_j A_1j Haf(A without 1, j)` with
/// memoization on the set of remaining indices. The empty matrix has hafnian 1.
pub fn hafnian(a: &ComplexMatrix) -> Result<C64> {
    let a = prepare(a)?;
    let d = a.rows();
    if d > MAX_DIM {
        return Err(Error::Dimension(format!("hafnian supports dimension <= {MAX_DIM}, got {d}")));
    }
    if d == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let full = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
    let mut memo = Memo { a: &a, table: HashMap::new() };
    Ok(memo.haf(full))
}

/// `Haf(A ⊕ B)` computed on the assembled direct sum.
pub fn hafnian_block_diag(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<C64> {
    prepare(a)?;
    prepare(b)?;
    hafnian(&a.direct_sum(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64) -> C64 {
        Complex64::new(re, 0.0)
    }

    fn ones(n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| c(1.0))
    }

    fn random_symmetric(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = RngStream::from_seed(seed).rng();
        let mut a = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                a[(i, j)] = z;
                a[(j, i)] = z;
            }
        }
        a
    }

    fn rel_err(x: C64, y: C64) -> f64 {
        (x - y).norm() / y.norm().max(1e-300)
    }

    #[test]
    fn pairing_counts_and_coverage() {
        for n in 0..6 {
            let all: Vec<_> = PairingIterator::new(n).collect();
            assert_eq!(all.len() as f64, double_factorial_odd(n));
            for p in &all {
                let mut seen = vec![false; 2 * n];
                for &(i, j) in p {
                    assert!(i < j && !seen[i] && !seen[j]);
                    seen[i] = true;
                    seen[j] = true;
                }
            }
            let mut sorted = all.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), all.len());
        }
    }

    #[test]
    fn two_by_two() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| c([[3.0, 5.0], [5.0, 7.0]][i][j]));
        assert_eq!(hafnian_enum(&a).unwrap(), c(5.0));
        assert_eq!(hafnian(&a).unwrap(), c(5.0));
    }

    #[test]
    fn all_ones() {
        assert_eq!(hafnian_enum(&ones(4)).unwrap(), c(3.0));
        assert_eq!(hafnian(&ones(4)).unwrap(), c(3.0));
        assert_eq!(hafnian(&ones(6)).unwrap(), c(15.0));
        assert_eq!(hafnian(&ones(12)).unwrap(), c(10395.0));
    }

    #[test]
    fn four_by_four_generic() {
        let a = random_symmetric(4, 3);
        let expect = a[(0, 1)] * a[(2, 3)] + a[(0, 2)] * a[(1, 3)] + a[(0, 3)] * a[(1, 2)];
        assert!(rel_err(hafnian_enum(&a).unwrap(), expect) < 1e-14);
        assert!(rel_err(hafnian(&a).unwrap(), expect) < 1e-14);
    }

    #[test]
    fn zero_and_empty() {
        for d in [2, 4, 8] {
            assert_eq!(hafnian(&ComplexMatrix::zeros(d, d)).unwrap(), c(0.0));
        }
        assert_eq!(hafnian(&ComplexMatrix::zeros(0, 0)).unwrap(), c(1.0));
        assert_eq!(hafnian_enum(&ComplexMatrix::zeros(0, 0)).unwrap(), c(1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(hafnian(&ones(3)), Err(Error::Dimension(_))));
        assert!(matches!(hafnian(&ComplexMatrix::zeros(2, 4)), Err(Error::Dimension(_))));
        let mut a = ones(4);
        a[(0, 1)] = c(1.1);
        assert!(matches!(hafnian(&a), Err(Error::NotSymmetric(_))));
        assert!(matches!(hafnian_enum(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let mut a = ones(4);
        a[(0, 1)] = c(1.0 + 1e-13);
        assert!((hafnian(&a).unwrap() - c(3.0)).norm() < 1e-12);
    }

    #[test]
    fn recursion_matches_enumeration_on_random_6x6() {
        for seed in 0..50 {
            let a = random_symmetric(6, 100 + seed);
            let e = hafnian_enum(&a).unwrap();
            assert!(rel_err(hafnian(&a).unwrap(), e) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn recursion_matches_enumeration_on_10x10() {
        let a = random_symmetric(10, 7);
        assert!(rel_err(hafnian(&a).unwrap(), hafnian_enum(&a).unwrap()) < 1e-10);
    }

    #[test]
    fn block_diagonal_examples() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| c(if i == j { 0.0 } else { 1.0 }));
        let b = ComplexMatrix::from_fn(2, 2, |i, j| c(if i == j { 0.0 } else { 2.0 }));
        assert_eq!(hafnian_block_diag(&a, &b).unwrap(), c(2.0));
        assert_eq!(hafnian_block_diag(&ones(4), &ones(2)).unwrap(), c(3.0));
        let (x, y) = (random_symmetric(4, 11), random_symmetric(4, 12));
        let prod = hafnian_enum(&x).unwrap() * hafnian_enum(&y).unwrap();
        assert!(rel_err(hafnian_block_diag(&x, &y).unwrap(), prod) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn permutation_invariance(seed in any::<u64>(), perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let a = random_symmetric(6, seed);
            let pa = a.permuted(&perm).unwrap();
            prop_assert!(rel_err(hafnian(&pa).unwrap(), hafnian(&a).unwrap()) < 1e-10);
        }

        #[test]
        fn homogeneity(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0, half in 1usize..4) {
            let s = Complex64::new(re, im);
            prop_assume!(s.norm() > 1e-3);
            let a = random_symmetric(2 * half, seed);
            let lhs = hafnian(&a.scale(s)).unwrap();
            let rhs = s.powu(half as u32) * hafnian(&a).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1e-12));
        }

        #[test]
        fn multiplicativity(s1 in any::<u64>(), s2 in any::<u64>(), h1 in 1usize..3, h2 in 1usize..3) {
            let a = random_symmetric(2 * h1, s1);
            let b = random_symmetric(2 * h2, s2);
            let prod = hafnian(&a).unwrap() * hafnian(&b).unwrap();
            prop_assert!((hafnian_block_diag(&a, &b).unwrap() - prod).norm() <= 1e-10 * prod.norm().max(1e-12));
        }
    }
}
