//! Weingarten calculus over `S_n` (n <= 6), Haar moments, and the exact
//! singular-value moments of COE corners, symmetric Gaussians and unitary
//! corners.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::densities::eigs_psd;
use crate::ensembles::{sample_coe_submatrix, sample_gsym};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::MCEstimate;

/// Largest `n` for which tables are built.
pub const MAX_WEINGARTEN_N: usize = 6;

/// A permutation of `{0, …, n-1}` stored by its images.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, dim: n });
            }
            if seen[i] {
                return Err(Error::DuplicateIndex(i));
            }
            seen[i] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self { images: (0..n).collect() }
    }

    /// The transposition swapping `a` and `b`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(a, b);
        Self { images }
    }

    /// `k -> k + 1 (mod n)`.
    pub fn cyclic_shift(n: usize) -> Self {
        Self { images: (0..n).map(|k| (k + 1) % n).collect() }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n(), other.n(), "composing permutations of different degree");
        Self { images: other.images.iter().map(|&i| self.images[i]).collect() }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.n()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Self { images: inv }
    }

    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cyc.push(i);
                i = self.images[i];
            }
            out.push(cyc);
        }
        out
    }

    pub fn cycle_count(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if !seen[start] {
                count += 1;
                let mut i = start;
                while !seen[i] {
                    seen[i] = true;
                    i = self.images[i];
                }
            }
        }
        count
    }

    /// Cycle lengths sorted descending (an integer partition of `n`).
    pub fn cycle_type(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.cycles().iter().map(Vec::len).collect();
        t.sort_unstable_by(|a, b| b.cmp(a));
        t
    }

    /// Minimal number of transpositions, `n - #cycles`.
    pub fn length(&self) -> usize {
        self.n() - self.cycle_count()
    }

    /// All `n!` permutations in lexicographic order of their image arrays.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut cur: Vec<usize> = (0..n).collect();
        let mut out = vec![Self { images: cur.clone() }];
        loop {
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
            cur.swap(i - 1, j);
            cur[i..].reverse();
            out.push(Self { images: cur.clone() });
        }
    }
}

/// Weingarten values `Wg(σ; d)` for `σ ∈ S_n`, keyed by cycle type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeingartenTable {
    pub n: usize,
    pub d: f64,
    pub values: BTreeMap<Vec<usize>, f64>,
}

impl WeingartenTable {
    /// Solves `Σ_τ d^{#cycles(στ⁻¹)} Wg(τ) = δ_{σ,id}` by LU on the full
    /// `n! x n!` Gram matrix (scaled by `d^{-n}` for conditioning).
    pub fn new(n: usize, d: f64) -> Result<Self> {
        if n == 0 || n > MAX_WEINGARTEN_N {
            return Err(Error::Parameter(format!("Weingarten tables need 1 <= n <= {MAX_WEINGARTEN_N}, got {n}")));
        }
        if d.is_nan() || d < n as f64 {
            return Err(Error::Regime(format!("Weingarten Gram matrix needs d >= n (d={d}, n={n})")));
        }
        let perms = Permutation::all(n);
        let k = perms.len();
        let inverses: Vec<Permutation> = perms.iter().map(Permutation::inverse).collect();
        let pow: Vec<f64> = (0..=n).map(|c| d.powi(c as i32 - n as i32)).collect();
        let gram = DMatrix::from_fn(k, k, |i, j| pow[perms[i].compose(&inverses[j]).cycle_count()]);
        let mut rhs = DVector::zeros(k);
        rhs[0] = 1.0; // index 0 is the identity in lexicographic order
        let sol = gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invariant(format!("singular Weingarten Gram matrix at n={n}, d={d}")))?;
        let scale = d.powi(-(n as i32));
        let mut values = BTreeMap::new();
        for (p, w) in perms.iter().zip(sol.iter()) {
            values.entry(p.cycle_type()).or_insert(w * scale);
        }
        Ok(Self { n, d, values })
    }

    pub fn by_type(&self, cycle_type: &[usize]) -> f64 {
        self.values[cycle_type]
    }

    pub fn wg(&self, sigma: &Permutation) -> f64 {
        self.by_type(&sigma.cycle_type())
    }

    /// `max_σ |Σ_τ d^{#cycles(στ⁻¹)} Wg(τ) − δ_{σ,id}|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let perms = Permutation::all(self.n);
        let wg: Vec<f64> = perms.iter().map(|p| self.wg(p)).collect();
        let inverses: Vec<Permutation> = perms.iter().map(Permutation::inverse).collect();
        let mut worst: f64 = 0.0;
        for (i, s) in perms.iter().enumerate() {
            let sum: f64 =
                inverses.iter().zip(&wg).map(|(tinv, w)| self.d.powi(s.compose(tinv).cycle_count() as i32) * w).sum();
            let target = if i == 0 { 1.0 } else { 0.0 };
            worst = worst.max((sum - target).abs());
        }
        worst
    }
}

/// Exact Haar moment `E[U_{i₁j₁}⋯U_{iₙjₙ} Ū_{i'₁j'₁}⋯Ū_{i'ₙj'ₙ}]` over `U(d)`
/// (indices zero-based).
pub fn unitary_moment(rows: &[usize], cols: &[usize], rows_bar: &[usize], cols_bar: &[usize], d: usize) -> Result<f64> {
    let n = rows.len();
    if cols.len() != n || rows_bar.len() != n || cols_bar.len() != n {
        return Err(Error::Dimension("index lists must share one length".into()));
    }
    if let Some(&bad) = rows.iter().chain(cols).chain(rows_bar).chain(cols_bar).find(|&&i| i >= d) {
        return Err(Error::IndexOutOfRange { index: bad, dim: d });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let table = WeingartenTable::new(n, d as f64)?;
    let perms = Permutation::all(n);
    let matching = |a: &[usize], b: &[usize]| -> Vec<&Permutation> {
        perms.iter().filter(|p| (0..n).all(|k| a[k] == b[p.apply(k)])).collect()
    };
    let sigmas = matching(rows, rows_bar);
    let taus = matching(cols, cols_bar);
    let mut total = 0.0;
    for s in &sigmas {
        let sinv = s.inverse();
        for t in &taus {
            total += table.wg(&t.compose(&sinv));
        }
    }
    Ok(total)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra] = rb;
    }
}

/// Number of components of the bracket graph on `2m` top and `2m` bottom
/// slots (one-based below): top brackets `{1,2m}, {2,3}, {4,5}, …`, bottom
/// brackets `{1,2}, {3,4}, …`, and an edge from top slot `a` to bottom slot
/// `τ(a)`. Each component contributes one factor of `M` to the COE moment sum.
pub fn j_cycle_count(tau: &Permutation, m: usize) -> Result<usize> {
    if !(1..=3).contains(&m) {
        return Err(Error::Parameter(format!("bracket graph defined for m in 1..=3, got {m}")));
    }
    let n = 2 * m;
    if tau.n() != n {
        return Err(Error::Dimension(format!("tau must lie in S_{n}, got S_{}", tau.n())));
    }
    // Top slots 0..n, bottom slots n..2n (zero-based).
    let mut parent: Vec<usize> = (0..2 * n).collect();
    for l in 0..m {
        union(&mut parent, 2 * l + 1, (2 * l + 2) % n);
        union(&mut parent, n + 2 * l, n + 2 * l + 1);
    }
    for a in 0..n {
        union(&mut parent, a, n + tau.apply(a));
    }
    Ok((0..2 * n).filter(|&x| find(&mut parent, x) == x).count())
}

fn check_coe_regime(m: usize, n: usize, big_m: usize) -> Result<()> {
    if !(1..=3).contains(&m) {
        return Err(Error::Parameter(format!("COE corner moments implemented for m in 1..=3, got {m}")));
    }
    if n == 0 || 2 * n > big_m {
        return Err(Error::Regime(format!("need 1 <= 2N <= M, got N={n}, M={big_m}")));
    }
    if big_m < 2 * m {
        return Err(Error::Regime(format!("Weingarten sum needs M >= 2m, got M={big_m}, m={m}")));
    }
    Ok(())
}

/// `E Tr((A†A)^m)` for `A` the `N x N` corner of an `M x M` COE matrix, by the
/// full double sum `Σ_{σ,τ ∈ S_{2m}} N^{#cycles(σ)} Wg(τσ⁻¹; M) M^{j(τ)}`.
pub fn coe_sub_trace_moment_weingarten(m: usize, n: usize, big_m: usize) -> Result<f64> {
    check_coe_regime(m, n, big_m)?;
    let deg = 2 * m;
    let table = WeingartenTable::new(deg, big_m as f64)?;
    let perms = Permutation::all(deg);
    let nf = n as f64;
    let mf = big_m as f64;
    let row_weight: Vec<f64> = perms.iter().map(|s| nf.powi(s.cycle_count() as i32)).collect();
    let col_weight: Vec<f64> = perms.iter().map(|t| Ok(mf.powi(j_cycle_count(t, m)? as i32))).collect::<Result<_>>()?;
    let inverses: Vec<Permutation> = perms.iter().map(Permutation::inverse).collect();
    let per_sigma: Vec<f64> = crate::par::map_indexed(perms.len(), |i| {
        let sinv = &inverses[i];
        let inner: f64 = perms.iter().zip(&col_weight).map(|(t, cw)| table.wg(&t.compose(sinv)) * cw).sum();
        row_weight[i] * inner
    });
    Ok(crate::par::pairwise_sum(&per_sigma))
}

/// Exact `E Tr((A†A)^m)` for the COE corner: `(N²+N)/(M+1)` at `m = 1`, the
/// Weingarten double sum for `m = 2, 3`.
pub fn coe_sub_trace_moment_exact(m: usize, n: usize, big_m: usize) -> Result<f64> {
    check_coe_regime(m, n, big_m)?;
    if m == 1 {
        let (nf, mf) = (n as f64, big_m as f64);
        return Ok((nf * nf + nf) / (mf + 1.0));
    }
    coe_sub_trace_moment_weingarten(m, n, big_m)
}

/// `E Tr((G†G)^m)` for the symmetric Gaussian ensemble, by Wick's theorem
/// with `E[G_ij Ḡ_kl] = δ_ik δ_jl + δ_il δ_jk`.
pub fn gsym_trace_moment(m: usize, n: usize) -> Result<f64> {
    if !(1..=4).contains(&m) {
        return Err(Error::Parameter(format!("Gaussian trace moments implemented for m in 1..=4, got {m}")));
    }
    let nf = n as f64;
    // Index variables x_0 … x_{2m-1}. Conjugated factor k is Ḡ(x_{2k+1}, x_{2k}),
    // plain factor k is G(x_{2k+1}, x_{2k+2 mod 2m}).
    let deg = 2 * m;
    let conj: Vec<(usize, usize)> = (0..m).map(|k| (2 * k + 1, 2 * k)).collect();
    let plain: Vec<(usize, usize)> = (0..m).map(|k| (2 * k + 1, (2 * k + 2) % deg)).collect();
    let mut total = 0.0;
    for pairing in Permutation::all(m) {
        for flips in 0..(1u32 << m) {
            let mut parent: Vec<usize> = (0..deg).collect();
            for k in 0..m {
                let (i, j) = plain[k];
                let (a, b) = conj[pairing.apply(k)];
                if flips >> k & 1 == 0 {
                    union(&mut parent, i, a);
                    union(&mut parent, j, b);
                } else {
                    union(&mut parent, i, b);
                    union(&mut parent, j, a);
                }
            }
            let comps = (0..deg).filter(|&x| find(&mut parent, x) == x).count();
            total += nf.powi(comps as i32);
        }
    }
    Ok(total)
}

/// Exact `E Tr((B†B)^m)` for `B` the top-left `p x q` block of an `M x M` Haar
/// unitary: `Σ_{σ,τ ∈ S_m} p^{#cycles(σ)} q^{#cycles(τ s⁻¹)} Wg(τσ⁻¹; M)` with
/// `s` the cyclic shift.
pub fn unitary_sub_trace_moment(m: usize, p: usize, q: usize, big_m: usize) -> Result<f64> {
    if !(1..=3).contains(&m) {
        return Err(Error::Parameter(format!("unitary corner moments implemented for m in 1..=3, got {m}")));
    }
    if p == 0 || q == 0 || p + q > big_m {
        return Err(Error::Regime(format!("need p, q >= 1 and p + q <= M, got p={p}, q={q}, M={big_m}")));
    }
    if m == 1 {
        return Ok((p * q) as f64 / big_m as f64);
    }
    let table = WeingartenTable::new(m, big_m as f64)?;
    let perms = Permutation::all(m);
    let shift_inv = Permutation::cyclic_shift(m).inverse();
    let (pf, qf) = (p as f64, q as f64);
    let mut total = 0.0;
    for s in &perms {
        let sinv = s.inverse();
        for t in &perms {
            total += pf.powi(s.cycle_count() as i32)
                * qf.powi(t.compose(&shift_inv).cycle_count() as i32)
                * table.wg(&t.compose(&sinv));
        }
    }
    Ok(total)
}

/// Fraction of `trials` symmetric Gaussian draws with `λ_max(G†G) > t`.
pub fn tail_check_gsym(n: usize, t: f64, trials: usize, stream: &RngStream) -> Result<MCEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::Parameter("tail check needs N >= 1 and trials >= 1".into()));
    }
    let nf = n as f64;
    if t <= 2.0 * nf * nf {
        return Err(Error::Regime(format!("tail threshold must exceed 2N^2 = {}, got {t}", 2.0 * nf * nf)));
    }
    let hits: Vec<f64> = crate::par::map_indexed(trials, |i| {
        let g = sample_gsym(n, &mut stream.child(i as u64).rng()).expect("validated dimensions");
        let top = eigs_psd(&g).expect("square")[0];
        f64::from(u8::from(top > t))
    });
    Ok(MCEstimate::from_samples(&hits, stream.seed))
}

/// Empirical `P[λ_max(A†A) > 1/2]` for the COE corner, with the Markov bound
/// `2 (N²+N)/(M+1)` it must respect.
pub fn markov_check_coe(n: usize, big_m: usize, trials: usize, stream: &RngStream) -> Result<(MCEstimate, f64)> {
    let bound = 2.0 * coe_sub_trace_moment_exact(1, n, big_m)?;
    if trials == 0 {
        return Err(Error::Parameter("need trials >= 1".into()));
    }
    let hits: Vec<f64> = crate::par::map_indexed(trials, |i| {
        let a = sample_coe_submatrix(n, big_m, &mut stream.child(i as u64).rng()).expect("validated dimensions");
        f64::from(u8::from(eigs_psd(&a).expect("square")[0] > 0.5))
    });
    Ok((MCEstimate::from_samples(&hits, stream.seed), bound))
}
