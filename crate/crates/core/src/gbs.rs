//! Collision-free Gaussian boson sampling probabilities, output-pattern
//! enumeration, a truncated Fock-space oracle, and the hiding experiment.

use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_coe_submatrix, sample_gsym};
use crate::error::{Error, Result};
use crate::hafnian::hafnian;
use crate::matrix::{ComplexMatrix, C64};
use crate::rng::RngStream;
use crate::stats::{ks_critical_value, ks_statistic};

/// Unitarity tolerance for interferometers.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Required Fock-space mass of each truncated squeezed mode.
pub const FOCK_NORMALIZATION_TOL: f64 = 1e-10;
pub const FOCK_MAX_MODES: usize = 3;
pub const FOCK_CUTOFF_RANGE: (usize, usize) = (10, 24);

/// A collision-free detection pattern: one bit per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutputPattern {
    bits: Vec<u8>,
}

impl OutputPattern {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Parameter(format!("pattern entries must be 0 or 1, got {b}")));
        }
        let p = Self { bits };
        if !p.photon_count().is_multiple_of(2) {
            return Err(Error::Parameter(format!("photon count must be even, got {}", p.photon_count())));
        }
        Ok(p)
    }

    pub fn vacuum(m: usize) -> Self {
        Self { bits: vec![0; m] }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn modes(&self) -> usize {
        self.bits.len()
    }

    pub fn photon_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Indices of the occupied modes.
    pub fn occupied(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { bits: perm.iter().map(|&p| self.bits[p]).collect() }
    }
}

/// `K` squeezed inputs (modes `0..K`) of strength `r` into an `M`-mode interferometer `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbsConfig {
    m: usize,
    k: usize,
    r: f64,
    u: ComplexMatrix,
}

impl GbsConfig {
    /// `K = 0` (vacuum input) is accepted so the oracle can be checked on it.
    pub fn new(k: usize, r: f64, u: ComplexMatrix) -> Result<Self> {
        let m = u.rows();
        if m == 0 || !u.is_square() {
            return Err(Error::Dimension("interferometer must be a nonempty square matrix".into()));
        }
        if k > m {
            return Err(Error::Dimension(format!("need K <= M, got K={k}, M={m}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("squeezing must be positive, got {r}")));
        }
        let res = u.unitarity_residual();
        if res > UNITARITY_TOL {
            return Err(Error::Parameter(format!("interferometer is not unitary (residual {res:.3e})")));
        }
        Ok(Self { m, k, r, u })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn squeezed(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn vacuum_probability(&self) -> f64 {
        self.r.cosh().powi(-(self.k as i32))
    }

    /// The same experiment with modes relabeled: output mode `i` becomes `perm[i]`.
    pub fn with_permuted_modes(&self, perm: &[usize]) -> Result<Self> {
        let u = self.u.submatrix(perm, &(0..self.m).collect::<Vec<_>>())?;
        Self::new(self.k, self.r, u)
    }
}

/// `tanh(r)^N / cosh(r)^K · |Haf(U_{n,K} U_{n,K}ᵀ)|²`.
pub fn gbs_probability(cfg: &GbsConfig, n: &OutputPattern) -> Result<f64> {
    if n.modes() != cfg.m {
        return Err(Error::Dimension(format!("pattern has {} modes, interferometer {}", n.modes(), cfg.m)));
    }
    let photons = n.photon_count();
    if !photons.is_multiple_of(2) {
        return Err(Error::Parameter(format!("photon count must be even, got {photons}")));
    }
    let base = cfg.vacuum_probability();
    if photons == 0 {
        return Ok(base);
    }
    let cols: Vec<usize> = (0..cfg.k).collect();
    let block = cfg.u.submatrix(&n.occupied(), &cols)?;
    let haf = hafnian(&block.times_own_transpose())?;
    Ok(cfg.r.tanh().powi(photons as i32) * base * haf.norm_sqr())
}

/// All collision-free patterns on `m` modes with an even number of photons at
/// most `max_photons`, ordered by photon count then lexicographically.
pub fn enumerate_patterns(m: usize, max_photons: usize) -> Result<Vec<OutputPattern>> {
    if !max_photons.is_multiple_of(2) || max_photons > m {
        return Err(Error::Parameter(format!("max photons must be even and <= M, got {max_photons} with M={m}")));
    }
    let mut out = Vec::new();
    for count in (0..=max_photons).step_by(2) {
        let mut chosen: Vec<usize> = (0..count).collect();
        loop {
            let mut bits = vec![0u8; m];
            for &c in &chosen {
                bits[c] = 1;
            }
            out.push(OutputPattern { bits });
            // Next combination in lexicographic order.
            let Some(pos) = (0..count).rev().find(|&i| chosen[i] < m - count + i) else { break };
            chosen[pos] += 1;
            for j in pos + 1..count {
                chosen[j] = chosen[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// Amplitude of `|2m⟩` in a single-mode squeezed vacuum:
/// `tanh(r)^m √((2m)!) / (2^m m!) / √cosh(r)`.
pub fn squeezed_amplitude(m: usize, r: f64) -> f64 {
    if m == 0 {
        return r.cosh().powf(-0.5);
    }
    let mut log = m as f64 * r.tanh().ln() - 0.5 * r.cosh().ln() - m as f64 * 2f64.ln();
    for j in 1..=2 * m {
        log += 0.5 * (j as f64).ln();
    }
    for j in 1..=m {
        log -= (j as f64).ln();
    }
    log.exp()
}

/// Permanent by Laplace expansion along the first row.
pub fn permanent(a: &ComplexMatrix) -> Result<C64> {
    if !a.is_square() {
        return Err(Error::Dimension("permanent needs a square matrix".into()));
    }
    fn rec(a: &ComplexMatrix, row: usize, used: &mut Vec<bool>) -> C64 {
        if row == a.rows() {
            return C64::new(1.0, 0.0);
        }
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..a.cols() {
            if !used[c] {
                used[c] = true;
                acc += a[(row, c)] * rec(a, row + 1, used);
                used[c] = false;
            }
        }
        acc
    }
    Ok(rec(a, 0, &mut vec![false; a.cols()]))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Output probability for arbitrary photon counts, from the squeezed input
/// state expanded in the Fock basis and pushed through the interferometer
/// via `⟨n|Û|m⟩ = Perm(U[n, m]) / √(n! m!)` (rows repeated by output
/// counts, columns by input counts).
pub fn fock_oracle_probability_counts(cfg: &GbsConfig, cutoff: usize, counts: &[usize]) -> Result<f64> {
    let (lo, hi) = FOCK_CUTOFF_RANGE;
    if cfg.m > FOCK_MAX_MODES {
        return Err(Error::Parameter(format!("Fock oracle supports M <= {FOCK_MAX_MODES}, got {}", cfg.m)));
    }
    if !(lo..=hi).contains(&cutoff) {
        return Err(Error::Parameter(format!("Fock cutoff must lie in [{lo}, {hi}], got {cutoff}")));
    }
    if counts.len() != cfg.m {
        return Err(Error::Dimension(format!("pattern has {} modes, interferometer {}", counts.len(), cfg.m)));
    }
    let max_pairs = cutoff / 2;
    if cfg.k > 0 {
        let mass: f64 = (0..=max_pairs).map(|m| squeezed_amplitude(m, cfg.r).powi(2)).sum();
        if mass < 1.0 - FOCK_NORMALIZATION_TOL {
            return Err(Error::Parameter(format!("cutoff {cutoff} keeps only {mass} of the squeezed-state mass")));
        }
    }
    let total: usize = counts.iter().sum();
    if !total.is_multiple_of(2) {
        return Ok(0.0);
    }
    let rows: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j, c)).collect();
    let out_norm: f64 = counts.iter().map(|&c| factorial(c)).product();
    let mut amp = C64::new(0.0, 0.0);
    // Enumerate pair counts (m_0, …, m_{K-1}) with Σ 2 m_i = total.
    let mut pairs = vec![0usize; cfg.k];
    let target = total / 2;
    loop {
        if pairs.iter().sum::<usize>() == target {
            let cols: Vec<usize> = pairs.iter().enumerate().flat_map(|(i, &p)| std::iter::repeat_n(i, 2 * p)).collect();
            let coeff: f64 = pairs.iter().map(|&p| squeezed_amplitude(p, cfg.r)).product();
            let in_norm: f64 = pairs.iter().map(|&p| factorial(2 * p)).product();
            let perm = permanent(&cfg.u.submatrix_with_repeats(&rows, &cols)?)?;
            amp += perm * (coeff / (out_norm * in_norm).sqrt());
        }
        // Odometer over 0..=min(max_pairs, target) per input mode.
        let mut i = 0;
        while i < cfg.k {
            pairs[i] += 1;
            if pairs[i] <= max_pairs.min(target) {
                break;
            }
            pairs[i] = 0;
            i += 1;
        }
        if i == cfg.k {
            break;
        }
    }
    Ok(amp.norm_sqr())
}

/// Oracle probability of a collision-free pattern (see
/// [`fock_oracle_probability_counts`]).
pub fn fock_oracle_probability(cfg: &GbsConfig, cutoff: usize, n: &OutputPattern) -> Result<f64> {
    let counts: Vec<usize> = n.bits().iter().map(|&b| b as usize).collect();
    fock_oracle_probability_counts(cfg, cutoff, &counts)
}

/// Two samples of `|Haf|²` and their Kolmogorov–Smirnov comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HidingSummary {
    pub m: usize,
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    /// Sorted `|Haf(√M·A)|²` values; the empirical CDF at index `i` is `(i+1)/trials`.
    pub coe_values: Vec<f64>,
    /// Sorted `|Haf(G)|²` values.
    pub gaussian_values: Vec<f64>,
    pub ks: f64,
    pub critical_1pct: f64,
}

/// Compares `|Haf(√M·A)|²` for the `N x N` COE corner with `|Haf(G)|²` for
/// the symmetric Gaussian. The squeezing `r` only rescales both sides by the
/// same factor, so it is recorded but does not affect the statistic.
pub fn hiding_experiment(big_m: usize, n: usize, r: f64, trials: usize, stream: &RngStream) -> Result<HidingSummary> {
    if !n.is_multiple_of(2) {
        return Err(Error::Parameter(format!("photon number N must be even, got {n}")));
    }
    if 2 * n > big_m {
        return Err(Error::Regime(format!("need 2N <= M, got N={n}, M={big_m}")));
    }
    if trials == 0 {
        return Err(Error::Parameter("need trials >= 1".into()));
    }
    if 4 * n * n > big_m {
        log::warn!("hiding experiment outside N^2 <= M/4 (N={n}, M={big_m})");
    }
    let scale = (big_m as f64).sqrt();
    let coe_stream = stream.labeled("coe");
    let gauss_stream = stream.labeled("gaussian");
    let draw = |s: &RngStream, coe: bool| -> Vec<f64> {
        let mut v = crate::par::map_indexed(trials, |i| {
            if n == 0 {
                return 1.0;
            }
            let mut rng = s.child(i as u64).rng();
            let z = if coe {
                sample_coe_submatrix(n, big_m, &mut rng).expect("validated").scale_real(scale)
            } else {
                sample_gsym(n, &mut rng).expect("validated")
            };
            hafnian(&z).expect("symmetric even-dimensional").norm_sqr()
        });
        v.sort_by(f64::total_cmp);
        v
    };
    let coe_values = draw(&coe_stream, true);
    let gaussian_values = draw(&gauss_stream, false);
    let ks = ks_statistic(&coe_values, &gaussian_values);
    Ok(HidingSummary {
        m: big_m,
        n,
        r,
        trials,
        coe_values,
        gaussian_values,
        ks,
        critical_1pct: ks_critical_value(0.01, trials, trials),
    })
}
