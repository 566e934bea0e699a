//! Monte Carlo KL and total-variation estimators between the scaled COE
//! corner (or Haar unitary corner) and its Gaussian model, the Pinsker
//! bound, coupling-distance summaries and log-log slope fits.
//!
//! Every estimator regresses on the power sums `Σλ^k` of `Z†Z`, whose means
//! are known exactly from the Weingarten and Wick formulas.

use serde::{Deserialize, Serialize};

use crate::densities::{
    coe_log_weight, gram_eigs, gsym_log_constant, power_sums, unitary_sub_log_constant, unzip_covariates,
    NormalizerEstimate,
};
use crate::ensembles::{
    coupled_coe_and_ggt, coupling_default_variance, sample_coe_submatrix, sample_gsym, sample_haar_corner,
};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::rng::RngStream;
use crate::stats::{control_variate_mean, mean_stderr, median, quantile, MCEstimate};
use crate::weingarten::{coe_sub_trace_moment_exact, unitary_sub_trace_moment};

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::Parameter(format!("need at least 2 samples, got {samples}")));
    }
    Ok(())
}

fn check_normalizer(log_c: &NormalizerEstimate, big_m: usize, n: usize) -> Result<()> {
    if log_c.m != big_m || log_c.n != n {
        return Err(Error::Parameter(format!(
            "normalizer is for (M={}, N={}), estimator called at (M={big_m}, N={n})",
            log_c.m, log_c.n
        )));
    }
    Ok(())
}

/// `D_KL(√M·A ‖ G)` for the `N x N` COE corner against the symmetric
/// Gaussian, sampling the COE side. The reported stderr combines sampling
/// noise with the normalizer's uncertainty.
pub fn kl_coe_vs_gsym(
    big_m: usize,
    n: usize,
    samples: usize,
    log_c: &NormalizerEstimate,
    stream: &RngStream,
) -> Result<MCEstimate> {
    if n == 0 {
        return Ok(MCEstimate { mean: 0.0, stderr: 0.0, n_samples: samples as u64, seed: stream.seed });
    }
    if 2 * n > big_m {
        return Err(Error::Regime(format!("KL needs 2N <= M, got N={n}, M={big_m}")));
    }
    check_samples(samples)?;
    check_normalizer(log_c, big_m, n)?;
    let rows: Vec<(f64, Vec<f64>)> = crate::par::map_indexed(samples, |i| {
        let a = sample_coe_submatrix(n, big_m, &mut stream.child(i as u64).rng()).expect("validated dimensions");
        let lambdas: Vec<f64> = gram_eigs(&a).iter().map(|l| l * big_m as f64).collect();
        // Gram–Schmidt frames have λ_max(A†A) <= 1; rounding can touch the edge.
        let w = coe_log_weight(&lambdas, big_m, n).unwrap_or_else(|| {
            let clipped: Vec<f64> = lambdas.iter().map(|l| l.min(big_m as f64 * (1.0 - 1e-9))).collect();
            coe_log_weight(&clipped, big_m, n).expect("clipped into support")
        });
        (w, power_sums(&lambdas, false))
    });
    let mf = big_m as f64;
    let known = vec![
        mf * coe_sub_trace_moment_exact(1, n, big_m)?,
        mf * mf * coe_sub_trace_moment_exact(2, n, big_m)?,
        mf.powi(3) * coe_sub_trace_moment_exact(3, n, big_m)?,
    ];
    let (y, cov) = unzip_covariates(rows, known.len());
    let (mean_l, se) = control_variate_mean(&y, &cov, &known);
    let kl = log_c.log_c_scaled() - gsym_log_constant(n) + mean_l;
    Ok(MCEstimate { mean: kl, stderr: se.hypot(log_c.stderr), n_samples: samples as u64, seed: stream.seed })
}

/// Pinsker: `d_TV <= √(KL/2)`. A point estimate within `3σ` below zero is
/// clamped to 0; anything more negative indicates a broken normalizer.
pub fn tv_bound_pinsker(kl: &MCEstimate) -> Result<MCEstimate> {
    if kl.mean < -3.0 * kl.stderr {
        return Err(Error::Invariant(format!(
            "KL estimate {} is {:.1} sigma below zero",
            kl.mean,
            kl.mean / kl.stderr
        )));
    }
    let k = kl.mean.max(0.0);
    let (mean, stderr) = if k > 0.0 {
        let v = (k / 2.0).sqrt();
        (v, kl.stderr / (4.0 * v))
    } else {
        (0.0, (kl.stderr / 2.0).sqrt())
    };
    Ok(MCEstimate { mean, stderr, n_samples: kl.n_samples, seed: kl.seed })
}

/// `½ E_q |exp(log_ratio(Z)) - 1|` for `Z` drawn by `sample`; `None` from
/// `log_ratio` means the numerator density vanishes at `Z`. Returns the
/// estimate and `½ E_q[sign(r-1) r]`, the derivative with respect to a
/// constant shift of the log-ratio.
pub fn tv_under_proposal<S, L>(samples: usize, stream: &RngStream, sample: S, log_ratio: L) -> Result<(MCEstimate, f64)>
where
    S: Fn(&mut crate::rng::StreamRng) -> ComplexMatrix + Sync,
    L: Fn(&ComplexMatrix) -> Option<f64> + Sync,
{
    check_samples(samples)?;
    let rows: Vec<(f64, f64)> = crate::par::map_indexed(samples, |i| {
        let z = sample(&mut stream.child(i as u64).rng());
        let r = log_ratio(&z).map_or(0.0, f64::exp);
        (0.5 * (r - 1.0).abs(), 0.5 * (r - 1.0).signum() * r)
    });
    let (y, d): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let (mean, se) = mean_stderr(&y);
    Ok((MCEstimate { mean, stderr: se, n_samples: samples as u64, seed: stream.seed }, crate::stats::mean(&d)))
}

/// `d_TV(√M·A, G) = ½ E_G |f/g - 1|`, sampling the Gaussian side. Gaussian
/// draws outside the COE support contribute `½`.
pub fn tv_mc(
    big_m: usize,
    n: usize,
    samples: usize,
    log_c: &NormalizerEstimate,
    stream: &RngStream,
) -> Result<MCEstimate> {
    if n == 0 || 2 * n > big_m {
        return Err(Error::Regime(format!("TV needs 1 <= 2N <= M, got N={n}, M={big_m}")));
    }
    check_normalizer(log_c, big_m, n)?;
    let shift = log_c.log_c_scaled() - gsym_log_constant(n);
    let (est, slope) = tv_under_proposal(
        samples,
        stream,
        |rng| sample_gsym(n, rng).expect("n >= 1"),
        |z| coe_log_weight(&gram_eigs(z), big_m, n).map(|w| w + shift),
    )?;
    Ok(MCEstimate { stderr: est.stderr.hypot(slope * log_c.stderr), ..est })
}

/// `D_KL(√M·B ‖ G)` for `B` the top-left `p x q` block of an `M x M` Haar
/// unitary and `G` a `p x q` matrix of i.i.d. `CN(0,1)` entries, using the
/// exact normalizer of the corner density.
pub fn kl_unitary_sub_vs_gaussian(
    big_m: usize,
    p: usize,
    q: usize,
    samples: usize,
    stream: &RngStream,
) -> Result<MCEstimate> {
    let constant = unitary_sub_log_constant(big_m, p, q)? + (p * q) as f64 * std::f64::consts::PI.ln();
    check_samples(samples)?;
    let mf = big_m as f64;
    let exponent = (big_m - p - q) as f64;
    let rows: Vec<(f64, Vec<f64>)> = crate::par::map_indexed(samples, |i| {
        let b = sample_haar_corner(p, q, big_m, &mut stream.child(i as u64).rng()).expect("validated dimensions");
        let lambdas: Vec<f64> = gram_eigs(&b).iter().map(|l| (l * mf).min(mf * (1.0 - 1e-9))).collect();
        let ld: f64 = lambdas.iter().map(|l| (-l / mf).ln_1p()).sum();
        let y = constant + exponent * ld + lambdas.iter().sum::<f64>();
        (y, power_sums(&lambdas, false))
    });
    let known = vec![
        mf * unitary_sub_trace_moment(1, p, q, big_m)?,
        mf * mf * unitary_sub_trace_moment(2, p, q, big_m)?,
        mf.powi(3) * unitary_sub_trace_moment(3, p, q, big_m)?,
    ];
    let (y, cov) = unzip_covariates(rows, known.len());
    let (mean, se) = control_variate_mean(&y, &cov, &known);
    Ok(MCEstimate { mean, stderr: se, n_samples: samples as u64, seed: stream.seed })
}

/// Distribution summary of `‖√K·W_NN − (ZZᵀ)_NN‖_max` over coupled draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingStats {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub median: f64,
    pub q90: f64,
    pub mean: MCEstimate,
    pub all_finite: bool,
    pub max_symmetry_residual: f64,
}

pub fn coupling_distance_stats(n: usize, k: usize, trials: usize, stream: &RngStream) -> Result<CouplingStats> {
    if n == 0 || trials == 0 {
        return Err(Error::Parameter("coupling statistics need N >= 1 and trials >= 1".into()));
    }
    let variance = coupling_default_variance(k);
    let rows: Vec<Result<(f64, f64)>> = crate::par::map_indexed(trials, |i| {
        let pair = coupled_coe_and_ggt(n, k, variance, &mut stream.child(i as u64).rng())?;
        let sym = pair.scaled_coe.symmetry_residual().max(pair.ggt.symmetry_residual());
        Ok((pair.max_entry_distance(), sym))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let (d, sym): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(CouplingStats {
        n,
        k,
        trials,
        median: median(&d),
        q90: quantile(&d, 0.9),
        mean: MCEstimate::from_samples(&d, stream.seed),
        all_finite: d.iter().all(|x| x.is_finite()),
        max_symmetry_residual: sym.into_iter().fold(0.0, f64::max),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Parameter(format!("slope fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(bad) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Parameter(format!("slope fit needs positive coordinates, got {bad:?}")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("slope fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}
