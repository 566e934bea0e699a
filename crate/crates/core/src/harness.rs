//! Experiment registry, configuration and record I/O.
//!
//! Each experiment reads its parameters from an [`ExperimentConfig`]
//! (missing keys take the defaults listed in [`EXPERIMENTS`]) and returns
//! one or more [`ExperimentRecord`]s. Every random quantity is drawn from a
//! stream derived from the master seed, the experiment name and the grid
//! position, so output does not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::densities::{
    compare_with_reference, density_ratio_sup, eigs_psd, gram_eigs, hua_discrepancy, importance_normalizer,
    log_density_coe_sub, quadrature_log_constant, ratio_profile_grid_argmax, zeta, NormalizerEstimate,
};
use crate::divergence::{
    coupling_distance_stats, kl_coe_vs_gsym, kl_unitary_sub_vs_gaussian, slope_fit, tv_bound_pinsker, tv_mc,
};
use crate::ensembles::{sample_coe_submatrix, sample_gsym, sample_haar_corner, sample_haar_unitary};
use crate::error::{Error, Result};
use crate::gbs::{fock_oracle_probability, gbs_probability, hiding_experiment, GbsConfig, OutputPattern};
use crate::hafnian::{hafnian, hafnian_block_diag, hafnian_enum};
use crate::matrix::{ComplexMatrix, C64};
use crate::quadrature::tanh_sinh;
use crate::rng::RngStream;
use crate::stats::MCEstimate;
use crate::weingarten::{
    coe_sub_trace_moment_exact, coe_sub_trace_moment_weingarten, gsym_trace_moment, unitary_sub_trace_moment,
    WeingartenTable,
};

/// Registered experiment names with a one-line description of their defaults.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("hafnian-check", "instances=50"),
    ("weingarten-check", "dgrid=[10,50,200], n<=6"),
    ("coe-moments", "N=2 M=12 samples=20000 grid=[50,100,200]"),
    ("gsym-moments", "N=3 samples=100000"),
    ("kl-scaling", "N=2 grid=[64,128,256,512] samples=100000 normalizer_samples=200000"),
    ("tv-scaling", "N=2 grid=[64,128,256,512] samples=100000 normalizer_samples=200000"),
    ("zeta-scaling", "N=2 grid=[64,128,256,512] normalizer_samples=200000 M=50"),
    ("ratio-sup", "M=10000 grid=[100,1000] normalizer_samples=200000"),
    ("coupling", "N=2 grid=[100,400,1600] trials=200"),
    ("unitary-sub-kl", "p=8 q=2 grid=[256,512,1024,2048] samples=100000 M=256"),
    ("gbs-oracle", "M=2 configs=20 r=0.3 cutoff=20"),
    ("hiding-ks", "N=2 M=400 compare_M=16 trials=5000 r=0.5"),
];

/// A configuration value: a number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Number(f64),
    List(Vec<f64>),
}

pub type ExperimentConfig = BTreeMap<String, ConfigValue>;

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub params: BTreeMap<String, f64>,
    /// Metric name to `(mean, stderr)`; exact values carry stderr 0.
    pub estimates: BTreeMap<String, (f64, f64)>,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl ExperimentRecord {
    pub fn estimate(&self, key: &str) -> Option<(f64, f64)> {
        self.estimates.get(key).copied()
    }

    /// The mean of metric `key`; panics if absent.
    pub fn value(&self, key: &str) -> f64 {
        self.estimates.get(key).unwrap_or_else(|| panic!("record {} has no metric {key}", self.experiment)).0
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

struct Params<'a> {
    cfg: &'a ExperimentConfig,
}

impl Params<'_> {
    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.cfg.get(key) {
            None => Ok(default),
            Some(ConfigValue::Number(v)) if v.is_finite() => Ok(*v),
            Some(other) => Err(Error::Parameter(format!("{key} must be a number, got {other:?}"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.f64(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Parameter(format!("{key} must be a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    /// The sweep axis: `grid`, or the experiment's own name for it (`Mgrid`, `Kgrid`).
    fn grid(&self, axis: &str, default: &[usize]) -> Result<Vec<usize>> {
        if self.cfg.contains_key("grid") {
            self.usize_list("grid", default)
        } else {
            self.usize_list(axis, default)
        }
    }

    fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.cfg.get(key) {
            None => Ok(default.to_vec()),
            Some(ConfigValue::Number(v)) => Ok(vec![check_count(key, *v)?]),
            Some(ConfigValue::List(vs)) => vs.iter().map(|&v| check_count(key, v)).collect(),
        }
    }
}

fn check_count(key: &str, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parameter(format!("{key} entries must be nonnegative integers, got {v}")));
    }
    Ok(v as usize)
}

struct Rec {
    record: ExperimentRecord,
    start: Instant,
}

impl Rec {
    fn new(experiment: &str, seed: u64) -> Self {
        Self {
            record: ExperimentRecord {
                experiment: experiment.to_string(),
                params: BTreeMap::new(),
                estimates: BTreeMap::new(),
                seed,
                wall_time_ms: 0.0,
            },
            start: Instant::now(),
        }
    }

    fn param(mut self, key: &str, v: impl Into<f64>) -> Self {
        self.record.params.insert(key.to_string(), v.into());
        self
    }

    fn est(mut self, key: &str, e: &MCEstimate) -> Self {
        self.record.estimates.insert(key.to_string(), (e.mean, e.stderr));
        self
    }

    fn value(mut self, key: &str, v: f64) -> Self {
        self.record.estimates.insert(key.to_string(), (v, 0.0));
        self
    }

    fn flag(self, key: &str, v: bool) -> Self {
        self.value(key, if v { 1.0 } else { 0.0 })
    }

    fn done(mut self) -> ExperimentRecord {
        self.record.wall_time_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.record
    }
}

fn p(v: usize) -> f64 {
    v as f64
}

/// Runs the named experiment. Deterministic given `(name, config, seed)` up
/// to the wall-time field.
pub fn run_experiment(name: &str, config: &ExperimentConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let params = Params { cfg: config };
    let stream = RngStream::from_seed(seed).labeled(name);
    match name {
        "hafnian-check" => hafnian_check(&params, &stream, seed),
        "weingarten-check" => weingarten_check(&params, seed),
        "coe-moments" => coe_moments(&params, &stream, seed),
        "gsym-moments" => gsym_moments(&params, &stream, seed),
        "kl-scaling" => kl_scaling(&params, &stream, seed),
        "tv-scaling" => tv_scaling(&params, &stream, seed),
        "zeta-scaling" => zeta_scaling(&params, &stream, seed),
        "ratio-sup" => ratio_sup(&params, &stream, seed),
        "coupling" => coupling(&params, &stream, seed),
        "unitary-sub-kl" => unitary_sub_kl(&params, &stream, seed),
        "gbs-oracle" => gbs_oracle(&params, &stream, seed),
        "hiding-ks" => hiding_ks(&params, &stream, seed),
        other => Err(Error::UnknownExperiment(other.to_string())),
    }
}

fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn hafnian_check(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let instances = params.usize("instances", 50)?;
    let rec = Rec::new("hafnian-check", seed).param("instances", p(instances));
    let ones = |n: usize| ComplexMatrix::from_fn(n, n, |_, _| C64::new(1.0, 0.0));
    let j4 = hafnian(&ones(4))?;
    let j6 = hafnian(&ones(6))?;
    let mut max_enum = 0.0f64;
    let mut max_block = 0.0f64;
    for i in 0..instances as u64 {
        let mut rng = stream.child(i).rng();
        let a = sample_gsym(6, &mut rng)?;
        max_enum = max_enum.max(rel_err(hafnian(&a)?, hafnian_enum(&a)?));
        let (x, y) = (sample_gsym(4, &mut rng)?, sample_gsym(4, &mut rng)?);
        max_block = max_block.max(rel_err(hafnian_block_diag(&x, &y)?, hafnian(&x)? * hafnian(&y)?));
    }
    Ok(vec![rec
        .value("haf_J4", j4.re)
        .value("haf_J4_imag", j4.im)
        .value("haf_J6", j6.re)
        .value("haf_J6_imag", j6.im)
        .value("recursion_vs_enum_max_rel_err", max_enum)
        .value("block_multiplicativity_max_rel_err", max_block)
        .done()])
}

fn weingarten_check(params: &Params, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let dgrid = params.usize_list("dgrid", &[10, 50, 200])?;
    let max_n = params.usize("n", 6)?;
    let mut out = Vec::new();
    for &d in &dgrid {
        let df = d as f64;
        for n in 1..=max_n {
            let rec = Rec::new("weingarten-check", seed).param("n", p(n)).param("d", df);
            let table = WeingartenTable::new(n, df)?;
            let mut rec = rec.value("orthogonality_residual", table.orthogonality_residual());
            if n == 2 {
                rec = rec
                    .value("wg_id_err", (table.by_type(&[1, 1]) - 1.0 / (df * df - 1.0)).abs())
                    .value("wg_transposition_err", (table.by_type(&[2]) + 1.0 / (df * (df * df - 1.0))).abs());
            }
            out.push(rec.done());
        }
    }
    Ok(out)
}

fn coe_moments(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let n = params.usize("N", 2)?;
    let big_m = params.usize("M", 12)?;
    let samples = params.usize("samples", 20_000)?;
    let grid = params.grid("Mgrid", &[50, 100, 200])?;
    let rec = Rec::new("coe-moments", seed).param("N", p(n)).param("M", p(big_m)).param("samples", p(samples));
    let exact1 = coe_sub_trace_moment_exact(1, n, big_m)?;
    let exact2 = coe_sub_trace_moment_exact(2, n, big_m)?;
    let mc_stream = stream.labeled("mc");
    let rows: Vec<Result<(f64, f64)>> = crate::par::map_indexed(samples, |i| {
        let a = sample_coe_submatrix(n, big_m, &mut mc_stream.child(i as u64).rng())?;
        let ev = eigs_psd(&a)?;
        Ok((ev.iter().sum(), ev.iter().map(|l| l * l).sum()))
    });
    let (t1, t2): (Vec<f64>, Vec<f64>) = rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    // The Weingarten double sum for m = 1 against (N²+N)/(M+1) over N <= 4, M <= 40.
    let mut max_err = 0.0f64;
    for nn in 1..=4 {
        for mm in 2 * nn..=40 {
            let ws = coe_sub_trace_moment_weingarten(1, nn, mm)?;
            max_err = max_err.max((ws - coe_sub_trace_moment_exact(1, nn, mm)?).abs());
        }
    }
    let mut out = vec![rec
        .est("trM1", &MCEstimate::from_samples(&t1, seed))
        .value("trM1_exact", exact1)
        .est("trM2", &MCEstimate::from_samples(&t2, seed))
        .value("trM2_exact", exact2)
        .value("m1_double_sum_max_abs_err", max_err)
        .done()];
    let nf = n as f64;
    for &mm in &grid {
        let mf = mm as f64;
        let rec = Rec::new("coe-moments", seed).param("N", p(n)).param("M", mf).param("exact", 1.0);
        let e2 = coe_sub_trace_moment_exact(2, n, mm)?;
        let e3 = coe_sub_trace_moment_exact(3, n, mm)?;
        out.push(
            rec.value("trM2_exact", e2)
                .value("m2_leading_ratio", mf * mf * e2 / (2.0 * nf.powi(3)))
                .value("trM3_exact", e3)
                .value("m3_constant", mf.powi(3) * e3 / nf.powi(4))
                .done(),
        );
    }
    Ok(out)
}

fn gsym_moments(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let n = params.usize("N", 3)?;
    let samples = params.usize("samples", 100_000)?;
    if n == 0 || samples < 2 {
        return Err(Error::Parameter("need N >= 1 and samples >= 2".into()));
    }
    let rec = Rec::new("gsym-moments", seed).param("N", p(n)).param("samples", p(samples));
    let rows: Vec<[f64; 3]> = crate::par::map_indexed(samples, |i| {
        let g = sample_gsym(n, &mut stream.child(i as u64).rng()).expect("n >= 1");
        let ev = gram_eigs(&g);
        [1, 2, 3].map(|m| ev.iter().map(|l| l.powi(m)).sum())
    });
    let mut rec = rec;
    for m in 1..=3 {
        let xs: Vec<f64> = rows.iter().map(|r| r[m - 1]).collect();
        rec = rec
            .est(&format!("trM{m}"), &MCEstimate::from_samples(&xs, seed))
            .value(&format!("trM{m}_exact"), gsym_trace_moment(m, n)?);
    }
    Ok(vec![rec.done()])
}

struct ScalingInputs {
    n: usize,
    grid: Vec<usize>,
    samples: usize,
    normalizer_samples: usize,
}

fn scaling_inputs(params: &Params) -> Result<ScalingInputs> {
    Ok(ScalingInputs {
        n: params.usize("N", 2)?,
        grid: params.grid("Mgrid", &[64, 128, 256, 512])?,
        samples: params.usize("samples", 100_000)?,
        normalizer_samples: params.usize("normalizer_samples", 200_000)?,
    })
}

fn normalizer_for(big_m: usize, n: usize, samples: usize, stream: &RngStream) -> Result<NormalizerEstimate> {
    importance_normalizer(big_m, n, samples, &stream.labeled("normalizer").child(big_m as u64))
}

fn kl_scaling(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let s = scaling_inputs(params)?;
    let mut out = Vec::new();
    let mut kl_pts = Vec::new();
    let mut tv_pts = Vec::new();
    for &mm in &s.grid {
        let rec = Rec::new("kl-scaling", seed).param("N", p(s.n)).param("M", p(mm)).param("samples", p(s.samples));
        let log_c = normalizer_for(mm, s.n, s.normalizer_samples, stream)?;
        let kl = kl_coe_vs_gsym(mm, s.n, s.samples, &log_c, &stream.labeled("kl").child(mm as u64))?;
        let tv = tv_mc(mm, s.n, s.samples, &log_c, &stream.labeled("tv").child(mm as u64))?;
        let bound = tv_bound_pinsker(&kl)?;
        kl_pts.push((mm as f64, kl.mean));
        tv_pts.push((mm as f64, tv.mean));
        out.push(
            rec.est("kl", &kl)
                .est("tv", &tv)
                .est("pinsker_bound", &bound)
                .est("log_c_scaled", &MCEstimate { mean: log_c.log_c_scaled(), ..MCEstimate::exact(0.0) })
                .done(),
        );
    }
    let mut summary = Rec::new("kl-scaling", seed).param("N", p(s.n)).param("samples", p(s.samples));
    if kl_pts.iter().all(|&(_, y)| y > 0.0) && kl_pts.len() >= 3 {
        summary = summary.value("kl_slope", slope_fit(&kl_pts)?);
    }
    if tv_pts.iter().all(|&(_, y)| y > 0.0) && tv_pts.len() >= 3 {
        summary = summary.value("tv_slope", slope_fit(&tv_pts)?);
    }
    out.push(summary.done());
    Ok(out)
}

fn tv_scaling(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let s = scaling_inputs(params)?;
    let mut out = Vec::new();
    let mut pts = Vec::new();
    for &mm in &s.grid {
        let rec = Rec::new("tv-scaling", seed).param("N", p(s.n)).param("M", p(mm)).param("samples", p(s.samples));
        let log_c = normalizer_for(mm, s.n, s.normalizer_samples, stream)?;
        let tv = tv_mc(mm, s.n, s.samples, &log_c, &stream.labeled("tv").child(mm as u64))?;
        pts.push((mm as f64, tv.mean));
        out.push(rec.est("tv", &tv).done());
    }
    let mut summary = Rec::new("tv-scaling", seed).param("N", p(s.n)).param("samples", p(s.samples));
    if pts.iter().all(|&(_, y)| y > 0.0) && pts.len() >= 3 {
        summary = summary.value("tv_slope", slope_fit(&pts)?);
    }
    out.push(summary.done());
    Ok(out)
}

fn zeta_scaling(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let s = scaling_inputs(params)?;
    let m1 = params.usize("M", 50)?;
    let mut out = Vec::new();
    let mut pts = Vec::new();
    for &mm in &s.grid {
        let rec = Rec::new("zeta-scaling", seed).param("N", p(s.n)).param("M", p(mm));
        let log_c = normalizer_for(mm, s.n, s.normalizer_samples, stream)?;
        let z = zeta(mm, s.n, &log_c)?;
        let hua = hua_discrepancy(&log_c)?;
        pts.push((mm as f64, (1.0 - z.mean).abs()));
        out.push(
            rec.est("zeta", &z)
                .value("one_minus_zeta_abs", (1.0 - z.mean).abs())
                .value("hua_relative_difference", hua.relative_difference)
                .value("hua_z_score", hua.z_score)
                .done(),
        );
    }
    let mut summary = Rec::new("zeta-scaling", seed).param("N", p(s.n));
    if pts.iter().all(|&(_, y)| y > 0.0) && pts.len() >= 3 {
        summary = summary.value("one_minus_zeta_slope", slope_fit(&pts)?);
    }
    out.push(summary.done());

    // Ground truth at N = 1: quadrature constant, its mass, and the
    // importance-sampled and Hua values against it.
    let q = quadrature_log_constant(m1, 1)?;
    let density = |t: f64| -> f64 {
        let z = ComplexMatrix::from_diagonal(&[C64::new(t.sqrt(), 0.0)]);
        log_density_coe_sub(&z, m1, true, &q).map_or(0.0, |v| if v.support { v.value.exp() } else { 0.0 })
    };
    let mass = std::f64::consts::PI * tanh_sinh(density, 0.0, m1 as f64, 1e-14);
    let is = normalizer_for(m1, 1, s.normalizer_samples, stream)?;
    let is_cmp = compare_with_reference(&is, &q);
    let hua = hua_discrepancy(&q)?;
    out.push(
        Rec::new("zeta-scaling", seed)
            .param("N", 1.0)
            .param("M", p(m1))
            .value("quadrature_mass", mass)
            .value("log_c_quadrature", q.log_c_unscaled)
            .est(
                "log_c_importance",
                &MCEstimate { mean: is.log_c_unscaled, stderr: is.stderr, n_samples: is.samples, seed },
            )
            .value("importance_z_score", is_cmp.z_score)
            .value("hua_relative_difference", hua.relative_difference)
            .flag("hua_discrepancy_detected", !hua.agrees(3.0, 1e-10))
            .done(),
    );
    Ok(out)
}

fn ratio_sup(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let big_m = params.usize("M", 10_000)?;
    let grid = params.grid("Mgrid", &[100, 1000])?;
    let samples = params.usize("normalizer_samples", 200_000)?;
    let mut out = Vec::new();
    let q = quadrature_log_constant(big_m, 1)?;
    let (arg, step) = ratio_profile_grid_argmax(big_m, 1, 1_000_000);
    out.push(
        Rec::new("ratio-sup", seed)
            .param("N", 1.0)
            .param("M", p(big_m))
            .value("sup_minus_one", density_ratio_sup(big_m, 1, &q)? - 1.0)
            .value("grid_argmax", arg)
            .value("grid_step", step)
            .done(),
    );
    let mut excess = Vec::new();
    for &mm in &grid {
        let log_c = normalizer_for(mm, 2, samples, stream)?;
        let sup = density_ratio_sup(mm, 2, &log_c)?;
        let (arg, step) = ratio_profile_grid_argmax(mm, 2, 1_000_000);
        excess.push(sup - 1.0);
        out.push(
            Rec::new("ratio-sup", seed)
                .param("N", 2.0)
                .param("M", p(mm))
                .value("sup_minus_one", sup - 1.0)
                .value("grid_argmax", arg)
                .value("grid_step", step)
                .done(),
        );
    }
    if excess.len() >= 2 {
        out.push(
            Rec::new("ratio-sup", seed)
                .param("N", 2.0)
                .value("shrink_factor", excess[0] / excess[excess.len() - 1])
                .done(),
        );
    }
    Ok(out)
}

fn coupling(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let n = params.usize("N", 2)?;
    let grid = params.grid("Kgrid", &[100, 400, 1600])?;
    let trials = params.usize("trials", 200)?;
    let mut out = Vec::new();
    for &k in &grid {
        let st = coupling_distance_stats(n, k, trials, &stream.child(k as u64))?;
        if !st.all_finite || st.max_symmetry_residual > 1e-12 {
            return Err(Error::Invariant(format!(
                "coupled pair at K={k} not finite/symmetric (residual {:.3e})",
                st.max_symmetry_residual
            )));
        }
        out.push(
            Rec::new("coupling", seed)
                .param("N", p(n))
                .param("K", p(k))
                .param("trials", p(trials))
                .value("median", st.median)
                .value("q90", st.q90)
                .est("mean", &st.mean)
                .value("max_symmetry_residual", st.max_symmetry_residual)
                .done(),
        );
    }
    Ok(out)
}

fn unitary_sub_kl(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let pp = params.usize("p", 8)?;
    let q = params.usize("q", 2)?;
    let grid = params.grid("Mgrid", &[256, 512, 1024, 2048])?;
    let samples = params.usize("samples", 100_000)?;
    let lemma_m = params.usize("M", 256)?;
    let mut out = Vec::new();
    let mut pts = Vec::new();
    for &mm in &grid {
        let kl = kl_unitary_sub_vs_gaussian(mm, pp, q, samples, &stream.labeled("kl").child(mm as u64))?;
        pts.push((mm as f64, kl.mean));
        out.push(
            Rec::new("unitary-sub-kl", seed)
                .param("p", p(pp))
                .param("q", p(q))
                .param("M", p(mm))
                .param("samples", p(samples))
                .est("kl", &kl)
                .done(),
        );
    }
    let mut summary = Rec::new("unitary-sub-kl", seed).param("p", p(pp)).param("q", p(q));
    if pts.iter().all(|&(_, y)| y > 0.0) && pts.len() >= 3 {
        summary = summary.value("kl_slope", slope_fit(&pts)?);
    }
    out.push(summary.done());
    let tr_stream = stream.labeled("trace");
    let tr: Vec<Result<f64>> = crate::par::map_indexed(samples, |i| {
        let b = sample_haar_corner(pp, q, lemma_m, &mut tr_stream.child(i as u64).rng())?;
        Ok(b.frobenius_sq())
    });
    let tr: Vec<f64> = tr.into_iter().collect::<Result<_>>()?;
    out.push(
        Rec::new("unitary-sub-kl", seed)
            .param("p", p(pp))
            .param("q", p(q))
            .param("M", p(lemma_m))
            .est("trM1", &MCEstimate::from_samples(&tr, seed))
            .value("trM1_exact", unitary_sub_trace_moment(1, pp, q, lemma_m)?)
            .done(),
    );
    Ok(out)
}

fn gbs_oracle(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let m = params.usize("M", 2)?;
    let configs = params.usize("configs", 20)?;
    let r_max = params.f64("r", 0.3)?;
    let cutoff = params.usize("cutoff", 20)?;
    if m < 2 {
        return Err(Error::Parameter(format!("gbs-oracle needs M >= 2, got {m}")));
    }
    let pattern = OutputPattern::new((0..m).map(|i| u8::from(i < 2)).collect())?;
    let mut max_rel = 0.0f64;
    let mut max_vac = 0.0f64;
    for c in 0..configs as u64 {
        let mut rng = stream.child(c).rng();
        let u = sample_haar_unitary(m, &mut rng)?;
        if u.unitarity_residual() > crate::gbs::UNITARITY_TOL {
            return Err(Error::Invariant(format!("sampled unitary residual {:.3e}", u.unitarity_residual())));
        }
        let r = r_max * (c as f64 + 1.0) / configs as f64;
        let cfg = GbsConfig::new(m, r, u)?;
        let a = gbs_probability(&cfg, &pattern)?;
        let b = fock_oracle_probability(&cfg, cutoff, &pattern)?;
        max_rel = max_rel.max((a - b).abs() / b);
        let vac = gbs_probability(&cfg, &OutputPattern::vacuum(m))?;
        max_vac = max_vac.max((vac - r.cosh().powi(-(m as i32))).abs());
    }
    Ok(vec![Rec::new("gbs-oracle", seed)
        .param("M", p(m))
        .param("configs", p(configs))
        .param("r", r_max)
        .param("cutoff", p(cutoff))
        .value("max_rel_err", max_rel)
        .value("vacuum_max_abs_err", max_vac)
        .done()])
}

fn hiding_ks(params: &Params, stream: &RngStream, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let n = params.usize("N", 2)?;
    let big_m = params.usize("M", 400)?;
    let compare = params.usize("compare_M", 16)?;
    let trials = params.usize("trials", 5000)?;
    let r = params.f64("r", 0.5)?;
    let mut out = Vec::new();
    for mm in [big_m, compare] {
        let h = hiding_experiment(mm, n, r, trials, stream)?;
        out.push(
            Rec::new("hiding-ks", seed)
                .param("N", p(n))
                .param("M", p(mm))
                .param("trials", p(trials))
                .param("r", r)
                .value("ks", h.ks)
                .value("critical_1pct", h.critical_1pct)
                .done(),
        );
    }
    Ok(out)
}

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Parameter(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

const FIXED_COLUMNS: [&str; 3] = ["experiment", "seed", "wall_time_ms"];
const PARAM_PREFIX: &str = "param.";
const MEAN_SUFFIX: &str = ".mean";
const STDERR_SUFFIX: &str = ".stderr";

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV columns: `experiment, seed, wall_time_ms`, then `param.<name>` for
/// every parameter seen, then `<metric>.mean, <metric>.stderr` for every
/// metric seen, each group sorted by name. Cells a record lacks are empty.
pub fn csv_header(records: &[ExperimentRecord]) -> Vec<String> {
    let params: BTreeSet<&String> = records.iter().flat_map(|r| r.params.keys()).collect();
    let metrics: BTreeSet<&String> = records.iter().flat_map(|r| r.estimates.keys()).collect();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(params.iter().map(|k| format!("{PARAM_PREFIX}{k}")));
    for m in metrics {
        header.push(format!("{m}{MEAN_SUFFIX}"));
        header.push(format!("{m}{STDERR_SUFFIX}"));
    }
    header
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], writer: W) -> Result<()> {
    let header = csv_header(records);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for r in records {
        let row: Vec<String> = header
            .iter()
            .map(|col| match col.as_str() {
                "experiment" => r.experiment.clone(),
                "seed" => r.seed.to_string(),
                "wall_time_ms" => fmt_f64(r.wall_time_ms),
                c if c.starts_with(PARAM_PREFIX) => {
                    r.params.get(&c[PARAM_PREFIX.len()..]).map_or(String::new(), |v| fmt_f64(*v))
                }
                c if c.ends_with(MEAN_SUFFIX) => {
                    r.estimates.get(&c[..c.len() - MEAN_SUFFIX.len()]).map_or(String::new(), |v| fmt_f64(v.0))
                }
                c => r.estimates.get(&c[..c.len() - STDERR_SUFFIX.len()]).map_or(String::new(), |v| fmt_f64(v.1)),
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("bad number {s:?} in column {what}")))
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[..3] != FIXED_COLUMNS {
        return Err(Error::Format(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let mut rec = ExperimentRecord {
            experiment: row[0].to_string(),
            params: BTreeMap::new(),
            estimates: BTreeMap::new(),
            seed: row[1].parse().map_err(|_| Error::Format(format!("bad seed {:?}", &row[1])))?,
            wall_time_ms: parse_f64(&row[2], "wall_time_ms")?,
        };
        let mut col = 3;
        while col < header.len() {
            let name = &header[col];
            if let Some(k) = name.strip_prefix(PARAM_PREFIX) {
                if !row[col].is_empty() {
                    rec.params.insert(k.to_string(), parse_f64(&row[col], name)?);
                }
                col += 1;
            } else if let Some(k) = name.strip_suffix(MEAN_SUFFIX) {
                let se_col = header.get(col + 1).filter(|h| h.strip_suffix(STDERR_SUFFIX) == Some(k));
                if se_col.is_none() {
                    return Err(Error::Format(format!("column {name} lacks a matching stderr column")));
                }
                if !row[col].is_empty() {
                    rec.estimates.insert(
                        k.to_string(),
                        (parse_f64(&row[col], name)?, parse_f64(&row[col + 1], &header[col + 1])?),
                    );
                }
                col += 2;
            } else {
                return Err(Error::Format(format!("unexpected column {name}")));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// A JSON array of records with the struct's field names, newline-terminated.
pub fn write_json<W: Write>(records: &[ExperimentRecord], mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, records)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn write_records(records: &[ExperimentRecord], path: &Path, format: Format) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(records, file),
        Format::Json => write_json(records, file),
    }
}

pub fn read_records(path: &Path, format: Format) -> Result<Vec<ExperimentRecord>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        Format::Csv => read_csv(file),
        Format::Json => Ok(serde_json::from_reader(file)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> ExperimentRecord {
        ExperimentRecord {
            experiment: "coe-moments".into(),
            params: [("M".to_string(), 12.0), ("N".to_string(), 2.0)].into(),
            estimates: [("trM1".to_string(), (6.0 / 13.0, 1.0 / 3.0))].into(),
            seed: 7,
            wall_time_ms: 0.1,
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![sample_record()];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,seed,wall_time_ms\n");
    }

    #[test]
    fn mixed_columns_round_trip() {
        let mut other = sample_record();
        other.experiment = "coupling".into();
        other.params = [("K".to_string(), 100.0)].into();
        other.estimates = [("median".to_string(), (0.25, 0.0))].into();
        let recs = vec![sample_record(), other];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn unknown_experiment_and_bad_params() {
        assert!(matches!(run_experiment("nope", &ExperimentConfig::new(), 1), Err(Error::UnknownExperiment(_))));
        let cfg: ExperimentConfig = [("N".to_string(), ConfigValue::Number(1.5))].into();
        assert!(matches!(run_experiment("coe-moments", &cfg, 1), Err(Error::Parameter(_))));
        let cfg: ExperimentConfig = [("N".to_string(), ConfigValue::Number(20.0))].into();
        assert!(run_experiment("coe-moments", &cfg, 1).unwrap_err().is_precondition());
    }

    #[test]
    fn registry_is_complete() {
        assert_eq!(EXPERIMENTS.len(), 12);
        let names: BTreeSet<&str> = EXPERIMENTS.iter().map(|e| e.0).collect();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<Format>().unwrap(), Format::Csv);
        assert!("xml".parse::<Format>().is_err());
    }
}
