//! Least-squares fitting on subsamples, information-matrix efficiencies,
//! empirical MSE, and the simulation and bootstrap drivers that compare
//! subsampling methods.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{iboss_select, uniform_select};
use crate::dataio::{
    expand_interactions, generate_dataset, scale_to_unit, CovariateCase, DataMatrix, ModelKind,
    SyntheticSpec,
};
use crate::discrepancy::Exponent;
use crate::error::{Error, Result};
use crate::oss::{oss_select_batched, Elimination, OssConfig};

/// Relative size of a QR diagonal entry below which a design column counts
/// as linearly dependent on the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "UNI")]
    Uniform,
    #[serde(rename = "IBOSS")]
    Iboss,
    #[serde(rename = "OSS")]
    Oss,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Uniform, Method::Iboss, Method::Oss];

    pub fn name(self) -> &'static str {
        match self {
            Method::Uniform => "UNI",
            Method::Iboss => "IBOSS",
            Method::Oss => "OSS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uni" | "uniform" => Ok(Method::Uniform),
            "iboss" => Ok(Method::Iboss),
            "oss" => Ok(Method::Oss),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Coefficient names in fitting order: `intercept`, `x1..xp`, then
/// `xi:xj` for `i < j` when interactions are included.
pub fn term_names(p: usize, with_interactions: bool) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend((1..=p).map(|j| format!("x{j}")));
    if with_interactions {
        for i in 1..=p {
            for j in i + 1..=p {
                names.push(format!("x{i}:x{j}"));
            }
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    /// Main effects, followed by interaction effects when fitted.
    pub slopes: Vec<f64>,
    pub used_adjusted_intercept: bool,
}

impl FitResult {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = vec![self.intercept];
        c.extend_from_slice(&self.slopes);
        c
    }

    /// Replaces the intercept by `ȳ - x̄ᵀβ̂` using full-sample means.
    pub fn with_adjusted_intercept(mut self, y_bar: f64, x_bar: &[f64]) -> Result<Self> {
        self.intercept = adjusted_intercept(y_bar, x_bar, &self.slopes)?;
        self.used_adjusted_intercept = true;
        Ok(self)
    }
}

/// Intercept column of ones, the covariates, and their pairwise products
/// when requested.
pub fn design_matrix(x: &DataMatrix, with_interactions: bool) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    if with_interactions && p < 2 {
        return Err(Error::invalid("interaction terms need at least two covariates"));
    }
    let q = if with_interactions { p * (p - 1) / 2 } else { 0 };
    let cols = 1 + p + q;
    let mut m = DMatrix::zeros(x.nrows(), cols);
    for (i, r) in x.rows_iter().enumerate() {
        m[(i, 0)] = 1.0;
        for j in 0..p {
            m[(i, 1 + j)] = r[j];
        }
        if with_interactions {
            let mut c = 1 + p;
            for a in 0..p {
                for b in a + 1..p {
                    m[(i, c)] = r[a] * r[b];
                    c += 1;
                }
            }
        }
    }
    Ok(m)
}

/// Ordinary least squares through a Householder QR factorisation of the
/// intercept-augmented design.
pub fn ols_fit(x_s: &DataMatrix, y_s: &[f64], with_interactions: bool) -> Result<FitResult> {
    if y_s.len() != x_s.nrows() {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: x_s.nrows(),
            found: y_s.len(),
        });
    }
    let design = design_matrix(x_s, with_interactions)?;
    let (rows, cols) = design.shape();
    if rows <= cols {
        return Err(Error::Underdetermined { rows, cols });
    }
    let col_norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let qr = design.qr();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)].abs() <= RANK_TOLERANCE * col_norms[j] || col_norms[j] == 0.0 {
            let names = term_names(x_s.ncols(), with_interactions);
            return Err(Error::RankDeficient {
                term: names[j].clone(),
            });
        }
    }
    let mut rhs = DVector::from_column_slice(y_s);
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, cols).into_owned();
    let beta = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::invalid("triangular solve failed"))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("least-squares solution is not finite"));
    }
    Ok(FitResult {
        intercept: beta[0],
        slopes: beta.iter().skip(1).copied().collect(),
        used_adjusted_intercept: false,
    })
}

pub fn adjusted_intercept(y_bar: f64, x_bar: &[f64], slopes: &[f64]) -> Result<f64> {
    if x_bar.len() != slopes.len() {
        return Err(Error::DimensionMismatch {
            what: "covariate means",
            expected: slopes.len(),
            found: x_bar.len(),
        });
    }
    Ok(y_bar - x_bar.iter().zip(slopes).map(|(a, b)| a * b).sum::<f64>())
}

/// `X̃ᵀX̃` for the intercept-augmented rows of `x_s`.
pub fn information_matrix(x_s: &DataMatrix) -> DMatrix<f64> {
    let d = x_s.ncols() + 1;
    let mut m = DMatrix::zeros(d, d);
    let mut aug = vec![0.0; d];
    aug[0] = 1.0;
    for r in x_s.rows_iter() {
        aug[1..].copy_from_slice(r);
        for a in 0..d {
            for b in a..d {
                m[(a, b)] += aug[a] * aug[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub d_eff: f64,
    pub a_eff: f64,
    pub log_det_ms: f64,
    pub trace_ms_inv: f64,
}

/// Eigenvalues below this fraction of the largest mark `M` as singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// D- and A-efficiency of an information matrix built from `k` scaled rows,
/// relative to a `k`-run orthogonal array: `det(M)^(1/d) / k` and
/// `d / (k tr(M⁻¹))` with `d = p + 1`. A singular `M` gets efficiency 0.
pub fn efficiency_report(m: &DMatrix<f64>, k: usize) -> Result<EfficiencyReport> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::NotSymmetric);
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for a in 0..d {
        for b in 0..a {
            if (m[(a, b)] - m[(b, a)]).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let largest = eig.max();
    let smallest = eig.min();
    if !(smallest > SINGULAR_RATIO * largest) || largest <= 0.0 {
        return Ok(EfficiencyReport {
            d_eff: 0.0,
            a_eff: 0.0,
            log_det_ms: f64::NEG_INFINITY,
            trace_ms_inv: f64::INFINITY,
        });
    }
    let log_det: f64 = eig.iter().map(|l| l.ln()).sum();
    let trace_inv: f64 = eig.iter().map(|l| 1.0 / l).sum();
    let (df, kf) = (d as f64, k as f64);
    Ok(EfficiencyReport {
        d_eff: (log_det / df).exp() / kf,
        a_eff: df / (kf * trace_inv),
        log_det_ms: log_det,
        trace_ms_inv: trace_inv,
    })
}

pub fn d_efficiency(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    efficiency_report(m, k).map(|r| r.d_eff)
}

pub fn a_efficiency(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    efficiency_report(m, k).map(|r| r.a_eff)
}

/// Efficiency of the given rows of a scaled matrix; with interactions the
/// design also carries products of the scaled covariates.
pub fn subsample_efficiency(x_scaled: &DataMatrix, indices: &[usize], with_interactions: bool) -> Result<EfficiencyReport> {
    let sub = x_scaled.select_rows(indices)?;
    let design = if with_interactions {
        sub.hstack(&expand_interactions(&sub)?)?
    } else {
        sub
    };
    efficiency_report(&information_matrix(&design), indices.len())
}

/// Mean squared Euclidean distance between each estimate and the truth.
pub fn empirical_mse<E: AsRef<[f64]>>(estimates: &[E], truth: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::invalid("MSE needs at least one estimate"));
    }
    let mut total = 0.0;
    for e in estimates {
        let e = e.as_ref();
        if e.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                what: "estimate length",
                expected: truth.len(),
                found: e.len(),
            });
        }
        total += e.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / estimates.len() as f64)
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of an independent stream: the master seed folded with each tag in
/// turn through SplitMix64.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t)))
}

const TAG_DATA: u64 = 0;
const TAG_UNIFORM: u64 = 1;
const TAG_BATCH: u64 = 2;
const TAG_RESAMPLE: u64 = 3;

/// How the compared methods are configured inside the drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSettings {
    pub k: usize,
    pub exponent: Exponent,
    pub batches: usize,
    pub adjusted_intercept: bool,
    /// Fit main effects plus all pairwise interactions.
    pub interactions: bool,
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
struct MethodOutcome {
    fit: FitResult,
    /// First-order fit on the same rows; only when interactions are fitted.
    first_order: Option<FitResult>,
    efficiency: EfficiencyReport,
    seconds: f64,
}

/// Runs every method on one full sample and fits each subsample.
fn evaluate_methods(
    data: &DataMatrix,
    methods: &[Method],
    settings: &SelectionSettings,
    seed: u64,
) -> Result<Vec<MethodOutcome>> {
    let y = data
        .response()
        .ok_or_else(|| Error::invalid("data has no response column"))?;
    let (n, k) = (data.nrows(), settings.k);
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let interactions = if settings.interactions {
        Some(expand_interactions(data)?)
    } else {
        None
    };
    let y_bar = y.iter().sum::<f64>() / n as f64;
    let mut x_bar = data.column_means();
    if let Some(xi) = &interactions {
        x_bar.extend(xi.column_means());
    }

    let scale_start = Instant::now();
    let (scaled, _) = scale_to_unit(data)?;
    let scale_seconds = scale_start.elapsed().as_secs_f64();

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let indices = match method {
            Method::Uniform => uniform_select(n, k, derive_seed(seed, &[TAG_UNIFORM]))?,
            Method::Iboss => match &interactions {
                Some(xi) => iboss_select(&data.hstack(xi)?, k)?,
                None => iboss_select(data, k)?,
            },
            Method::Oss => {
                let cfg = OssConfig {
                    k,
                    exponent: settings.exponent,
                    elimination: Elimination::Schedule,
                    batches: settings.batches,
                    seed: derive_seed(seed, &[TAG_BATCH]),
                };
                oss_select_batched(&scaled, &cfg)?.indices
            }
        };
        let sub = data.select_rows(&indices)?;
        let y_sub = sub.response().expect("rows keep their responses");
        let mut fit = ols_fit(&sub, y_sub, settings.interactions)?;
        if settings.adjusted_intercept {
            fit = fit.with_adjusted_intercept(y_bar, &x_bar)?;
        }
        let mut seconds = start.elapsed().as_secs_f64();
        if method == Method::Oss {
            seconds += scale_seconds;
        }
        let first_order = if settings.interactions {
            let mut f = ols_fit(&sub, y_sub, false)?;
            if settings.adjusted_intercept {
                f = f.with_adjusted_intercept(y_bar, &x_bar[..data.ncols()])?;
            }
            Some(f)
        } else {
            None
        };
        let efficiency = subsample_efficiency(&scaled, &indices, settings.interactions)?;
        out.push(MethodOutcome {
            fit,
            first_order,
            efficiency,
            seconds: if settings.record_timing { seconds } else { 0.0 },
        });
    }
    Ok(out)
}

/// One row of a benchmark or bootstrap table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub method: Method,
    pub mse_slopes: f64,
    pub mse_intercept: f64,
    pub d_eff_mean: f64,
    pub a_eff_mean: f64,
    /// Mean seconds per repetition spent selecting and fitting.
    pub wall_time: f64,
    /// MSE of the main effects alone.
    #[serde(skip)]
    pub mse_main: f64,
    /// MSE of the interaction effects, when the model has them.
    #[serde(skip)]
    pub mse_interaction: Option<f64>,
    /// MSE of the main effects from a first-order fit that ignores the
    /// interactions, when the model has them.
    #[serde(skip)]
    pub mse_main_first_order: Option<f64>,
}

impl BenchRow {
    pub fn summary(&self) -> String {
        format!(
            "n={} p={} k={} method={} mse_slopes={:.6e} mse_intercept={:.6e} d_eff={:.4} a_eff={:.4} wall_time={:.4}s",
            self.n,
            self.p,
            self.k,
            self.method,
            self.mse_slopes,
            self.mse_intercept,
            self.d_eff_mean,
            self.a_eff_mean,
            self.wall_time
        )
    }
}

fn aggregate(
    n: usize,
    p: usize,
    k: usize,
    method: Method,
    outcomes: &[&MethodOutcome],
    truth_intercept: f64,
    truth_slopes: &[f64],
) -> Result<BenchRow> {
    let intercepts: Vec<[f64; 1]> = outcomes.iter().map(|o| [o.fit.intercept]).collect();
    let slopes: Vec<&[f64]> = outcomes.iter().map(|o| o.fit.slopes.as_slice()).collect();
    let mains: Vec<&[f64]> = slopes.iter().map(|s| &s[..p]).collect();
    let has_interactions = truth_slopes.len() > p;
    let mse_interaction = if has_interactions {
        let inter: Vec<&[f64]> = slopes.iter().map(|s| &s[p..]).collect();
        Some(empirical_mse(&inter, &truth_slopes[p..])?)
    } else {
        None
    };
    let mse_main_first_order = if has_interactions {
        let fo: Vec<&[f64]> = outcomes
            .iter()
            .filter_map(|o| o.first_order.as_ref().map(|f| f.slopes.as_slice()))
            .collect();
        if fo.is_empty() {
            None
        } else {
            Some(empirical_mse(&fo, &truth_slopes[..p])?)
        }
    } else {
        None
    };
    let t = outcomes.len() as f64;
    Ok(BenchRow {
        n,
        p,
        k,
        method,
        mse_slopes: empirical_mse(&slopes, truth_slopes)?,
        mse_intercept: empirical_mse(&intercepts, &[truth_intercept])?,
        d_eff_mean: outcomes.iter().map(|o| o.efficiency.d_eff).sum::<f64>() / t,
        a_eff_mean: outcomes.iter().map(|o| o.efficiency.a_eff).sum::<f64>() / t,
        wall_time: outcomes.iter().map(|o| o.seconds).sum::<f64>() / t,
        mse_main: empirical_mse(&mains, &truth_slopes[..p])?,
        mse_interaction,
        mse_main_first_order,
    })
}

/// Simulation study: for each full-sample size, `reps` independent
/// datasets, every method on each, with MSEs against the true coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub case: CovariateCase,
    pub n_grid: Vec<usize>,
    pub p: usize,
    pub k: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub model: ModelKind,
    pub seed: u64,
    pub beta0: f64,
    pub sigma2: f64,
    pub exponent: Exponent,
    pub batches: usize,
    pub adjusted_intercept: bool,
    pub record_timing: bool,
}

impl BenchmarkSpec {
    /// First-order model, all three methods, β₀ = 1, unit slopes, σ² = 9.
    pub fn new(case: CovariateCase, n_grid: Vec<usize>, p: usize, k: usize, reps: usize) -> Self {
        BenchmarkSpec {
            case,
            n_grid,
            p,
            k,
            reps,
            methods: Method::ALL.to_vec(),
            model: ModelKind::FirstOrder,
            seed: 0,
            beta0: 1.0,
            sigma2: 9.0,
            exponent: Exponent::Two,
            batches: 1,
            adjusted_intercept: true,
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("repetition count must be at least 1"));
        }
        if self.n_grid.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("n grid and method list must be non-empty"));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < self.k) {
            return Err(Error::KExceedsN { k: self.k, n });
        }
        if self.p == 0 || self.k == 0 {
            return Err(Error::invalid("p and k must be positive"));
        }
        if self.model == ModelKind::Interaction && self.p < 2 {
            return Err(Error::invalid("interaction model needs p >= 2"));
        }
        Ok(())
    }

    fn data_spec(&self, n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec::unit_effects(self.case, n, self.p, seed, self.model, self.beta0, self.sigma2)
    }
}

/// One row per `(n, method)`, in grid order then method order.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let settings = SelectionSettings {
        k: spec.k,
        exponent: spec.exponent,
        batches: spec.batches,
        adjusted_intercept: spec.adjusted_intercept,
        interactions: spec.model == ModelKind::Interaction,
        record_timing: spec.record_timing,
    };
    let mut rows = Vec::with_capacity(spec.n_grid.len() * spec.methods.len());
    for &n in &spec.n_grid {
        let truth = spec.data_spec(n, 0).coefficients();
        let per_rep: Vec<Vec<MethodOutcome>> = (0..spec.reps)
            .into_par_iter()
            .map(|rep| {
                // Same stream for every n: smaller full samples are prefixes
                // of larger ones, so grid points share their random numbers.
                let seed = derive_seed(spec.seed, &[TAG_DATA, rep as u64]);
                let data = generate_dataset(&spec.data_spec(n, seed))?;
                evaluate_methods(&data, &spec.methods, &settings, seed)
            })
            .collect::<Result<_>>()?;
        for (m_idx, &method) in spec.methods.iter().enumerate() {
            let outcomes: Vec<&MethodOutcome> = per_rep.iter().map(|r| &r[m_idx]).collect();
            rows.push(aggregate(n, spec.p, spec.k, method, &outcomes, truth[0], &truth[1..])?);
        }
    }
    Ok(rows)
}

/// Bootstrap comparison on a fixed dataset: each resample draws `n` rows
/// with replacement, every method subsamples it, and the fitted slopes are
/// scored against the full-data least-squares fit.
pub fn run_bootstrap(
    data: &DataMatrix,
    k: usize,
    resamples: usize,
    methods: &[Method],
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let y = data
        .response()
        .ok_or_else(|| Error::invalid("bootstrap needs a response column"))?;
    if resamples < 2 {
        return Err(Error::invalid(format!(
            "bootstrap needs at least 2 resamples, got {resamples}"
        )));
    }
    if methods.is_empty() {
        return Err(Error::invalid("method list must be non-empty"));
    }
    let n = data.nrows();
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let reference = ols_fit(data, y, false)?;
    let settings = SelectionSettings {
        k,
        exponent: Exponent::Two,
        batches: 1,
        adjusted_intercept: true,
        interactions: false,
        record_timing: true,
    };
    let per_resample: Vec<Vec<MethodOutcome>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let rs_seed = derive_seed(seed, &[TAG_RESAMPLE, b as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(rs_seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resample = data.select_rows(&rows)?;
            evaluate_methods(&resample, methods, &settings, rs_seed)
        })
        .collect::<Result<_>>()?;
    methods
        .iter()
        .enumerate()
        .map(|(m_idx, &method)| {
            let outcomes: Vec<&MethodOutcome> = per_resample.iter().map(|r| &r[m_idx]).collect();
            aggregate(n, data.ncols(), k, method, &outcomes, reference.intercept, &reference.slopes)
        })
        .collect()
}

/// Zeroes the timing column so repeated runs produce identical tables.
pub fn without_timing(mut rows: Vec<BenchRow>) -> Vec<BenchRow> {
    for r in rows.iter_mut() {
        r.wall_time = 0.0;
    }
    rows
}

pub fn write_table_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Csv(format!("{other:?}")),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_table_json(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}
