//! Dataset loading, validation, scaling to the unit cube, synthetic data
//! generation and interaction expansion.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major covariate table with an optional response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    response: Option<Vec<f64>>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "data matrix needs at least one row and one column, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix values",
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: pos / cols,
                column: (pos % cols).to_string(),
                value: values[pos].to_string(),
            });
        }
        Ok(DataMatrix {
            rows,
            cols,
            values,
            response: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != p {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: p,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        DataMatrix::new(n, p, values)
    }

    pub fn with_response(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: self.rows,
                found: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: i,
                column: "response".into(),
                value: y[i].to_string(),
            });
        }
        self.response = Some(y);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows_iter().map(|r| r[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.rows_iter() {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        let n = self.rows as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Copies the given rows (and their responses) in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DataMatrix> {
        if indices.is_empty() {
            return Err(Error::invalid("cannot select zero rows"));
        }
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        let response = self
            .response
            .as_ref()
            .map(|y| indices.iter().map(|&i| y[i]).collect());
        Ok(DataMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            response,
        })
    }

    /// Column-wise concatenation; the response of `self` is kept.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if other.rows != self.rows {
            return Err(Error::DimensionMismatch {
                what: "row count for column concatenation",
                expected: self.rows,
                found: other.rows,
            });
        }
        let cols = self.cols + other.cols;
        let mut values = Vec::with_capacity(self.rows * cols);
        for (a, b) in self.rows_iter().zip(other.rows_iter()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Ok(DataMatrix {
            rows: self.rows,
            cols,
            values,
            response: self.response.clone(),
        })
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }
}

/// Column selector for the response: a header name or a 0-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(s) => f.write_str(s),
        }
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-separated numeric table. Every column other than the
/// response becomes a covariate, in file order.
pub fn load_csv(path: &Path, has_header: bool, response_col: Option<&ColumnRef>) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut width: Option<usize> = headers.as_ref().map(Vec::len);
    let mut cells: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::RaggedRow {
                row: line,
                expected: w,
                found: record.len(),
            });
        }
        for (j, raw) in record.iter().enumerate() {
            match parse_cell(raw) {
                Some(v) => cells.push(v),
                None => {
                    let column = headers
                        .as_ref()
                        .and_then(|h| h.get(j).cloned())
                        .unwrap_or_else(|| j.to_string());
                    return Err(Error::NonNumeric {
                        row: line,
                        column,
                        value: raw.to_string(),
                    });
                }
            }
        }
        rows += 1;
    }
    let width = match width {
        Some(w) if rows > 0 => w,
        _ => return Err(Error::EmptyFile { path: path.to_path_buf() }),
    };

    let response_idx = match response_col {
        None => None,
        Some(ColumnRef::Index(i)) if *i < width => Some(*i),
        Some(ColumnRef::Name(name)) => {
            let pos = headers
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name));
            match pos {
                Some(i) => Some(i),
                // A bare number that is out of range, or a name without headers.
                None => return Err(Error::UnknownColumn(name.clone())),
            }
        }
        Some(r) => return Err(Error::UnknownColumn(r.to_string())),
    };

    let p = width - usize::from(response_idx.is_some());
    if p == 0 {
        return Err(Error::invalid("no covariate columns left after removing the response"));
    }
    let mut values = Vec::with_capacity(rows * p);
    let mut y = Vec::with_capacity(if response_idx.is_some() { rows } else { 0 });
    for r in cells.chunks_exact(width) {
        for (j, &v) in r.iter().enumerate() {
            if Some(j) == response_idx {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let data = DataMatrix::new(rows, p, values)?;
    match response_idx {
        Some(_) => data.with_response(y),
        None => Ok(data),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Csv(format!("{other:?}")),
        }
    } else {
        Error::Csv(e.to_string())
    }
}

/// Writes covariates as `x1..xp`, followed by `y` when a response exists.
pub fn write_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header: Vec<String> = (1..=data.ncols()).map(|j| format!("x{j}")).collect();
    if data.response().is_some() {
        header.push("y".into());
    }
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for i in 0..data.nrows() {
            let mut line = data
                .row(i)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",");
            if let Some(y) = data.response() {
                line.push(',');
                line.push_str(&format!("{:?}", y[i]));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Per-column affine map onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTransform {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalingTransform {
    pub fn fit(x: &DataMatrix) -> Result<Self> {
        let p = x.ncols();
        let mut mins = vec![f64::INFINITY; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        for r in x.rows_iter() {
            for j in 0..p {
                mins[j] = mins[j].min(r[j]);
                maxs[j] = maxs[j].max(r[j]);
            }
        }
        for j in 0..p {
            if maxs[j] <= mins[j] {
                return Err(Error::ConstantColumn {
                    column: j,
                    value: mins[j],
                });
            }
        }
        Ok(ScalingTransform { mins, maxs })
    }

    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_width(x)?;
        let p = x.ncols();
        let mut values = x.values().to_vec();
        for r in values.chunks_exact_mut(p) {
            for j in 0..p {
                r[j] = 2.0 * (r[j] - self.mins[j]) / (self.maxs[j] - self.mins[j]) - 1.0;
            }
        }
        let mut out = DataMatrix::new(x.nrows(), p, values)?;
        out.response = x.response.clone();
        Ok(out)
    }

    pub fn invert(&self, scaled: &DataMatrix) -> Result<DataMatrix> {
        self.check_width(scaled)?;
        let p = scaled.ncols();
        let mut values = scaled.values().to_vec();
        for r in values.chunks_exact_mut(p) {
            for j in 0..p {
                r[j] = self.mins[j] + (r[j] + 1.0) / 2.0 * (self.maxs[j] - self.mins[j]);
            }
        }
        let mut out = DataMatrix::new(scaled.nrows(), p, values)?;
        out.response = scaled.response.clone();
        Ok(out)
    }

    fn check_width(&self, x: &DataMatrix) -> Result<()> {
        if x.ncols() != self.mins.len() {
            return Err(Error::DimensionMismatch {
                what: "scaling transform width",
                expected: self.mins.len(),
                found: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Maps every covariate onto [-1, 1] using its own min and max.
pub fn scale_to_unit(x: &DataMatrix) -> Result<(DataMatrix, ScalingTransform)> {
    let t = ScalingTransform::fit(x)?;
    let scaled = t.apply(x)?;
    Ok((scaled, t))
}

/// Element-wise products of every column pair `(i, j)`, `i < j`, in
/// lexicographic pair order.
pub fn expand_interactions(x: &DataMatrix) -> Result<DataMatrix> {
    let p = x.ncols();
    if p < 2 {
        return Err(Error::invalid(format!(
            "interaction expansion needs at least 2 columns, got {p}"
        )));
    }
    let q = p * (p - 1) / 2;
    let mut values = Vec::with_capacity(x.nrows() * q);
    for r in x.rows_iter() {
        push_interactions(r, &mut values);
    }
    DataMatrix::new(x.nrows(), q, values)
}

pub(crate) fn push_interactions(row: &[f64], out: &mut Vec<f64>) {
    for i in 0..row.len() {
        for j in i + 1..row.len() {
            out.push(row[i] * row[j]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateCase {
    /// Independent Uniform(-1, 1) entries.
    Uniform,
    /// Rows from N(0, Σ), Σ with unit diagonal and 0.5 elsewhere.
    Normal,
    /// The normal case, rows redrawn until every entry lies in [-5, 5].
    TruncatedNormal,
}

impl FromStr for CovariateCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "1" => Ok(CovariateCase::Uniform),
            "normal" | "2" => Ok(CovariateCase::Normal),
            "truncated-normal" | "truncated_normal" | "3" => Ok(CovariateCase::TruncatedNormal),
            other => Err(Error::invalid(format!("unknown covariate case {other:?}"))),
        }
    }
}

impl fmt::Display for CovariateCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateCase::Uniform => "uniform",
            CovariateCase::Normal => "normal",
            CovariateCase::TruncatedNormal => "truncated-normal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FirstOrder,
    Interaction,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first-order" | "first_order" | "linear" => Ok(ModelKind::FirstOrder),
            "interaction" | "interactions" => Ok(ModelKind::Interaction),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::FirstOrder => "first-order",
            ModelKind::Interaction => "interaction",
        })
    }
}

/// Everything needed to draw a synthetic regression dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub case: CovariateCase,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub beta0: f64,
    pub slopes: Vec<f64>,
    pub interaction_effects: Option<Vec<f64>>,
    pub noise_variance: f64,
}

// RNG streams within one seed.
const COVARIATE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

impl SyntheticSpec {
    /// Unit slopes (and unit interaction effects for the interaction model).
    pub fn unit_effects(
        case: CovariateCase,
        n: usize,
        p: usize,
        seed: u64,
        model: ModelKind,
        beta0: f64,
        noise_variance: f64,
    ) -> Self {
        let interaction_effects = match model {
            ModelKind::FirstOrder => None,
            ModelKind::Interaction => Some(vec![1.0; p * p.saturating_sub(1) / 2]),
        };
        SyntheticSpec {
            case,
            n,
            p,
            seed,
            model,
            beta0,
            slopes: vec![1.0; p],
            interaction_effects,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("synthetic spec needs n >= 1 and p >= 1"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be finite and >= 0, got {}",
                self.noise_variance
            )));
        }
        if self.slopes.len() != self.p {
            return Err(Error::DimensionMismatch {
                what: "slopes",
                expected: self.p,
                found: self.slopes.len(),
            });
        }
        match (self.model, &self.interaction_effects) {
            (ModelKind::FirstOrder, None) => Ok(()),
            (ModelKind::FirstOrder, Some(_)) => Err(Error::invalid(
                "interaction effects given for a first-order model",
            )),
            (ModelKind::Interaction, None) => {
                Err(Error::invalid("interaction model needs interaction effects"))
            }
            (ModelKind::Interaction, Some(b)) => {
                let q = self.p * (self.p - 1) / 2;
                if self.p < 2 {
                    Err(Error::invalid("interaction model needs p >= 2"))
                } else if b.len() != q {
                    Err(Error::DimensionMismatch {
                        what: "interaction effects",
                        expected: q,
                        found: b.len(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True coefficients in fitting order: intercept, slopes, interactions.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut beta = vec![self.beta0];
        beta.extend_from_slice(&self.slopes);
        if let Some(b) = &self.interaction_effects {
            beta.extend_from_slice(b);
        }
        beta
    }

    /// Parses a flat `key = value` file (TOML syntax). Keys: `case`, `n`,
    /// `p`, `seed`, `model`, `beta0`, `sigma2`, `slopes`, `interactions`.
    /// `slopes` and `interactions` accept a scalar (repeated) or an array.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::invalid(format!("bad config: {e}")))?;
        let case: CovariateCase = raw.case.parse()?;
        let model: ModelKind = raw.model.as_deref().unwrap_or("first-order").parse()?;
        let slopes = raw.slopes.unwrap_or(Effects::Scalar(1.0)).expand(raw.p);
        let q = raw.p * raw.p.saturating_sub(1) / 2;
        let interaction_effects = match model {
            ModelKind::FirstOrder => match raw.interactions {
                Some(_) => {
                    return Err(Error::invalid(
                        "`interactions` given but model is first-order",
                    ))
                }
                None => None,
            },
            ModelKind::Interaction => Some(raw.interactions.unwrap_or(Effects::Scalar(1.0)).expand(q)),
        };
        let spec = SyntheticSpec {
            case,
            n: raw.n,
            p: raw.p,
            seed: raw.seed.unwrap_or(0),
            model,
            beta0: raw.beta0.unwrap_or(1.0),
            slopes,
            interaction_effects,
            noise_variance: raw.sigma2.unwrap_or(9.0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    case: String,
    n: usize,
    p: usize,
    seed: Option<u64>,
    model: Option<String>,
    beta0: Option<f64>,
    sigma2: Option<f64>,
    slopes: Option<Effects>,
    interactions: Option<Effects>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Effects {
    Scalar(f64),
    List(Vec<f64>),
}

impl Effects {
    fn expand(self, len: usize) -> Vec<f64> {
        match self {
            Effects::Scalar(v) => vec![v; len],
            Effects::List(v) => v,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lower-triangular factor of the equicorrelated covariance (unit variances,
/// correlation 0.5), stored row by row.
fn equicorrelated_factor(p: usize) -> Vec<Vec<f64>> {
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.5 });
    let l = sigma
        .cholesky()
        .expect("equicorrelated covariance with rho = 0.5 is positive definite")
        .l();
    (0..p).map(|i| (0..=i).map(|j| l[(i, j)]).collect()).collect()
}

fn correlated_row(factor: &[Vec<f64>], z: &mut [f64], out: &mut [f64], rng: &mut ChaCha8Rng) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for (o, l) in out.iter_mut().zip(factor) {
        *o = l.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    }
}

const TRUNCATION_BOUND: f64 = 5.0;

/// Draws the covariate matrix; bitwise reproducible for a given spec, and
/// the first `m` rows do not depend on `n`.
pub fn generate_covariates(spec: &SyntheticSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = rng_for(spec.seed, COVARIATE_STREAM);
    let mut values = vec![0.0; n * p];
    match spec.case {
        CovariateCase::Uniform => {
            for v in values.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        CovariateCase::Normal | CovariateCase::TruncatedNormal => {
            let factor = equicorrelated_factor(p);
            let truncate = spec.case == CovariateCase::TruncatedNormal;
            let mut z = vec![0.0; p];
            for row in values.chunks_exact_mut(p) {
                loop {
                    correlated_row(&factor, &mut z, row, &mut rng);
                    if !truncate || row.iter().all(|v| v.abs() <= TRUNCATION_BOUND) {
                        break;
                    }
                }
            }
        }
    }
    DataMatrix::new(n, p, values)
}

/// Evaluates the spec's model on `x` and adds N(0, σ²) noise.
pub fn generate_response(x: &DataMatrix, spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.ncols() != spec.p {
        return Err(Error::DimensionMismatch {
            what: "covariate columns",
            expected: spec.p,
            found: x.ncols(),
        });
    }
    let mut rng = rng_for(spec.seed, NOISE_STREAM);
    let sd = spec.noise_variance.sqrt();
    let mut scratch = Vec::new();
    let y = x
        .rows_iter()
        .map(|r| {
            let mut mean = spec.beta0;
            for (b, v) in spec.slopes.iter().zip(r) {
                mean += b * v;
            }
            if let Some(effects) = &spec.interaction_effects {
                scratch.clear();
                push_interactions(r, &mut scratch);
                for (b, v) in effects.iter().zip(&scratch) {
                    mean += b * v;
                }
            }
            let eps: f64 = rng.sample(StandardNormal);
            mean + sd * eps
        })
        .collect();
    Ok(y)
}

/// Covariates plus response in one call.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<DataMatrix> {
    let x = generate_covariates(spec)?;
    let y = generate_response(&x, spec)?;
    x.with_response(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_with_named_response() {
        let f = temp_csv("a,b\n0,1\n5,2\n10,3\n");
        let d = load_csv(f.path(), true, Some(&ColumnRef::Name("b".into()))).unwrap();
        assert_eq!((d.nrows(), d.ncols()), (3, 1));
        assert_eq!(d.values(), &[0.0, 5.0, 10.0]);
        assert_eq!(d.response().unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn loads_headerless_with_index_response() {
        let f = temp_csv("1e0,2,3\n4,5.5,-6E-1\n");
        let d = load_csv(f.path(), false, Some(&ColumnRef::Index(0))).unwrap();
        assert_eq!(d.values(), &[2.0, 3.0, 5.5, -0.6]);
        assert_eq!(d.response().unwrap(), &[1.0, 4.0]);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let f = temp_csv("a,b\n1,2\n3,NaN\n");
        match load_csv(f.path(), true, None) {
            Err(Error::NonNumeric { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_cell_rejected() {
        let f = temp_csv("1,2\n3,abc\n");
        assert!(matches!(
            load_csv(f.path(), false, None),
            Err(Error::NonNumeric { row: 2, .. })
        ));
    }

    #[test]
    fn ragged_and_empty_and_missing() {
        let f = temp_csv("a,b\n1,2\n3\n");
        assert!(matches!(load_csv(f.path(), true, None), Err(Error::RaggedRow { .. })));
        let f = temp_csv("a,b\n");
        assert!(matches!(load_csv(f.path(), true, None), Err(Error::EmptyFile { .. })));
        let f = temp_csv("");
        assert!(matches!(load_csv(f.path(), false, None), Err(Error::EmptyFile { .. })));
        let err = load_csv(Path::new("/nonexistent/file.csv"), true, None).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn unknown_response_column() {
        let f = temp_csv("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), true, Some(&ColumnRef::Name("zz".into()))),
            Err(Error::UnknownColumn(_))
        ));
        assert!(matches!(
            load_csv(f.path(), true, Some(&ColumnRef::Index(7))),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = DataMatrix::from_rows(&[[0.1, -2.5], [3.0, 1e-17]])
            .unwrap()
            .with_response(vec![1.0, 2.0])
            .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(f.path(), &d).unwrap();
        let back = load_csv(f.path(), true, Some(&ColumnRef::Name("y".into()))).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn scale_endpoints() {
        let x = DataMatrix::from_rows(&[[0.0], [5.0], [10.0]]).unwrap();
        let (s, _) = scale_to_unit(&x).unwrap();
        assert_eq!(s.values(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn scale_identity_on_extremes() {
        let x = DataMatrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]).unwrap();
        let (s, _) = scale_to_unit(&x).unwrap();
        assert_eq!(s.values(), x.values());
    }

    #[test]
    fn constant_column_is_an_error() {
        let x = DataMatrix::from_rows(&[[1.0, 2.0], [3.0, 2.0], [4.0, 2.0]]).unwrap();
        match scale_to_unit(&x) {
            Err(Error::ConstantColumn { column, .. }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn interactions_order_and_count() {
        let x = DataMatrix::from_rows(&[[2.0, 3.0, 5.0]]).unwrap();
        let e = expand_interactions(&x).unwrap();
        assert_eq!(e.values(), &[6.0, 10.0, 15.0]);
        let x = DataMatrix::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(expand_interactions(&x).unwrap().values(), &[6.0]);
        let x = DataMatrix::new(1, 10, vec![1.0; 10]).unwrap();
        assert_eq!(expand_interactions(&x).unwrap().ncols(), 45);
        let x = DataMatrix::from_rows(&[[2.0]]).unwrap();
        assert!(expand_interactions(&x).is_err());
    }

    #[test]
    fn noiseless_response() {
        let mut spec = SyntheticSpec::unit_effects(CovariateCase::Uniform, 1, 2, 0, ModelKind::FirstOrder, 1.0, 0.0);
        spec.validate().unwrap();
        let x = DataMatrix::from_rows(&[[0.5, -0.5]]).unwrap();
        assert_eq!(generate_response(&x, &spec).unwrap(), vec![1.0]);
        spec.slopes = vec![1.0];
        assert!(generate_response(&x, &spec).is_err());
    }

    #[test]
    fn interaction_model_uses_all_pairs() {
        let spec = SyntheticSpec::unit_effects(CovariateCase::Uniform, 1, 10, 0, ModelKind::Interaction, 0.0, 0.0);
        assert_eq!(spec.interaction_effects.as_ref().unwrap().len(), 45);
        let x = DataMatrix::new(1, 10, vec![1.0; 10]).unwrap();
        // 10 main effects plus 45 products of ones.
        assert_eq!(generate_response(&x, &spec).unwrap(), vec![55.0]);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SyntheticSpec::unit_effects(CovariateCase::Normal, 10, 3, 0, ModelKind::FirstOrder, 1.0, 9.0);
        spec.noise_variance = -1.0;
        assert!(spec.validate().is_err());
        spec.noise_variance = 1.0;
        spec.interaction_effects = Some(vec![1.0; 3]);
        assert!(spec.validate().is_err());
        spec.model = ModelKind::Interaction;
        spec.validate().unwrap();
        spec.interaction_effects = None;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn uniform_case_range() {
        let spec = SyntheticSpec::unit_effects(CovariateCase::Uniform, 1000, 2, 3, ModelKind::FirstOrder, 1.0, 9.0);
        let x = generate_covariates(&spec).unwrap();
        assert!(x.values().iter().all(|v| *v > -1.0 && *v < 1.0));
    }

    #[test]
    fn truncated_case_bounded() {
        for seed in 0..5 {
            let spec = SyntheticSpec::unit_effects(CovariateCase::TruncatedNormal, 2000, 20, seed, ModelKind::FirstOrder, 1.0, 9.0);
            let x = generate_covariates(&spec).unwrap();
            assert!(x.values().iter().all(|v| v.abs() <= 5.0));
        }
    }

    #[test]
    fn normal_case_correlation() {
        let spec = SyntheticSpec::unit_effects(CovariateCase::Normal, 100_000, 50, 11, ModelKind::FirstOrder, 1.0, 9.0);
        let x = generate_covariates(&spec).unwrap();
        let n = x.nrows() as f64;
        let means = x.column_means();
        let var = |j: usize| x.rows_iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
        let cov = |a: usize, b: usize| {
            x.rows_iter()
                .map(|r| (r[a] - means[a]) * (r[b] - means[b]))
                .sum::<f64>()
                / n
        };
        for &(a, b) in &[(0, 1), (0, 49), (17, 33), (48, 49)] {
            let rho = cov(a, b) / (var(a) * var(b)).sqrt();
            assert!((rho - 0.5).abs() < 0.02, "corr({a},{b}) = {rho}");
        }
        for j in [0, 25, 49] {
            assert!((var(j) - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn config_file_parsing() {
        let spec = SyntheticSpec::from_config_str(
            "case = \"normal\"\nn = 50\np = 3\nseed = 4\nmodel = \"interaction\"\nbeta0 = 2.0\nsigma2 = 0.5\nslopes = [1.0, 2.0, 3.0]\ninteractions = 0.5\n",
        )
        .unwrap();
        assert_eq!(spec.case, CovariateCase::Normal);
        assert_eq!(spec.slopes, vec![1.0, 2.0, 3.0]);
        assert_eq!(spec.interaction_effects, Some(vec![0.5; 3]));
        assert_eq!(spec.coefficients().len(), 7);
        assert!(SyntheticSpec::from_config_str("case = \"uniform\"\nn = 5\np = 2\nslopes = [1.0]\n").is_err());
        assert!(SyntheticSpec::from_config_str("case = \"uniform\"\nn = 5\np = 2\nbogus = 1\n").is_err());
    }

    proptest! {
        #[test]
        fn scaling_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 2..20)) {
            let x = DataMatrix::from_rows(&rows).unwrap();
            let Ok((s, t)) = scale_to_unit(&x) else { return Ok(()); };
            let back = t.invert(&s).unwrap();
            for j in 0..3 {
                let scale = t.mins[j].abs().max(t.maxs[j].abs());
                for i in 0..x.nrows() {
                    prop_assert!((back.get(i, j) - x.get(i, j)).abs() <= 1e-12 * scale);
                }
                let col = s.column(j);
                let src = x.column(j);
                let amin = (0..src.len()).min_by(|&a, &b| src[a].total_cmp(&src[b])).unwrap();
                let amax = (0..src.len()).max_by(|&a, &b| src[a].total_cmp(&src[b])).unwrap();
                prop_assert_eq!(col[amin], -1.0);
                prop_assert_eq!(col[amax], 1.0);
                prop_assert!(col.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn interaction_entries_are_products(rows in prop::collection::vec(prop::collection::vec(-3f64..3.0, 4), 1..8)) {
            let x = DataMatrix::from_rows(&rows).unwrap();
            let e = expand_interactions(&x).unwrap();
            prop_assert_eq!(e.ncols(), 6);
            for i in 0..x.nrows() {
                let mut c = 0;
                for a in 0..4 {
                    for b in a + 1..4 {
                        prop_assert_eq!(e.get(i, c), x.get(i, a) * x.get(i, b));
                        c += 1;
                    }
                }
            }
        }

        #[test]
        fn generation_reproducible(seed in any::<u64>(), case in 0usize..3) {
            let case = [CovariateCase::Uniform, CovariateCase::Normal, CovariateCase::TruncatedNormal][case];
            let spec = SyntheticSpec::unit_effects(case, 30, 4, seed, ModelKind::FirstOrder, 1.0, 9.0);
            let a = generate_dataset(&spec).unwrap();
            let b = generate_dataset(&spec).unwrap();
            let bits = |d: &DataMatrix| d.values().iter().chain(d.response().unwrap()).map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&b));
        }

        #[test]
        fn smaller_samples_are_prefixes(seed in any::<u64>(), case in 0usize..3, m in 1usize..40) {
            let case = [CovariateCase::Uniform, CovariateCase::Normal, CovariateCase::TruncatedNormal][case];
            let small = generate_dataset(&SyntheticSpec::unit_effects(case, m, 3, seed, ModelKind::Interaction, 1.0, 9.0)).unwrap();
            let large = generate_dataset(&SyntheticSpec::unit_effects(case, 60, 3, seed, ModelKind::Interaction, 1.0, 9.0)).unwrap();
            prop_assert_eq!(small.values(), &large.values()[..m * 3]);
            prop_assert_eq!(small.response().unwrap(), &large.response().unwrap()[..m]);
        }
    }
}
