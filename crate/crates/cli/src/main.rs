//! `orthosub` command-line tool.
//!
//! Row indices in every file are 0-based. Exit status is 0 on success,
//! 1 on filesystem failures and 2 on invalid input or flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use orthosub::baselines::{iboss_select, uniform_select};
use orthosub::dataio::{
    expand_interactions, generate_dataset, load_csv, scale_to_unit, write_csv, ColumnRef, CovariateCase, DataMatrix,
    ModelKind, SyntheticSpec,
};
use orthosub::discrepancy::{subset_discrepancy, DiscrepancyConfig, Exponent};
use orthosub::evaluation::{
    ols_fit, run_benchmark, run_bootstrap, subsample_efficiency, term_names, without_timing, write_table_csv,
    write_table_json, BenchRow, BenchmarkSpec, Method,
};
use orthosub::oss::{oss_select_batched, OssConfig};
use orthosub::{Error, Result};

#[derive(Parser)]
#[command(name = "orthosub", version, about = "Orthogonal subsampling for linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale every covariate to [-1, 1] by its min and max.
    Scale(ScaleArgs),
    /// Select k rows and write their 0-based indices.
    Sample(SampleArgs),
    /// Least-squares fit on the rows listed in an index file.
    Fit(FitArgs),
    /// D- and A-efficiency and discrepancy of an index file.
    Evaluate(EvaluateArgs),
    /// Simulation study over a grid of full-sample sizes.
    Bench(BenchArgs),
    /// Bootstrap comparison of the methods on a fixed dataset.
    Bootstrap(BootstrapArgs),
    /// Write a synthetic dataset described by a flat TOML file.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// First line of the input holds column names.
    #[arg(long)]
    header: bool,
    /// Response column, by 0-based index or header name. The remaining
    /// columns are covariates.
    #[arg(long = "response-col")]
    response_col: Option<ColumnRef>,
}

impl InputArgs {
    fn load(&self) -> Result<DataMatrix> {
        load_csv(&self.input, self.header, self.response_col.as_ref())
    }
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    data: InputArgs,
    /// Scaled CSV; the min/max transform goes to `<output>.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Oss,
    Uni,
    Iboss,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Oss => Method::Oss,
            MethodArg::Uni => Method::Uniform,
            MethodArg::Iboss => Method::Iboss,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    data: InputArgs,
    /// Index CSV; a JSON summary goes to `<output>.json`.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "oss")]
    method: MethodArg,
    #[arg(long)]
    k: usize,
    /// Number of disjoint batches for OSS.
    #[arg(long, default_value_t = 1)]
    g: usize,
    #[arg(long, default_value = "2")]
    exponent: Exponent,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// IBOSS looks at pairwise products as well as the covariates.
    #[arg(long)]
    interactions: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: InputArgs,
    /// Index CSV as written by `sample`.
    #[arg(long)]
    indices: PathBuf,
    /// Coefficient CSV with columns term,estimate.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    interactions: bool,
    /// Keep the subsample intercept instead of recentring on full-data means.
    #[arg(long = "no-adjusted-intercept")]
    no_adjusted_intercept: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: InputArgs,
    #[arg(long)]
    indices: PathBuf,
    /// Optional JSON report; always printed to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    interactions: bool,
    #[arg(long, default_value = "2")]
    exponent: Exponent,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Comma-separated subset of oss, uni, iboss.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uni,iboss,oss")]
    methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report zero wall time so repeated runs give identical files.
    #[arg(long = "no-timing")]
    no_timing: bool,
}

impl TableArgs {
    fn methods(&self) -> Vec<Method> {
        self.methods.iter().map(|&m| m.into()).collect()
    }

    fn write(&self, rows: Vec<BenchRow>) -> Result<()> {
        let rows = if self.no_timing { without_timing(rows) } else { rows };
        match self.format {
            Format::Csv => write_table_csv(&self.output, &rows)?,
            Format::Json => write_table_json(&self.output, &rows)?,
        }
        for r in &rows {
            println!("{}", r.summary());
        }
        Ok(())
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, default_value = "uniform")]
    case: CovariateCase,
    /// Comma-separated full-sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    /// Repetitions per sample size.
    #[arg(long = "T", default_value_t = 100)]
    reps: usize,
    /// Simulate and fit the model with all pairwise interactions.
    #[arg(long)]
    interactions: bool,
    #[arg(long, default_value_t = 1)]
    g: usize,
    #[arg(long, default_value = "2")]
    exponent: Exponent,
    #[arg(long = "no-adjusted-intercept")]
    no_adjusted_intercept: bool,
    #[arg(long, default_value_t = 9.0)]
    sigma2: f64,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: InputArgs,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    k: usize,
    /// Number of resamples.
    #[arg(long = "B", default_value_t = 100)]
    resamples: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML file with keys case, n, p, seed, model, beta0, sigma2, slopes,
    /// interactions.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut text = String::from("index\n");
    for i in indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (line_no == 0 && line == "index") {
            continue;
        }
        let i = line.parse().map_err(|_| {
            Error::Invalid(format!(
                "{}: line {}: {line:?} is not a row index",
                path.display(),
                line_no + 1
            ))
        })?;
        out.push(i);
    }
    if out.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(out)
}

fn require_response(data: &DataMatrix) -> Result<&[f64]> {
    data.response()
        .ok_or_else(|| Error::Invalid("--response-col is required for this command".into()))
}

fn cmd_scale(args: &ScaleArgs) -> Result<()> {
    let data = args.data.load()?;
    let (scaled, transform) = scale_to_unit(&data)?;
    let scaled = match data.response() {
        Some(y) => scaled.with_response(y.to_vec())?,
        None => scaled,
    };
    write_csv(&args.output, &scaled)?;
    write_json(&sidecar_path(&args.output), &transform)
}

#[derive(Serialize)]
struct SampleSummary {
    method: Method,
    k: usize,
    g: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
    wall_time_ms: f64,
    batch_sizes: Vec<usize>,
}

fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let data = args.data.load()?;
    let (n, k) = (data.nrows(), args.k);
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let method = Method::from(args.method);
    if args.g != 1 && method != Method::Oss {
        return Err(Error::Invalid("--g applies only to --method oss".into()));
    }
    let start = Instant::now();
    let (indices, discrepancy, batch_sizes) = match method {
        Method::Oss => {
            let (scaled, _) = scale_to_unit(&data)?;
            let cfg = OssConfig::new(k)
                .with_exponent(args.exponent)
                .with_batches(args.g, args.seed);
            let res = oss_select_batched(&scaled, &cfg)?;
            (res.indices, Some(res.discrepancy), res.batch_sizes)
        }
        Method::Uniform => (uniform_select(n, k, args.seed)?, None, vec![k]),
        Method::Iboss => {
            let idx = if args.interactions {
                iboss_select(&data.hstack(&expand_interactions(&data)?)?, k)?
            } else {
                iboss_select(&data, k)?
            };
            (idx, None, vec![k])
        }
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    write_indices(&args.output, &indices)?;
    let summary = SampleSummary {
        method,
        k,
        g: args.g,
        discrepancy,
        wall_time_ms,
        batch_sizes,
    };
    write_json(&sidecar_path(&args.output), &summary)
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let data = args.data.load()?;
    let y = require_response(&data)?;
    let indices = read_indices(&args.indices)?;
    let sub = data.select_rows(&indices)?;
    let mut fit = ols_fit(&sub, sub.response().expect("rows keep their responses"), args.interactions)?;
    if !args.no_adjusted_intercept {
        let y_bar = y.iter().sum::<f64>() / y.len() as f64;
        let mut x_bar = data.column_means();
        if args.interactions {
            x_bar.extend(expand_interactions(&data)?.column_means());
        }
        fit = fit.with_adjusted_intercept(y_bar, &x_bar)?;
    }
    let mut text = String::from("term,estimate\n");
    for (term, est) in term_names(data.ncols(), args.interactions).iter().zip(fit.coefficients()) {
        text.push_str(&format!("{term},{est:?}\n"));
    }
    fs::write(&args.output, text).map_err(|e| io_err(&args.output, e))
}

#[derive(Serialize)]
struct EvaluateReport {
    k: usize,
    d_eff: f64,
    a_eff: f64,
    log_det: f64,
    trace_inverse: f64,
    discrepancy: Option<f64>,
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let data = args.data.load()?;
    let indices = read_indices(&args.indices)?;
    let (scaled, _) = scale_to_unit(&data)?;
    let eff = subsample_efficiency(&scaled, &indices, args.interactions)?;
    let discrepancy = if indices.len() >= 2 {
        Some(subset_discrepancy(
            &scaled,
            &indices,
            DiscrepancyConfig {
                exponent: args.exponent,
            },
        )?)
    } else {
        None
    };
    let report = EvaluateReport {
        k: indices.len(),
        d_eff: eff.d_eff,
        a_eff: eff.a_eff,
        log_det: eff.log_det_ms,
        trace_inverse: eff.trace_ms_inv,
        discrepancy,
    };
    println!(
        "k={} d_eff={:.6} a_eff={:.6} discrepancy={}",
        report.k,
        report.d_eff,
        report.a_eff,
        report.discrepancy.map_or("n/a".to_string(), |d| format!("{d:.6}"))
    );
    match &args.output {
        Some(path) => write_json(path, &report),
        None => Ok(()),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let mut spec = BenchmarkSpec::new(args.case, args.n.clone(), args.p, args.k, args.reps);
    spec.methods = args.table.methods();
    spec.model = if args.interactions {
        ModelKind::Interaction
    } else {
        ModelKind::FirstOrder
    };
    spec.seed = args.table.seed;
    spec.sigma2 = args.sigma2;
    spec.exponent = args.exponent;
    spec.batches = args.g;
    spec.adjusted_intercept = !args.no_adjusted_intercept;
    spec.record_timing = !args.table.no_timing;
    let rows = run_benchmark(&spec)?;
    args.table.write(rows)
}

fn cmd_bootstrap(args: &BootstrapArgs) -> Result<()> {
    let data = args.data.load()?;
    require_response(&data)?;
    let rows = run_bootstrap(&data, args.k, args.resamples, &args.table.methods(), args.table.seed)?;
    args.table.write(rows)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let spec = SyntheticSpec::from_config_str(&text)?;
    write_csv(&args.output, &generate_dataset(&spec)?)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scale(a) => cmd_scale(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}
