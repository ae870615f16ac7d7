//! Command-line front end.
//!
//! Every flag may also be given in a TOML file passed with `--config`
//! (same names, e.g. `x-cols = ["a", "b"]`, `G = [10, 25]`); flags on the
//! command line take precedence. Exit codes: 0 success, 2 invalid input or
//! configuration, 3 numerical failure, 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{
    add_dummies, within_transform, ClusteredDataset, DataTable, Hypothesis, PanelSchema,
};
use crate::edgeworth::MomentOptions;
use crate::error::{Error, Result};
use crate::mc::report::{render_table, write_table, Table};
use crate::mc::{run_grid, Design, GridConfig, PanelColumns, Report, StatePanel};
use crate::methods::{evaluate, Method, MethodDetails, MethodOptions, MethodResult};
use crate::ols::{fit, ClusterFit};
use crate::rng::{StreamKey, DEFAULT_SEED};

const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_BOOT: usize = 999;
const DEFAULT_REPS: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "cluster-edgeworth",
    version,
    about = "Cluster-robust inference with Edgeworth-corrected critical values"
)]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test `lambda' beta = c0` on a delimited data file.
    Infer(InferArgs),
    /// Run the simulation designs over a grid of cluster counts.
    Mc(McArgs),
}

#[derive(Debug, Args, Default)]
pub struct InferArgs {
    /// Delimited input file with a header row.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Column holding cluster labels.
    #[arg(long, value_name = "NAME")]
    pub cluster_col: Option<String>,
    /// Outcome column.
    #[arg(long, value_name = "NAME")]
    pub y_col: Option<String>,
    /// Regressor columns, comma separated (include a constant column if wanted).
    #[arg(long, value_name = "A,B,..", value_delimiter = ',')]
    pub x_cols: Vec<String>,
    /// Weights of the tested combination, one per regressor (dummy columns
    /// added by --dummies may be omitted and get weight 0).
    #[arg(
        long,
        value_name = "W1,W2,..",
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub lambda: Vec<f64>,
    /// Null value c0 [default: 0].
    #[arg(long = "null", value_name = "C0", allow_negative_numbers = true)]
    pub null: Option<f64>,
    /// Significance level [default: 0.05].
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    /// Methods, comma separated [default: analytic,normal,student_d1,pairs,wcb].
    #[arg(long, value_name = "M1,M2,..", value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Bootstrap draws [default: 999].
    #[arg(long, value_name = "B")]
    pub boot: Option<usize>,
    /// Random seed for the bootstraps [default: 20240611].
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Clip per-cluster moment summands at +/- this value.
    #[arg(long, value_name = "TAU")]
    pub truncation: Option<f64>,
    /// Demean outcome and regressors within clusters before fitting.
    #[arg(long)]
    pub within: bool,
    /// Add indicators for the levels of a column (base level dropped); repeatable.
    #[arg(long, value_name = "COL")]
    pub dummies: Vec<String>,
    /// Field delimiter of the input file [default: ,].
    #[arg(long, value_name = "CHAR")]
    pub delimiter: Option<char>,
    /// Write one delimited row per method to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write a JSON report to this file.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct McArgs {
    /// Designs, comma separated: bdm1, exp2, binary3, fe4.
    #[arg(long, value_name = "D1,D2,..", value_delimiter = ',')]
    pub design: Vec<String>,
    /// Cluster counts, comma separated.
    #[arg(long = "G", value_name = "G1,G2,..", value_delimiter = ',')]
    pub g: Vec<usize>,
    /// Methods, comma separated [default: all].
    #[arg(long, value_name = "M1,M2,..", value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Replications per (design, G) [default: 1000].
    #[arg(long, value_name = "R")]
    pub reps: Option<usize>,
    /// Bootstrap draws [default: 999].
    #[arg(long, value_name = "B")]
    pub boot: Option<usize>,
    /// Significance level [default: 0.05].
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    /// Random seed [default: 20240611].
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, env = "CE_THREADS", value_name = "T")]
    pub threads: Option<usize>,
    /// State-year panel for design bdm1.
    #[arg(long, value_name = "FILE")]
    pub panel: Option<PathBuf>,
    /// Panel state column [default: state].
    #[arg(long, value_name = "NAME")]
    pub cluster_col: Option<String>,
    /// Panel outcome column [default: lnwage].
    #[arg(long, value_name = "NAME")]
    pub y_col: Option<String>,
    /// Panel year column [default: year].
    #[arg(long, value_name = "NAME")]
    pub year_col: Option<String>,
    /// Field delimiter of the panel file [default: ,].
    #[arg(long, value_name = "CHAR")]
    pub delimiter: Option<char>,
    /// Clip per-cluster moment summands at +/- this value.
    #[arg(long, value_name = "TAU")]
    pub truncation: Option<f64>,
    /// Write the rejection-rate table here and the critical-value table
    /// next to it with a `.cv` infix (`x.csv` -> `x.cv.csv`).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// A list given either as a TOML array or a comma-separated string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ListOf<T> {
    Items(Vec<T>),
    Joined(String),
}

impl ListOf<String> {
    fn into_vec(self) -> Vec<String> {
        match self {
            ListOf::Items(v) => v,
            ListOf::Joined(s) => s
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }
}

impl<T: std::str::FromStr> ListOf<T> {
    fn parse_vec(self, key: &str) -> Result<Vec<T>> {
        match self {
            ListOf::Items(v) => Ok(v),
            ListOf::Joined(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid entry {p:?} in {key}")))
                })
                .collect(),
        }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    data: Option<PathBuf>,
    cluster_col: Option<String>,
    y_col: Option<String>,
    year_col: Option<String>,
    x_cols: Option<ListOf<String>>,
    lambda: Option<ListOf<f64>>,
    null: Option<f64>,
    alpha: Option<f64>,
    methods: Option<ListOf<String>>,
    design: Option<ListOf<String>>,
    #[serde(rename = "G", alias = "g")]
    g: Option<ListOf<usize>>,
    reps: Option<usize>,
    boot: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    panel: Option<PathBuf>,
    truncation: Option<f64>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    within: Option<bool>,
    dummies: Option<ListOf<String>>,
    delimiter: Option<char>,
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn or_list(flag: Vec<String>, file: Option<ListOf<String>>) -> Vec<String> {
    if flag.is_empty() {
        file.map(ListOf::into_vec).unwrap_or_default()
    } else {
        flag
    }
}

fn or_parsed<T: std::str::FromStr>(
    flag: Vec<T>,
    file: Option<ListOf<T>>,
    key: &str,
) -> Result<Vec<T>> {
    if flag.is_empty() {
        file.map(|l| l.parse_vec(key))
            .transpose()
            .map(Option::unwrap_or_default)
    } else {
        Ok(flag)
    }
}

impl InferArgs {
    fn merge(mut self, f: FileConfig) -> Result<Self> {
        self.data = self.data.or(f.data);
        self.cluster_col = self.cluster_col.or(f.cluster_col);
        self.y_col = self.y_col.or(f.y_col);
        self.x_cols = or_list(self.x_cols, f.x_cols);
        self.lambda = or_parsed(self.lambda, f.lambda, "lambda")?;
        self.null = self.null.or(f.null);
        self.alpha = self.alpha.or(f.alpha);
        self.methods = or_list(self.methods, f.methods);
        self.boot = self.boot.or(f.boot);
        self.seed = self.seed.or(f.seed);
        self.truncation = self.truncation.or(f.truncation);
        self.within = self.within || f.within.unwrap_or(false);
        self.dummies = or_list(self.dummies, f.dummies);
        self.delimiter = self.delimiter.or(f.delimiter);
        self.out = self.out.or(f.out);
        self.report = self.report.or(f.report);
        Ok(self)
    }
}

impl McArgs {
    fn merge(mut self, f: FileConfig) -> Result<Self> {
        self.design = or_list(self.design, f.design);
        self.g = or_parsed(self.g, f.g, "G")?;
        self.methods = or_list(self.methods, f.methods);
        self.reps = self.reps.or(f.reps);
        self.boot = self.boot.or(f.boot);
        self.alpha = self.alpha.or(f.alpha);
        self.seed = self.seed.or(f.seed);
        self.threads = self.threads.or(f.threads);
        self.panel = self.panel.or(f.panel);
        self.cluster_col = self.cluster_col.or(f.cluster_col);
        self.y_col = self.y_col.or(f.y_col);
        self.year_col = self.year_col.or(f.year_col);
        self.delimiter = self.delimiter.or(f.delimiter);
        self.truncation = self.truncation.or(f.truncation);
        self.out = self.out.or(f.out);
        self.report = self.report.or(f.report);
        Ok(self)
    }
}

fn delimiter_byte(c: Option<char>) -> Result<u8> {
    let c = c.unwrap_or(',');
    u8::try_from(c).ok().filter(u8::is_ascii).ok_or_else(|| {
        Error::Config(format!(
            "delimiter must be a single ASCII character, got {c:?}"
        ))
    })
}

fn parse_methods(names: &[String], default: &[Method]) -> Result<Vec<Method>> {
    if names.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let m: Method = n.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Dataset and hypothesis assembled from `infer` arguments.
pub struct InferInput {
    pub dataset: ClusteredDataset,
    pub hypothesis: Hypothesis,
    pub warnings: Vec<String>,
}

fn build_input(a: &InferArgs) -> Result<InferInput> {
    let data = required(a.data.as_ref(), "data")?;
    let schema = PanelSchema {
        cluster: required(a.cluster_col.clone(), "cluster-col")?,
        y: required(a.y_col.clone(), "y-col")?,
        x: a.x_cols.clone(),
    };
    if schema.x.is_empty() {
        return Err(Error::Config("--x-cols is required".into()));
    }
    let table = DataTable::read_path(data, delimiter_byte(a.delimiter)?)?;
    let mut dataset = table.to_dataset(&schema)?;
    let mut warnings = Vec::new();
    for col in &a.dummies {
        let expansion = add_dummies(&dataset, &table.factor(&schema, col)?)?;
        warnings.extend(expansion.warning);
        dataset = expansion.dataset;
    }
    if a.within {
        dataset = within_transform(&dataset)?;
    }
    let k = dataset.num_regressors();
    let mut lambda = a.lambda.clone();
    if lambda.is_empty() {
        return Err(Error::Config("--lambda is required".into()));
    }
    if lambda.len() == schema.x.len() && k > lambda.len() && !a.dummies.is_empty() {
        lambda.resize(k, 0.0);
    }
    if lambda.len() != k {
        return Err(Error::Argument(format!(
            "lambda has {} entries but the design has k={k} regressors",
            lambda.len()
        )));
    }
    let hypothesis = Hypothesis::new(
        DVector::from_vec(lambda),
        a.null.unwrap_or(0.0),
        a.alpha.unwrap_or(DEFAULT_ALPHA),
    )?;
    Ok(InferInput {
        dataset,
        hypothesis,
        warnings,
    })
}

const INFER_DEFAULT_METHODS: [Method; 5] = [
    Method::Analytic,
    Method::Normal,
    Method::StudentD1,
    Method::Pairs,
    Method::Wcb,
];

/// One method row of `infer` output.
#[derive(Debug, Serialize)]
pub struct InferRow {
    pub method: Method,
    pub result: Option<MethodResult>,
    pub ci: Option<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
struct InferReport<'a> {
    format_version: u32,
    num_clusters: usize,
    num_obs: usize,
    regressors: &'a [String],
    beta_hat: Vec<f64>,
    lambda: Vec<f64>,
    c0: f64,
    alpha: f64,
    estimate: f64,
    sigma_hat: f64,
    std_error: f64,
    t_stat: f64,
    methods: &'a [InferRow],
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn print_infer(
    w: &mut dyn Write,
    input: &InferInput,
    fitted: &ClusterFit,
    rows: &[InferRow],
) -> std::io::Result<()> {
    let d = &input.dataset;
    writeln!(
        w,
        "G = {}  N = {}  k = {}",
        d.num_clusters(),
        d.num_obs(),
        d.num_regressors()
    )?;
    let width = d
        .regressor_names()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(4);
    writeln!(w, "beta_hat:")?;
    for (name, b) in d.regressor_names().iter().zip(fitted.beta_hat().iter()) {
        writeln!(w, "  {name:<width$}  {}", fmt_num(*b))?;
    }
    writeln!(w, "lambda'beta_hat = {}", fmt_num(fitted.estimate()))?;
    writeln!(w, "sigma_hat = {}", fmt_num(fitted.sigma_hat()))?;
    writeln!(w, "t = {}", fmt_num(fitted.t_stat()))?;
    writeln!(w)?;
    writeln!(
        w,
        "{:<15} {:>10}  {:<14} {:>12} {:>12}",
        "method", "cv", "decision", "ci_lower", "ci_upper"
    )?;
    for row in rows {
        match (&row.result, row.ci) {
            (Some(r), Some((lo, hi))) => writeln!(
                w,
                "{:<15} {:>10}  {:<14} {:>12} {:>12}",
                r.method.name(),
                fmt_num(r.cv_effective),
                if r.reject { "reject" } else { "fail to reject" },
                fmt_num(lo),
                fmt_num(hi)
            )?,
            _ => writeln!(
                w,
                "{:<15} unavailable: {}",
                row.method.name(),
                row.error.as_deref().unwrap_or("")
            )?,
        }
    }
    for row in rows {
        if let Some(MethodResult {
            details: MethodDetails::Analytic { moments, critical },
            ..
        }) = &row.result
        {
            writeln!(w)?;
            writeln!(
                w,
                "analytic: k1 = {}  k2 = {}  k3 = {}  k4 = {}",
                fmt_num(moments.k1()),
                fmt_num(moments.k2()),
                fmt_num(moments.k3()),
                fmt_num(moments.k4())
            )?;
            writeln!(
                w,
                "analytic: z0 = {}  q2(z0) = {}  cv = z0 - q2(z0)/G = {}",
                fmt_num(critical.z0),
                fmt_num(critical.q2_at_z0),
                fmt_num(critical.cv)
            )?;
            if critical.diagnostics.negative_cv || critical.diagnostics.negative_k2 {
                writeln!(
                    w,
                    "analytic: warning: negative_cv = {}  negative_k2 = {}",
                    critical.diagnostics.negative_cv, critical.diagnostics.negative_k2
                )?;
            }
        }
    }
    Ok(())
}

/// Runs `infer`, writing the human-readable report to `stdout`.
pub fn cmd_infer(args: InferArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let methods = parse_methods(&args.methods, &INFER_DEFAULT_METHODS)?;
    let input = build_input(&args)?;
    for w in &input.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let fitted = fit(&input.dataset, &input.hypothesis)?;
    let opts = MethodOptions {
        boot: args.boot.unwrap_or(DEFAULT_BOOT),
        key: StreamKey::root(args.seed.unwrap_or(DEFAULT_SEED)),
        moments: MomentOptions {
            truncation: args.truncation,
        },
    };
    let rows = methods
        .iter()
        .map(|&m| match evaluate(m, &input.dataset, &fitted, &opts) {
            Ok(r) => Ok(InferRow {
                method: m,
                ci: Some(r.interval(&fitted)),
                result: Some(r),
                error: None,
            }),
            // A requested method that cannot run on these arguments is a usage error.
            Err(e @ Error::Argument(_)) => Err(e),
            Err(e) => Ok(InferRow {
                method: m,
                result: None,
                ci: None,
                error: Some(e.to_string()),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    print_infer(stdout, &input, &fitted, &rows)
        .map_err(|e| Error::Schema(format!("cannot write output: {e}")))?;

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Schema(format!("delimited output failed: {e}"));
        w.write_record(["method", "cv", "reject", "ci_lower", "ci_upper"])
            .map_err(io)?;
        for row in &rows {
            let rec = match (&row.result, row.ci) {
                (Some(r), Some((lo, hi))) => vec![
                    r.method.name().to_string(),
                    format!("{}", r.cv_effective),
                    r.reject.to_string(),
                    format!("{lo}"),
                    format!("{hi}"),
                ],
                _ => vec![
                    row.method.name().to_string(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                ],
            };
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Schema(format!("delimited output failed: {e}")))?;
        write_file(path, &bytes)?;
    }
    if let Some(path) = &args.report {
        let d = &input.dataset;
        let report = InferReport {
            format_version: 1,
            num_clusters: d.num_clusters(),
            num_obs: d.num_obs(),
            regressors: d.regressor_names(),
            beta_hat: fitted.beta_hat().iter().copied().collect(),
            lambda: input.hypothesis.lambda().iter().copied().collect(),
            c0: input.hypothesis.c0(),
            alpha: input.hypothesis.alpha(),
            estimate: fitted.estimate(),
            sigma_hat: fitted.sigma_hat(),
            std_error: fitted.std_error(),
            t_stat: fitted.t_stat(),
            methods: &rows,
        };
        let mut json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Schema(e.to_string()))?;
        json.push('\n');
        write_file(path, json.as_bytes())?;
    }
    Ok(())
}

/// Path of the critical-value table that accompanies `--out`.
pub fn cv_table_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.cv.{}", ext.to_string_lossy()),
        None => format!("{stem}.cv"),
    };
    out.with_file_name(name)
}

/// Runs `mc`.
pub fn cmd_mc(args: McArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    if args.design.is_empty() {
        return Err(Error::Config("--design is required".into()));
    }
    if args.g.is_empty() {
        return Err(Error::Config("--G is required".into()));
    }
    let designs = args
        .design
        .iter()
        .map(|d| d.parse())
        .collect::<Result<Vec<Design>>>()?;
    let cfg = GridConfig {
        designs,
        clusters: args.g.clone(),
        methods: parse_methods(&args.methods, &Method::ALL)?,
        reps: args.reps.unwrap_or(DEFAULT_REPS),
        boot: args.boot.unwrap_or(DEFAULT_BOOT),
        alpha: args.alpha.unwrap_or(DEFAULT_ALPHA),
        seed: args.seed.unwrap_or(DEFAULT_SEED),
        truncation: args.truncation,
        threads: args.threads,
    };
    let panel = match &args.panel {
        Some(path) => {
            let defaults = PanelColumns::default();
            let columns = PanelColumns {
                state: args.cluster_col.clone().unwrap_or(defaults.state),
                year: args.year_col.clone().unwrap_or(defaults.year),
                outcome: args.y_col.clone().unwrap_or(defaults.outcome),
            };
            Some(StatePanel::read_path(
                path,
                &columns,
                delimiter_byte(args.delimiter)?,
            )?)
        }
        None => None,
    };
    cfg.validate(panel.as_ref())?;

    let started = Instant::now();
    let out = run_grid(&cfg, panel.as_ref())?;
    let elapsed = started.elapsed().as_secs_f64();

    let io = |e: std::io::Error| Error::Schema(format!("cannot write output: {e}"));
    writeln!(stdout, "Rejection rates (alpha = {})", cfg.alpha).map_err(io)?;
    write!(stdout, "{}", render_table(&out, Table::RejectionRate)).map_err(io)?;
    writeln!(stdout).map_err(io)?;
    writeln!(stdout, "Median critical values").map_err(io)?;
    write!(stdout, "{}", render_table(&out, Table::CriticalValue)).map_err(io)?;
    let _ = writeln!(stderr, "wall time: {elapsed:.2} s");

    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        write_table(&out, Table::RejectionRate, &mut buf)?;
        write_file(path, &buf)?;
        let mut buf = Vec::new();
        write_table(&out, Table::CriticalValue, &mut buf)?;
        write_file(&cv_table_path(path), &buf)?;
    }
    if let Some(path) = &args.report {
        write_file(path, Report::new(&out).to_json()?.as_bytes())?;
    }
    Ok(())
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Rank { .. } | Error::DegenerateVariance | Error::IdentityFailure(_) => 3,
        Error::DesignIntegrity(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` and runs the requested command; returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let file = match cli.config.as_deref().map(read_config).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let result = match cli.command {
        Command::Infer(a) => a.merge(file).and_then(|a| cmd_infer(a, stdout, stderr)),
        Command::Mc(a) => a.merge(file).and_then(|a| cmd_mc(a, stdout, stderr)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
