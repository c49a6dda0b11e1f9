//! Command-line frontend for fitting, predicting and running experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or solver error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsmm::bench::{
    self, format_table, BenchOutcome, ExperimentReport, GridSpec, Protocol, ReportDocument,
    ReportFormat,
};
use lsmm::data::{detect_header, load_csv, load_features, CsvOptions, Dataset, LabelColumn, Manifest};
use lsmm::kernels::InfluenceVariant;
use lsmm::{FittedModel, InfluenceSpec, KernelSpec, ModelConfig, ModelKind, ModelParams, Scaling};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LSMM_OUT_DIR";
/// Environment variable naming the default dataset manifest.
pub const MANIFEST_ENV: &str = "LSMM_MANIFEST";

#[derive(Debug, Parser)]
#[command(name = "lsmm", version, about = "Least-squares generalization-memorization classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and write it as JSON.
    Fit(FitArgs),
    /// Score a CSV file with a saved model.
    Predict(PredictArgs),
    /// Grid-search LSSVM and the memory models over repeated stratified splits.
    Bench(BenchArgs),
    /// Flip a growing fraction of training labels and track accuracy.
    NoiseSweep(SweepArgs),
    /// Train on growing stratified subsamples of the training split.
    LearningCurve(SweepArgs),
    /// Sweep the influence-function parameter with gamma and lambda fixed.
    ParamSweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeaderMode {
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Lssvm,
    Wimm,
    Mimm,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lssvm => ModelKind::Lssvm,
            KindArg::Wimm => ModelKind::Wimm,
            KindArg::Mimm => ModelKind::Mimm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchKind {
    Wimm,
    Mimm,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScalingArg {
    Zscore,
    None,
}

impl From<ScalingArg> for Scaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::Zscore => Scaling::ZScore,
            ScalingArg::None => Scaling::None,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file: numeric feature columns plus one label column with exactly two distinct values
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Dataset name from the manifest (repeatable for bench)
    #[arg(long, value_name = "NAME", conflicts_with = "data")]
    dataset: Vec<String>,
    /// Dataset manifest [default: $LSMM_MANIFEST or data/manifest.json]
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Label column of --data: "last" or a 1-based column number
    #[arg(long, value_name = "last|N", default_value = "last", value_parser = parse_label_column)]
    label_column: LabelColumn,
    /// Raw label mapped to +1 [default: the lexicographically larger label]
    #[arg(long, value_name = "TEXT")]
    positive_label: Option<String>,
    /// Whether --data starts with a header row
    #[arg(long, value_enum, default_value = "auto")]
    header: HeaderMode,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model family
    #[arg(long, value_enum)]
    model: KindArg,
    /// Kernel: linear or rbf:<sigma> with sigma > 0
    #[arg(long, value_name = "SPEC", default_value = "rbf:1", value_parser = parse_kernel)]
    kernel: KernelSpec,
    /// Memory influence <gaussian|hinge|ball|inverse>:<param > 0>; required for wimm and mimm
    #[arg(long, value_name = "SPEC", value_parser = parse_influence)]
    influence: Option<InfluenceSpec>,
    /// Memory-cost weight gamma > 0
    #[arg(long, value_name = "REAL>0", default_value = "1", allow_hyphen_values = true, value_parser = parse_positive)]
    gamma: f64,
    /// Memory-impact weight lambda >= 0 (ignored by lssvm)
    #[arg(long, value_name = "REAL>=0", default_value = "0", allow_hyphen_values = true, value_parser = parse_non_negative)]
    lambda: f64,
    /// Feature scaling fitted on the training data
    #[arg(long, value_enum, default_value = "zscore")]
    scaling: ScalingArg,
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig, Failure> {
        let kind: ModelKind = self.model.into();
        if kind.uses_memory() && self.influence.is_none() {
            return Err(Failure::usage(format!("--influence is required for --model {kind}")));
        }
        Ok(ModelConfig {
            kind,
            kernel: self.kernel,
            influence: if kind.uses_memory() { self.influence } else { None },
            params: ModelParams::new(self.gamma, self.lambda).map_err(Failure::usage_from)?,
            scaling: self.scaling.into(),
        })
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file [default: $LSMM_OUT_DIR/<command>.<format>, LSMM_OUT_DIR defaulting to lsmm-out]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Zero every timing field so repeated runs give byte-identical files
    #[arg(long)]
    omit_timings: bool,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Number of repeated stratified splits (>= 1)
    #[arg(long, value_name = "N>=1", default_value = "5", value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Base seed; trial t uses seed + t
    #[arg(long, value_name = "U64", default_value = "0")]
    seed: u64,
    /// Worker threads for grid cells; 0 = all available, 1 = serial
    #[arg(long, value_name = "N", default_value = "0")]
    jobs: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file [default: $LSMM_OUT_DIR/model.json]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Model written by `fit`
    #[arg(long, value_name = "PATH")]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// --data holds only feature columns
    #[arg(long)]
    features_only: bool,
    /// Predictions CSV (index,score,label) [default: $LSMM_OUT_DIR/predictions.csv]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Memory models to compare against LSSVM
    #[arg(long, value_enum, default_value = "all")]
    model: BenchKind,
    /// Influence variants, comma-separated subset of gaussian,hinge,ball,inverse
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "gaussian,hinge,ball,inverse")]
    variants: Vec<InfluenceVariant>,
    /// Kernel family: linear or rbf (its parameter comes from --kernel-grid)
    #[arg(long, value_name = "SPEC", default_value = "rbf", value_parser = parse_kernel_family)]
    kernel: KernelSpec,
    /// Gamma values (> 0): comma list, start:step:stop or pow2:lo:hi
    #[arg(long, value_name = "VALUES", default_value = "pow2:-6:5", value_parser = parse_values)]
    gamma_grid: Values,
    /// Lambda values (>= 0)
    #[arg(long, value_name = "VALUES", default_value = "pow2:-6:5", value_parser = parse_values)]
    lambda_grid: Values,
    /// Kernel parameter values (> 0)
    #[arg(long, value_name = "VALUES", default_value = "pow2:-6:5", value_parser = parse_values)]
    kernel_grid: Values,
    /// Influence parameter values (> 0)
    #[arg(long, value_name = "VALUES", default_value = "pow2:-6:5", value_parser = parse_values)]
    influence_grid: Values,
    /// Training fraction of each stratified split, in (0, 1)
    #[arg(long, value_name = "(0,1)", default_value = "0.7", allow_hyphen_values = true, value_parser = parse_open_fraction)]
    train_fraction: f64,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Sweep points: comma list or start:step:stop [default: 0:0.05:0.5 noise,
    /// 0.1:0.1:1.0 learning curve, 0.1:0.1:2.0 influence parameter]
    #[arg(long, visible_alias = "values", value_name = "VALUES", value_parser = parse_values)]
    fractions: Option<Values>,
    /// Training fraction of each stratified split, in (0, 1)
    #[arg(long, value_name = "(0,1)", default_value = "0.8", allow_hyphen_values = true, value_parser = parse_open_fraction)]
    train_fraction: f64,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    output: OutputArgs,
}

/// Parsed list of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Values(pub Vec<f64>);

fn parse_values(s: &str) -> Result<Values, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("pow2:") {
        let (lo, hi) = rest
            .split_once(':')
            .ok_or_else(|| format!("expected pow2:lo:hi, got '{s}'"))?;
        let lo: i32 = lo.trim().parse().map_err(|_| format!("bad exponent '{lo}'"))?;
        let hi: i32 = hi.trim().parse().map_err(|_| format!("bad exponent '{hi}'"))?;
        if hi < lo {
            return Err(format!("empty power range '{s}'"));
        }
        return Ok(Values((lo..=hi).map(|i| 2f64.powi(i)).collect()));
    }
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| -> Result<f64, String> {
        p.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{p}' is not a finite number"))
    };
    match parts.as_slice() {
        [start, step, stop] => bench::linear_range(num(start)?, num(step)?, num(stop)?)
            .map(Values)
            .map_err(|e| e.to_string()),
        [_] => s.split(',').map(num).collect::<Result<_, _>>().map(Values),
        _ => Err(format!("expected a comma list or start:step:stop, got '{s}'")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("must be a finite real > 0, got '{s}'")),
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("must be a finite real >= 0, got '{s}'")),
    }
}

fn parse_open_fraction(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("must lie strictly between 0 and 1, got '{s}'")),
    }
}

fn parse_kernel(s: &str) -> Result<KernelSpec, String> {
    s.parse().map_err(|e: lsmm::Error| e.to_string())
}

fn parse_kernel_family(s: &str) -> Result<KernelSpec, String> {
    match s.trim() {
        "rbf" => Ok(KernelSpec::Rbf { sigma: 1.0 }),
        other => parse_kernel(other),
    }
}

fn parse_influence(s: &str) -> Result<InfluenceSpec, String> {
    s.parse().map_err(|e: lsmm::Error| e.to_string())
}

fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    match s.trim() {
        "last" => Ok(LabelColumn::Last),
        n => match n.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(LabelColumn::Index(i - 1)),
            _ => Err(format!("expected 'last' or a column number >= 1, got '{s}'")),
        },
    }
}

/// A failed command with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    fn usage_from(e: lsmm::Error) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<lsmm::Error> for Failure {
    fn from(e: lsmm::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            kind: e.code(),
            message: e.to_string(),
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
                _ => {
                    let text = e.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Bench(a) => run_bench(a),
        Command::NoiseSweep(a) => sweep(a, SweepKind::Noise),
        Command::LearningCurve(a) => sweep(a, SweepKind::Learning),
        Command::ParamSweep(a) => sweep(a, SweepKind::Param),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) if f.code == EXIT_USAGE => {
            eprintln!("error: {}", f.message);
            EXIT_USAGE
        }
        Err(f) => {
            let diag = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{diag}");
            f.code
        }
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("lsmm-out"))
}

fn output_path(explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf, Failure> {
    let path = explicit.unwrap_or_else(|| out_dir().join(default_name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure {
            code: EXIT_FAILURE,
            kind: "io",
            message: format!("{}: {e}", parent.display()),
        })?;
    }
    Ok(path)
}

fn manifest(args: &DataArgs) -> Result<Manifest, Failure> {
    let path = args
        .manifest
        .clone()
        .or_else(|| std::env::var_os(MANIFEST_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/manifest.json"));
    Ok(Manifest::load(path)?)
}

fn csv_options(args: &DataArgs, path: &Path) -> Result<CsvOptions, Failure> {
    let has_header = match args.header {
        HeaderMode::Yes => true,
        HeaderMode::No => false,
        HeaderMode::Auto => detect_header(path, args.label_column)?,
    };
    Ok(CsvOptions {
        has_header,
        label_column: args.label_column,
        positive_label: args.positive_label.clone(),
    })
}

fn load_from_path(args: &DataArgs, path: &Path) -> Result<Dataset, Failure> {
    let mut ds = load_csv(path, &csv_options(args, path)?)?;
    if let Some(stem) = path.file_stem() {
        ds.name = stem.to_string_lossy().into_owned();
    }
    Ok(ds)
}

/// Datasets named by the flags; with neither flag and `all_by_default`,
/// every manifest dataset whose file is present.
fn datasets(args: &DataArgs, all_by_default: bool) -> Result<Vec<Dataset>, Failure> {
    if let Some(path) = &args.data {
        return Ok(vec![load_from_path(args, path)?]);
    }
    if args.dataset.is_empty() && !all_by_default {
        return Err(Failure::usage("one of --data or --dataset is required"));
    }
    let m = manifest(args)?;
    let names: Vec<String> = if args.dataset.is_empty() {
        m.available().map(|e| e.name.clone()).collect()
    } else {
        args.dataset.clone()
    };
    if names.is_empty() {
        return Err(Failure::usage("the manifest lists no dataset with a file present"));
    }
    names
        .iter()
        .map(|n| m.load_dataset(n).map_err(Failure::from))
        .collect()
}

fn single_dataset(args: &DataArgs) -> Result<Dataset, Failure> {
    let mut all = datasets(args, false)?;
    if all.len() != 1 {
        return Err(Failure::usage("this command takes exactly one --data or --dataset"));
    }
    Ok(all.remove(0))
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let config = a.model.config()?;
    let ds = single_dataset(&a.data)?;
    let model = config.fit(&ds.x, &ds.y)?;
    let pred = model.predict(&ds.x)?;
    let correct = pred.iter().zip(&ds.y).filter(|(p, y)| p == y).count();
    let path = output_path(a.out, "model.json")?;
    model.save(&path)?;
    let residual = model
        .training_residuals()
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    println!(
        "fitted {} on {} (m={}, n={}): train accuracy {:.2}%, max |residual| {:.3e}, wrote {}",
        config.kind,
        ds.name,
        ds.len(),
        ds.n_features(),
        100.0 * correct as f64 / ds.len() as f64,
        residual,
        path.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), Failure> {
    let model = FittedModel::load(&a.model_file)?;
    let (x, labels) = match (&a.data.data, a.features_only) {
        (Some(path), true) => {
            let header = match a.data.header {
                HeaderMode::Yes => true,
                HeaderMode::No => false,
                HeaderMode::Auto => detect_header(path, LabelColumn::Index(usize::MAX))?,
            };
            (load_features(path, header)?, None)
        }
        (_, true) => return Err(Failure::usage("--features-only needs --data")),
        (_, false) => {
            let ds = single_dataset(&a.data)?;
            (ds.x, Some(ds.y))
        }
    };
    let scores = model.decision_raw(&x)?;
    let path = output_path(a.out, "predictions.csv")?;
    let mut body = String::from("index,score,label\n");
    for (i, s) in scores.iter().enumerate() {
        body.push_str(&format!("{i},{s:e},{}\n", lsmm::models::sign_label(*s)));
    }
    std::fs::write(&path, body).map_err(|e| Failure {
        code: EXIT_FAILURE,
        kind: "io",
        message: format!("{}: {e}", path.display()),
    })?;
    match labels {
        Some(y) => {
            let correct = scores
                .iter()
                .zip(&y)
                .filter(|(s, l)| lsmm::models::sign_label(**s) == **l)
                .count();
            println!(
                "scored {} rows: accuracy {:.2}%, wrote {}",
                y.len(),
                100.0 * correct as f64 / y.len() as f64,
                path.display()
            );
        }
        None => println!("scored {} rows, wrote {}", scores.len(), path.display()),
    }
    Ok(())
}

fn protocol(p: &ProtocolArgs, train_fraction: f64) -> Protocol {
    Protocol {
        train_fraction,
        trials: p.trials as usize,
        base_seed: p.seed,
        jobs: p.jobs,
    }
}

fn write_document(mut doc: ReportDocument, output: OutputArgs, command: &str) -> Result<PathBuf, Failure> {
    if output.omit_timings {
        doc.strip_timings();
    }
    let ext = match output.format {
        FormatArg::Json => "json",
        FormatArg::Csv => "csv",
    };
    let path = output_path(output.out, &format!("{command}.{ext}"))?;
    bench::write_report(&doc, &path, output.format.into())?;
    Ok(path)
}

fn check_grid(name: &str, values: &[f64], allow_zero: bool) -> Result<(), Failure> {
    match values.iter().find(|v| **v < 0.0 || (!allow_zero && **v == 0.0)) {
        Some(v) => Err(Failure::usage(format!("--{name} value {v} out of range"))),
        None => Ok(()),
    }
}

fn run_bench(a: BenchArgs) -> Result<(), Failure> {
    check_grid("gamma-grid", &a.gamma_grid.0, false)?;
    check_grid("lambda-grid", &a.lambda_grid.0, true)?;
    check_grid("kernel-grid", &a.kernel_grid.0, false)?;
    check_grid("influence-grid", &a.influence_grid.0, false)?;
    if a.variants.is_empty() {
        return Err(Failure::usage("--variants must name at least one influence"));
    }
    let grid = GridSpec {
        gamma_grid: a.gamma_grid.0,
        lambda_grid: a.lambda_grid.0,
        kernel_param_grid: a.kernel_grid.0,
        influence_param_grid: a.influence_grid.0,
    };
    let kinds = match a.model {
        BenchKind::Wimm => vec![ModelKind::Wimm],
        BenchKind::Mimm => vec![ModelKind::Mimm],
        BenchKind::All => vec![ModelKind::Wimm, ModelKind::Mimm],
    };
    let protocol = protocol(&a.protocol, a.train_fraction);
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let mut rows = Vec::new();
    for ds in datasets(&a.data, true)? {
        let BenchOutcome { reports: r, rows: t } =
            bench::benchmark(&ds, &kinds, &a.variants, a.kernel, &grid, &protocol)?;
        reports.extend(r);
        rows.extend(t);
    }
    for kind in &kinds {
        let subset: Vec<_> = rows.iter().filter(|r| r.model == *kind).cloned().collect();
        println!("{}", format_table(&subset));
    }
    let mut doc = ReportDocument::new("bench", reports);
    doc.table = rows;
    let path = write_document(doc, a.output, "bench")?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum SweepKind {
    Noise,
    Learning,
    Param,
}

fn sweep(a: SweepArgs, kind: SweepKind) -> Result<(), Failure> {
    let config = a.model.config()?;
    let (command, default) = match kind {
        SweepKind::Noise => ("noise-sweep", bench::default_noise_fractions()),
        SweepKind::Learning => ("learning-curve", bench::default_learning_fractions()),
        SweepKind::Param => ("param-sweep", bench::default_sensitivity_values()),
    };
    let values = a.fractions.map(|v| v.0).unwrap_or(default);
    let in_range = |v: &f64| match kind {
        SweepKind::Noise => (0.0..=1.0).contains(v),
        SweepKind::Learning => *v > 0.0 && *v <= 1.0,
        SweepKind::Param => *v > 0.0,
    };
    if let Some(v) = values.iter().find(|v| !in_range(v)) {
        return Err(Failure::usage(format!("--fractions value {v} out of range")));
    }
    if matches!(kind, SweepKind::Param) && !config.kind.uses_memory() {
        return Err(Failure::usage("param-sweep needs --model wimm or mimm"));
    }
    let ds = single_dataset(&a.data)?;
    let protocol = protocol(&a.protocol, a.train_fraction);
    let reports = match kind {
        SweepKind::Noise => bench::noise_sweep(&ds, &config, &values, &protocol)?,
        SweepKind::Learning => bench::learning_curve(&ds, &config, &values, &protocol)?,
        SweepKind::Param => bench::param_sensitivity(&ds, &config, &values, &protocol)?,
    };
    for r in &reports {
        let s = &r.summary;
        println!(
            "{} {}={} train {:.2}±{:.2} test {:.2}±{:.2}{}",
            r.model,
            r.protocol.sweep_axis.as_deref().unwrap_or("value"),
            r.protocol.sweep_value.unwrap_or(0.0),
            100.0 * s.train_mean,
            100.0 * s.train_std,
            100.0 * s.test_mean,
            100.0 * s.test_std,
            match (s.singular_trials, s.failed_trials) {
                (0, 0) => String::new(),
                (k, f) => format!(" ({k} singular, {f} failed)"),
            }
        );
    }
    let path = write_document(ReportDocument::new(command, reports), a.output, command)?;
    println!("wrote {}", path.display());
    Ok(())
}
