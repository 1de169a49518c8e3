//! Command line surface: configuration, CSV ingestion and the commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_igram_distribution, BootstrapPlan, DEFAULT_REPS, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::extremal::{
    default_max_lag, indicators, sample_extremogram, threshold_from_p0, CenteringMode, ExtremeSet, IndicatorSeries, ThresholdSpec,
};
use crate::igram::{
    centering_monte_carlo, eta_null_center, fourier_grid, igram, statistic, CenteringCurve, CenteringProvenance, IgramVariant,
    MonteCarloOptions, QuantileSource, Rate, TestKind,
};
use crate::limits::{
    bridge_sup_quantile, cvm_limit_draws, eta_null_covariance, simulate_bridge_sup, simulate_limit_paths, CvmCoefficients, CvmMethod,
    LimitProcessSpec, QuantileRow, BRIDGE_TRUNCATION, GENERAL_TRUNCATION, LIMIT_REPS,
};
use crate::models::{simulate, simulate_replicate, ModelSpec, Origin, Series};
use crate::scalar::order_statistic;
use crate::spectral::{periodogram_fourier, WeightFunction};

pub const SEED_ENV: &str = "XGRAM_SEED";
const DEFAULT_P0: f64 = 0.05;
const DEFAULT_LEVEL: f64 = 0.05;
const DEFAULT_CENTERING_REPS: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "xgram", version, about = "Extremogram and integrated periodogram tools for heavy-tailed time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Simulate a benchmark model and write the series.
    Simulate,
    /// Sample extremogram by lag.
    Extremogram,
    /// Extremal periodogram at the Fourier frequencies.
    Periodogram,
    /// Integrated periodogram and its centering.
    Igram,
    /// Grenander-Rosenblatt goodness-of-fit test.
    Grtest,
    /// Cramer-von Mises goodness-of-fit test.
    Cvmtest,
    /// Stationary bootstrap distribution of the test statistic.
    Bootstrap,
    /// Quantile table of the limit laws.
    Limits,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Extremogram => "extremogram",
            Command::Periodogram => "periodogram",
            Command::Igram => "igram",
            Command::Grtest => "grtest",
            Command::Cvmtest => "cvmtest",
            Command::Bootstrap => "bootstrap",
            Command::Limits => "limits",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with configuration fields; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// One-column CSV with the observations.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Data model: preset name, inline JSON or path to a JSON file.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Sample length for simulated data.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Exceedance probability defining the threshold.
    #[arg(long, global = true)]
    pub p0: Option<f64>,
    /// Extreme set: upper, lower, abs or interval:LO:HI.
    #[arg(long, global = true)]
    pub set: Option<String>,
    /// Indicator centering: none, empirical, theoretical or theoretical:P.
    #[arg(long, global = true)]
    pub centering: Option<String>,
    /// Weight function: one, or table:PATH with columns lambda,g.
    #[arg(long, global = true)]
    pub g: Option<String>,
    /// Uniform evaluation grid with this many intervals on [0, pi]
    /// instead of the Fourier grid.
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    /// Integrated periodogram variant: discretized or continuous.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Largest extremogram lag.
    #[arg(long, global = true)]
    pub max_lag: Option<usize>,
    /// Dependence range of the eta-dependent null.
    #[arg(long, global = true)]
    pub eta: Option<usize>,
    /// Null model for Monte Carlo centering (general null).
    #[arg(long, global = true)]
    pub null_model: Option<String>,
    /// Centre the curve by itself (pipeline smoke test).
    #[arg(long, global = true)]
    pub self_center: bool,
    /// Critical value sources: bridge, limit, bootstrap, null-simulation.
    #[arg(long, global = true, value_delimiter = ',')]
    pub sources: Option<Vec<String>>,
    /// Statistic for the bootstrap command: gr or cvm.
    #[arg(long, global = true)]
    pub statistic: Option<String>,
    /// Geometric block parameter of the stationary bootstrap.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Bootstrap replicates (or limit-law draws for `limits`).
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Monte Carlo replicates for centering and null simulation.
    #[arg(long, global = true)]
    pub centering_reps: Option<usize>,
    /// Test level.
    #[arg(long, global = true)]
    pub level: Option<f64>,
    /// Seed; falls back to the XGRAM_SEED environment variable, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scale of the bridge for `limits`.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Series truncation H of the limit processes.
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    /// Probabilities for the `limits` table.
    #[arg(long, global = true, value_delimiter = ',')]
    pub probabilities: Option<Vec<f64>>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Resolved run configuration. This is what gets embedded in every output;
/// feeding it back through `--config` reproduces the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centering: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_center: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centering_reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    /// Where outputs go; not part of the computation, so never embedded.
    #[serde(skip_serializing, default)]
    pub out: Option<PathBuf>,
}

/// Named benchmark models.
pub fn model_preset(name: &str) -> Option<ModelSpec> {
    Some(match name {
        "iid-t3" => ModelSpec::iid_t(3.0).with_tail_index(3.0),
        "iid-t4" => ModelSpec::iid_t(4.0).with_tail_index(4.0),
        "arma11" => ModelSpec::arma11(0.8, 0.1, 3.0).with_tail_index(3.0),
        "garch11" => ModelSpec::garch11(0.1, 0.1, 0.84, 4.0).with_tail_index(3.49),
        "garch11-null" => ModelSpec::garch11(6.23e-3, 0.1, 0.8, 4.0).with_tail_index(3.68),
        "sv" => ModelSpec::sv_lognormal(0.9, 3.6).with_tail_index(3.6),
        _ => return None,
    })
}

/// Preset name, inline JSON object, or path to a JSON file.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let spec = if let Some(spec) = model_preset(text) {
        spec
    } else if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("model JSON: {e}")))?
    } else if Path::new(text).is_file() {
        serde_json::from_str(&fs::read_to_string(text)?).map_err(|e| Error::InvalidParameter(format!("model file {text}: {e}")))?
    } else {
        return Err(Error::InvalidParameter(format!(
            "unknown model '{text}' (presets: iid-t3, iid-t4, arma11, garch11, garch11-null, sv)"
        )));
    };
    spec.validate()?;
    Ok(spec)
}

fn numeric_cell(text: &str, row: u64) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Csv {
        row,
        message: format!("'{text}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            row,
            message: format!("'{text}' is not finite"),
        });
    }
    Ok(v)
}

/// Reads rows of `width` numeric columns. Lines starting with `#` are
/// skipped; a non-numeric first row is taken as a header.
fn read_numeric_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Csv {
                row: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(Error::Csv {
                row,
                message: format!("expected {width} column(s), found {}", record.len()),
            });
        }
        let parsed: Result<Vec<f64>> = record.iter().map(|c| numeric_cell(c, row)).collect();
        match parsed {
            Ok(values) => rows.push(values),
            Err(_) if first && record.iter().any(|c| c.parse::<f64>().is_err()) => {}
            Err(e) => return Err(e),
        }
        first = false;
    }
    Ok(rows)
}

/// Reads a one-column CSV into a [`Series`], preserving row order.
pub fn ingest_csv(path: &Path) -> Result<Series> {
    let values: Vec<f64> = read_numeric_rows(path, 1)?.into_iter().map(|r| r[0]).collect();
    if values.len() < 2 {
        return Err(Error::SeriesTooShort { min: 2, got: values.len() });
    }
    Series::new(values, Origin::Ingested(path.to_path_buf()))
}

fn parse_weight(spec: &str) -> Result<WeightFunction<f64>> {
    if spec == "one" {
        return Ok(WeightFunction::One);
    }
    match spec.strip_prefix("table:") {
        Some(path) => {
            let rows = read_numeric_rows(Path::new(path), 2)?;
            let (nodes, values) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
            WeightFunction::tabulated(nodes, values, 1.0)
        }
        None => Err(Error::InvalidParameter(format!("unknown weight function '{spec}' (use one or table:PATH)"))),
    }
}

fn parse_variant(text: &str) -> Result<IgramVariant> {
    match text {
        "discretized" => Ok(IgramVariant::Discretized),
        "continuous" => Ok(IgramVariant::Continuous),
        _ => Err(Error::InvalidParameter(format!("unknown variant '{text}'"))),
    }
}

fn parse_kind(text: &str) -> Result<TestKind> {
    match text {
        "gr" => Ok(TestKind::GR),
        "cvm" => Ok(TestKind::CvM),
        _ => Err(Error::InvalidParameter(format!("unknown statistic '{text}' (use gr or cvm)"))),
    }
}

fn parse_source(text: &str) -> Result<QuantileSource> {
    match text {
        "bridge" => Ok(QuantileSource::BridgeClosedForm),
        "limit" => Ok(QuantileSource::LimitSeries),
        "bootstrap" => Ok(QuantileSource::Bootstrap),
        "null-simulation" => Ok(QuantileSource::NullSimulation),
        _ => Err(Error::InvalidParameter(format!("unknown quantile source '{text}'"))),
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn uses_data(command: Command) -> bool {
    command != Command::Limits
}

/// Merges the config file, the flags, the seed fallback and the defaults of
/// `command` into one validated configuration.
pub fn resolve(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &flags.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(c) = cfg.command {
        if c != command {
            return Err(Error::InvalidParameter(format!(
                "config is for '{}', not '{}'",
                c.name(),
                command.name()
            )));
        }
    }
    cfg.command = Some(command);

    macro_rules! overlay {
        ($($field:ident),*) => { $( if flags.$field.is_some() { cfg.$field = flags.$field.clone(); } )* };
    }
    overlay!(input, n, p0, set, centering, g, grid_size, variant, max_lag, eta, sources, statistic, theta, reps, centering_reps, level, seed, sigma, truncation, probabilities, out);
    if let Some(m) = &flags.model {
        cfg.model = Some(parse_model(m)?);
    }
    if let Some(m) = &flags.null_model {
        cfg.null_model = Some(parse_model(m)?);
    }
    if flags.self_center {
        cfg.self_center = Some(true);
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(seed_from_env()?.unwrap_or(0));
    }
    if let Some(level) = cfg.level {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
        }
    }

    if uses_data(command) {
        match (&cfg.input, &cfg.model) {
            (Some(_), Some(_)) => return Err(Error::InvalidParameter("give either --input or --model, not both".into())),
            (None, None) => return Err(Error::InvalidParameter("give --input or --model".into())),
            (None, Some(_)) if cfg.n.is_none() => return Err(Error::InvalidParameter("--model needs --n".into())),
            _ => {}
        }
        if command == Command::Simulate && cfg.model.is_none() {
            return Err(Error::InvalidParameter("simulate needs --model".into()));
        }
    }
    if command != Command::Simulate && uses_data(command) {
        cfg.p0.get_or_insert(DEFAULT_P0);
        cfg.set.get_or_insert_with(|| "upper".into());
        cfg.centering.get_or_insert_with(|| "empirical".into());
    }
    match command {
        Command::Igram | Command::Grtest | Command::Cvmtest | Command::Bootstrap => {
            cfg.g.get_or_insert_with(|| "one".into());
        }
        _ => {}
    }
    match command {
        Command::Igram | Command::Grtest | Command::Cvmtest => {
            cfg.variant.get_or_insert_with(|| "discretized".into());
            if cfg.null_model.is_some() {
                cfg.centering_reps.get_or_insert(DEFAULT_CENTERING_REPS);
            } else if cfg.self_center != Some(true) {
                cfg.eta.get_or_insert(0);
            }
        }
        _ => {}
    }
    if matches!(command, Command::Grtest | Command::Cvmtest) {
        cfg.level.get_or_insert(DEFAULT_LEVEL);
        if cfg.sources.is_none() {
            let defaults: Vec<&str> = if cfg.null_model.is_some() {
                vec!["null-simulation", "bootstrap"]
            } else if cfg.eta.unwrap_or(0) == 0 {
                vec!["bridge"]
            } else {
                vec!["limit"]
            };
            cfg.sources = Some(defaults.into_iter().map(String::from).collect());
        }
        let sources = cfg.sources.clone().unwrap_or_default();
        for s in &sources {
            parse_source(s)?;
        }
        if sources.iter().any(|s| s == "bootstrap" || s == "null-simulation") && cfg.null_model.is_none() {
            return Err(Error::InvalidParameter("bootstrap and null-simulation sources need --null-model".into()));
        }
        if sources.iter().any(|s| s == "bridge" || s == "limit") && cfg.null_model.is_some() {
            return Err(Error::InvalidParameter("bridge and limit sources apply to the eta-dependent null only".into()));
        }
        if sources.iter().any(|s| s == "bridge") && cfg.eta.unwrap_or(0) != 0 {
            return Err(Error::InvalidParameter("the bridge source needs eta = 0".into()));
        }
        if sources.iter().any(|s| s == "bootstrap") {
            cfg.theta.get_or_insert(DEFAULT_THETA);
            cfg.reps.get_or_insert(DEFAULT_REPS);
        }
        if sources.iter().any(|s| s == "limit") {
            cfg.centering_reps.get_or_insert(DEFAULT_CENTERING_REPS);
        }
        if sources.iter().any(|s| s == "bridge") && command == Command::Cvmtest {
            cfg.truncation.get_or_insert(BRIDGE_TRUNCATION);
        }
    }
    if command == Command::Bootstrap {
        cfg.theta.get_or_insert(DEFAULT_THETA);
        cfg.reps.get_or_insert(DEFAULT_REPS);
        cfg.level.get_or_insert(DEFAULT_LEVEL);
        cfg.statistic.get_or_insert_with(|| "gr".into());
    }
    if command == Command::Limits {
        cfg.sigma.get_or_insert(1.0);
        cfg.truncation.get_or_insert(BRIDGE_TRUNCATION);
        cfg.reps.get_or_insert(LIMIT_REPS);
        cfg.probabilities.get_or_insert_with(|| vec![0.9, 0.95, 0.99]);
    }
    if command == Command::Extremogram && cfg.max_lag.is_none() {
        let n = match (&cfg.input, cfg.n) {
            (Some(path), _) => ingest_csv(path)?.len(),
            (None, Some(n)) => n,
            _ => unreachable!("data source checked above"),
        };
        cfg.max_lag = Some(default_max_lag(n));
    }
    Ok(cfg)
}

/// One file produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn config_json(cfg: &RunConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

fn csv_artifact(name: &str, cfg: &RunConfig, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_write_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_write_error)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8 csv");
    Ok(Artifact {
        name: name.into(),
        contents: format!("# xgram-config: {}\n{body}", config_json(cfg)),
    })
}

fn csv_write_error(e: csv::Error) -> Error {
    Error::Csv {
        row: 0,
        message: e.to_string(),
    }
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact> {
    Ok(Artifact {
        name: name.into(),
        contents: serde_json::to_string_pretty(value)? + "\n",
    })
}

struct Prepared {
    series: Series,
    set: ExtremeSet,
    p0: f64,
    centering: CenteringMode,
}

fn seed_of(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let series = match (&cfg.input, &cfg.model) {
        (Some(path), _) => ingest_csv(path)?,
        (None, Some(model)) => simulate(model, cfg.n.unwrap_or(0), seed_of(cfg))?,
        (None, None) => return Err(Error::InvalidParameter("no data source".into())),
    };
    let p0 = cfg.p0.unwrap_or(DEFAULT_P0);
    let set = ExtremeSet::from_str(cfg.set.as_deref().unwrap_or("upper"))?;
    let centering = match cfg.centering.as_deref().unwrap_or("empirical") {
        "theoretical" => CenteringMode::Theoretical(p0),
        other => CenteringMode::from_str(other)?,
    };
    Ok(Prepared { series, set, p0, centering })
}

fn grid_for(cfg: &RunConfig, n: usize) -> Result<Vec<f64>> {
    match cfg.grid_size {
        None => Ok(fourier_grid(n)),
        Some(0) => Err(Error::InvalidParameter("grid size must be positive".into())),
        Some(k) => Ok((0..=k).map(|i| std::f64::consts::PI * i as f64 / k as f64).collect()),
    }
}

/// Critical value from one source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValue {
    pub source: QuantileSource,
    pub value: f64,
    pub reject: bool,
    /// Rate of the statistics behind this critical value.
    pub rate: Rate,
    /// Centering of the simulated statistics.
    pub centered_at: String,
}

/// JSON report of `grtest` and `cvmtest`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub config: RunConfig,
    pub test: TestKind,
    pub statistic: f64,
    pub rate: Rate,
    pub level: f64,
    pub n: usize,
    pub m: f64,
    pub p0: f64,
    pub threshold: f64,
    pub grid_size: usize,
    pub variant: IgramVariant,
    pub centering: CenteringProvenance,
    pub critical_values: Vec<CriticalValue>,
    pub critical_value: Option<f64>,
    pub quantile_source: Option<QuantileSource>,
    pub reject: bool,
    pub seed: u64,
}

struct Analysis {
    ind: IndicatorSeries,
    threshold: ThresholdSpec,
    grid: Vec<f64>,
    g: WeightFunction<f64>,
    variant: IgramVariant,
    curve: crate::igram::IgramCurve<f64>,
    center: CenteringCurve<f64>,
    rate: Rate,
}

fn analyse(cfg: &RunConfig) -> Result<(Prepared, Analysis)> {
    let prep = prepare(cfg)?;
    let n = prep.series.len();
    let grid = grid_for(cfg, n)?;
    let g = parse_weight(cfg.g.as_deref().unwrap_or("one"))?;
    let variant = parse_variant(cfg.variant.as_deref().unwrap_or("discretized"))?;
    let seed = seed_of(cfg);

    // The general null takes its threshold from the null model.
    let (threshold, mc_center) = match &cfg.null_model {
        Some(null) if cfg.self_center != Some(true) => {
            let opts = MonteCarloOptions {
                variant,
                centering: prep.centering,
            };
            let reps = cfg.centering_reps.unwrap_or(DEFAULT_CENTERING_REPS);
            let c = centering_monte_carlo(null, n, prep.p0, prep.set, &g, &grid, reps, seed, opts)?;
            (ThresholdSpec::new(prep.p0, c.threshold.expect("simulated threshold"))?, Some(c))
        }
        _ => (threshold_from_p0(&prep.series, prep.set, prep.p0)?, None),
    };
    let ind = indicators(&prep.series, &threshold, prep.set, prep.centering)?;
    let curve = igram(&ind, &g, &grid, variant)?;
    let (center, rate) = if cfg.self_center == Some(true) {
        (CenteringCurve::self_centered(&curve), Rate::SqrtN)
    } else if let Some(c) = mc_center {
        (c, Rate::SqrtNoverM)
    } else {
        let eta = cfg.eta.unwrap_or(0);
        if eta >= n {
            return Err(Error::InvalidParameter(format!("eta = {eta} must be below n = {n}")));
        }
        let ext = sample_extremogram::<f64>(&ind, eta)?;
        (eta_null_center(&ext, &g, &grid, eta, variant)?, Rate::SqrtN)
    };
    Ok((
        prep,
        Analysis {
            ind,
            threshold,
            grid,
            g,
            variant,
            curve,
            center,
            rate,
        },
    ))
}

fn limit_statistic(kind: TestKind, grid: &[f64], path: &[f64]) -> f64 {
    match kind {
        TestKind::GR => crate::igram::sup_abs(path),
        TestKind::CvM => {
            let sq: Vec<f64> = path.iter().map(|v| v * v).collect();
            crate::igram::trapezoid(grid, &sq)
        }
    }
}

/// Runs `grtest` (`kind = GR`) or `cvmtest` (`kind = CvM`).
pub fn run_test(cfg: &RunConfig, kind: TestKind) -> Result<TestReport> {
    let (prep, a) = analyse(cfg)?;
    let n = prep.series.len();
    let seed = seed_of(cfg);
    let level = cfg.level.unwrap_or(DEFAULT_LEVEL);
    let p = 1.0 - level;
    let stat = statistic(kind, &a.curve, &a.center, a.rate)?;
    let gamma0 = sample_extremogram::<f64>(&a.ind, 0)?.gamma0();

    let mut critical_values = Vec::new();
    for name in cfg.sources.clone().unwrap_or_default() {
        let source = parse_source(&name)?;
        let (value, rate, centered_at) = match source {
            QuantileSource::BridgeClosedForm => {
                let v = match kind {
                    TestKind::GR => bridge_sup_quantile(p, gamma0)?,
                    TestKind::CvM => {
                        let draws = cvm_limit_draws(
                            gamma0,
                            CvmMethod::ChiSqSeriesMC(CvmCoefficients::Derived),
                            cfg.truncation.unwrap_or(BRIDGE_TRUNCATION),
                            LIMIT_REPS,
                            seed,
                        )?;
                        order_statistic(&draws, p).expect("draws")
                    }
                };
                (v, Rate::SqrtN, "eta-null partial sum".to_string())
            }
            QuantileSource::LimitSeries => {
                let eta = cfg.eta.unwrap_or(0);
                let h = GENERAL_TRUNCATION.min(n.saturating_sub(2 * eta + 1)).max(1);
                let cov = eta_null_covariance(&a.ind, eta, h)?;
                let spec = LimitProcessSpec::eta_bar(eta, cov, a.g.clone(), a.grid.clone());
                let reps = cfg.centering_reps.unwrap_or(DEFAULT_CENTERING_REPS);
                let draws: Vec<f64> = simulate_limit_paths(&spec, reps, seed)?
                    .iter()
                    .map(|path| limit_statistic(kind, &a.grid, path))
                    .collect();
                (order_statistic(&draws, p).expect("draws"), Rate::SqrtN, "eta-null partial sum".to_string())
            }
            QuantileSource::Bootstrap => {
                let plan = BootstrapPlan {
                    theta: cfg.theta.unwrap_or(DEFAULT_THETA),
                    reps: cfg.reps.unwrap_or(DEFAULT_REPS),
                    seed,
                    n,
                };
                let ind = a.ind.with_centering(CenteringMode::Empirical);
                let dist = bootstrap_igram_distribution(&ind, &a.g, Some(&a.grid), &plan, kind)?;
                (dist.quantile(p)?, Rate::SqrtNoverM, "E* J*".to_string())
            }
            QuantileSource::NullSimulation => {
                let null = cfg.null_model.as_ref().expect("checked when resolving");
                let reps = cfg.centering_reps.unwrap_or(DEFAULT_CENTERING_REPS);
                let draws = null_simulation(null, n, reps, seed, kind, &prep, &a)?;
                (order_statistic(&draws, p).expect("draws"), a.rate, "Monte Carlo E J".to_string())
            }
        };
        critical_values.push(CriticalValue {
            source,
            value,
            reject: stat.statistic > value,
            rate,
            centered_at,
        });
    }
    let first = critical_values.first();
    Ok(TestReport {
        config: cfg.clone(),
        test: kind,
        statistic: stat.statistic,
        rate: a.rate,
        level,
        n,
        m: a.ind.m(),
        p0: prep.p0,
        threshold: a.threshold.a_m,
        grid_size: a.grid.len(),
        variant: a.variant,
        centering: a.center.provenance.clone(),
        critical_value: first.map(|c| c.value),
        quantile_source: first.map(|c| c.source),
        reject: first.is_some_and(|c| c.reject),
        critical_values,
        seed,
    })
}

/// The statistic recomputed on fresh samples from the null model, on
/// replicate streams disjoint from those of the centering.
fn null_simulation(null: &ModelSpec, n: usize, reps: usize, seed: u64, kind: TestKind, prep: &Prepared, a: &Analysis) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let offset = reps as u64;
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = simulate_replicate(null, n, seed, offset + r)?;
            let ind = indicators(&x, &a.threshold, prep.set, prep.centering)?;
            let curve = igram(&ind, &a.g, &a.grid, a.variant)?;
            Ok(statistic(kind, &curve, &a.center, a.rate)?.statistic)
        })
        .collect()
}

/// Bootstrap summary written next to the replicate CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub config: RunConfig,
    pub statistic: TestKind,
    pub rate: Rate,
    pub centered_at: String,
    pub p: f64,
    pub quantile: f64,
    pub theta: f64,
    pub reps: usize,
    pub n: usize,
    pub grid_size: usize,
    pub seed: u64,
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Runs one command and returns its artifacts.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<Artifact>> {
    match command {
        Command::Simulate => {
            let prep = prepare(cfg)?;
            let rows = prep.series.values().iter().map(|&v| vec![fmt(v)]).collect();
            Ok(vec![csv_artifact("series.csv", cfg, &["value"], rows)?])
        }
        Command::Extremogram => {
            let prep = prepare(cfg)?;
            let thr = threshold_from_p0(&prep.series, prep.set, prep.p0)?;
            let ind = indicators(&prep.series, &thr, prep.set, prep.centering)?;
            let max_lag = cfg.max_lag.unwrap_or_else(|| default_max_lag(ind.len()));
            let ext = sample_extremogram::<f64>(&ind, max_lag)?;
            let rho = ext.rho()?;
            let rows = ext.gamma.iter().zip(rho).enumerate().map(|(h, (g, r))| vec![h.to_string(), fmt(*g), fmt(*r)]).collect();
            Ok(vec![csv_artifact("extremogram.csv", cfg, &["lag", "gamma", "rho"], rows)?])
        }
        Command::Periodogram => {
            let prep = prepare(cfg)?;
            let thr = threshold_from_p0(&prep.series, prep.set, prep.p0)?;
            let ind = indicators(&prep.series, &thr, prep.set, prep.centering)?;
            let per = periodogram_fourier::<f64>(&ind)?;
            let rows = per.frequencies.iter().zip(&per.values).map(|(f, v)| vec![fmt(*f), fmt(*v)]).collect();
            Ok(vec![csv_artifact("periodogram.csv", cfg, &["frequency", "value"], rows)?])
        }
        Command::Igram => {
            let (_, a) = analyse(cfg)?;
            let rows = (0..a.grid.len())
                .map(|k| vec![fmt(a.grid[k]), fmt(a.curve.values[k]), fmt(a.center.values[k])])
                .collect();
            Ok(vec![csv_artifact("igram.csv", cfg, &["x", "J", "EJ"], rows)?])
        }
        Command::Grtest => Ok(vec![json_artifact("grtest.json", &run_test(cfg, TestKind::GR)?)?]),
        Command::Cvmtest => Ok(vec![json_artifact("cvmtest.json", &run_test(cfg, TestKind::CvM)?)?]),
        Command::Bootstrap => {
            let prep = prepare(cfg)?;
            let kind = parse_kind(cfg.statistic.as_deref().unwrap_or("gr"))?;
            let thr = threshold_from_p0(&prep.series, prep.set, prep.p0)?;
            let ind = indicators(&prep.series, &thr, prep.set, CenteringMode::Empirical)?;
            let n = ind.len();
            let grid = grid_for(cfg, n)?;
            let g = parse_weight(cfg.g.as_deref().unwrap_or("one"))?;
            let plan = BootstrapPlan {
                theta: cfg.theta.unwrap_or(DEFAULT_THETA),
                reps: cfg.reps.unwrap_or(DEFAULT_REPS),
                seed: seed_of(cfg),
                n,
            };
            let dist = bootstrap_igram_distribution(&ind, &g, Some(&grid), &plan, kind)?;
            let p = 1.0 - cfg.level.unwrap_or(DEFAULT_LEVEL);
            let report = BootstrapReport {
                config: cfg.clone(),
                statistic: kind,
                rate: Rate::SqrtNoverM,
                centered_at: "E* J*".into(),
                p,
                quantile: dist.quantile(p)?,
                theta: plan.theta,
                reps: plan.reps,
                n,
                grid_size: grid.len(),
                seed: plan.seed,
            };
            let rows = dist.statistics.iter().enumerate().map(|(r, s)| vec![r.to_string(), fmt(*s)]).collect();
            Ok(vec![
                json_artifact("bootstrap.json", &report)?,
                csv_artifact("bootstrap.csv", cfg, &["replicate", "statistic"], rows)?,
            ])
        }
        Command::Limits => {
            let sigma = cfg.sigma.unwrap_or(1.0);
            let h = cfg.truncation.unwrap_or(BRIDGE_TRUNCATION);
            let reps = cfg.reps.unwrap_or(LIMIT_REPS);
            let seed = seed_of(cfg);
            let probs = cfg.probabilities.clone().unwrap_or_default();
            if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(Error::InvalidParameter("probabilities must lie in (0, 1)".into()));
            }
            let mut table = Vec::new();
            let mut push = |method: &str, quantile: f64, p: f64, h: usize, reps: usize| {
                table.push(QuantileRow {
                    p,
                    quantile,
                    method: method.into(),
                    truncation: h,
                    reps,
                    seed,
                });
            };
            for &p in &probs {
                push("gr-closed-form", bridge_sup_quantile(p, sigma)?, p, 0, 0);
            }
            let sups = simulate_bridge_sup(sigma, h, reps, seed)?;
            for &p in &probs {
                push("gr-series-mc", order_statistic(&sups, p).expect("draws"), p, h, reps);
            }
            for (name, method) in [
                ("cvm-series-mc", CvmMethod::SeriesMC),
                ("cvm-chisq-derived", CvmMethod::ChiSqSeriesMC(CvmCoefficients::Derived)),
                ("cvm-chisq-quoted", CvmMethod::ChiSqSeriesMC(CvmCoefficients::Quoted)),
            ] {
                let draws = cvm_limit_draws(sigma, method, h, reps, seed)?;
                for &p in &probs {
                    push(name, order_statistic(&draws, p).expect("draws"), p, h, reps);
                }
            }
            let rows = table
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.p),
                        fmt(r.quantile),
                        r.method.clone(),
                        r.truncation.to_string(),
                        r.reps.to_string(),
                        r.seed.to_string(),
                    ]
                })
                .collect();
            Ok(vec![csv_artifact("limits.csv", cfg, &["p", "quantile", "method", "H", "reps", "seed"], rows)?])
        }
    }
}

/// Writes artifacts into `out` (created if missing) or to standard output.
pub fn write_artifacts(artifacts: &[Artifact], out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for a in artifacts {
                fs::write(dir.join(&a.name), &a.contents)?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for a in artifacts {
                lock.write_all(a.contents.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Resolves, runs and writes; the whole command line minus exit codes.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli.command, &cli.flags)?;
    let artifacts = execute(cli.command, &cfg)?;
    write_artifacts(&artifacts, cfg.out.as_deref())
}
