//! Command-line interface of the `robustica` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robustica_core::benchgen::{self, MixingKind, Scenario, SourceKind};
use robustica_core::deflation::{self, DeflationMode, Separation, SeparationConfig, Whitening};
use robustica_core::metrics::{self, Algorithm};
use robustica_core::robustica::{ExtractionConfig, InitPolicy, Termination, DEFAULT_ETA};
use robustica_core::{Complex, DMatrix, Regime, Scalar, SignalBlock};

use crate::config::{self, ConfigError, ExperimentConfig, MethodKind};
use crate::experiment::{self, RunError, RunOptions};
use crate::format::{self, AnyBlock, Format, FormatError};
use crate::report;

/// Configurations shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("table2_T50", include_str!("../configs/table2_T50.cfg")),
    ("table2_T100", include_str!("../configs/table2_T100.cfg")),
    ("table2_T150", include_str!("../configs/table2_T150.cfg")),
    ("fig3_K5", include_str!("../configs/fig3_K5.cfg")),
    ("fig3_K10", include_str!("../configs/fig3_K10.cfg")),
    ("fig4", include_str!("../configs/fig4.cfg")),
    ("fig5", include_str!("../configs/fig5.cfg")),
    ("fig6", include_str!("../configs/fig6.cfg")),
    ("fig7", include_str!("../configs/fig7.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Parser)]
#[command(
    name = "robustica",
    version,
    about = "Blind source separation by kurtosis maximization with exact line search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment from a config file or a bundled config name.
    Run(RunArgs),
    /// Separate the sources of a signal file.
    Extract(ExtractArgs),
    /// Write one realization of a synthetic scenario.
    Generate(GenerateArgs),
    /// Print the SMSE between a source file and an estimate file.
    Smse(SmseArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config path, or the name of a bundled config (e.g. table2_T50).
    pub config: String,
    /// Output directory.
    #[arg(short, long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Omit the timestamp line at the top of each CSV.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Robustica,
    Fastica,
    NcFastica,
    Kmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeflationArg {
    Ortho,
    Regression,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Input signal file (channels x samples).
    pub input: PathBuf,
    /// Where to write the estimated sources.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "robustica")]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "off")]
    pub prewhiten: Switch,
    #[arg(long, value_enum, default_value = "ortho")]
    pub deflation: DeflationArg,
    /// Kurtosis sign per extraction, e.g. "+,-" (`any` leaves it free).
    #[arg(long, allow_hyphen_values = true)]
    pub sign_schedule: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    /// Start from seeded random vectors instead of the canonical basis.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sources to extract (default: all).
    #[arg(long)]
    pub sources: Option<usize>,
    /// Output format (default: from the output extension).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Input format (default: from the input extension).
    #[arg(long, value_enum)]
    pub input_format: Option<Format>,
    /// Also write the estimated mixing columns (sensors x sources).
    #[arg(long)]
    pub mixing_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Uniform,
    Bpsk,
    Qam4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MixingArg {
    Identity,
    Givens,
    Orthogonal,
    Unitary,
    General,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "real")]
    pub regime: RegimeArg,
    #[arg(long, value_enum, default_value = "uniform")]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value = "orthogonal")]
    pub mixing: MixingArg,
    /// Number of sources K.
    #[arg(long, default_value_t = 2)]
    pub sources: usize,
    /// Number of sensors L (default K).
    #[arg(long)]
    pub sensors: Option<usize>,
    /// Block length T.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observations file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the true sources here.
    #[arg(long)]
    pub sources_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SmseArgs {
    pub sources: PathBuf,
    pub estimates: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Format { context: String, source: FormatError },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        source: robustica_core::Error,
    },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_)
            | CliError::Numerical {
                source: robustica_core::Error::Config(_),
                ..
            } => 2,
            _ => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Parses `args` and runs the command; the return value is the process exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run_cmd(a),
        Command::Extract(a) => extract_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Smse(a) => smse_cmd(a),
    }
}

fn load_config(name_or_path: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return Ok(ExperimentConfig::from_file(path)?);
    }
    match bundled(name_or_path) {
        Some(text) => Ok(ExperimentConfig::parse(text, name_or_path)?),
        None => Err(CliError::Config(format!(
            "{name_or_path}: no such file and not a bundled config (bundled: {})",
            BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn run_cmd(a: RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = a.trials {
        if trials == 0 {
            return Err(CliError::Config("--trials: trial count must be positive".into()));
        }
        cfg.trials = trials;
    }
    if a.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    let opts = RunOptions {
        jobs: a.jobs,
        timestamp: !a.no_timestamp,
    };
    let result = experiment::run_experiment(&cfg, &a.out, &opts)?;
    for agg in &result.aggregates {
        let g = &result.grid[agg.point];
        println!(
            "{:<16} K={:<3} T={:<5} snr={:<6} budget={:<7} SMSE={:>8.2} dB  iter={:.2}  kflops={:.2}  fails={}",
            agg.method.to_string(),
            g.sources,
            g.samples,
            g.snr_db.map_or("none".into(), |v| v.to_string()),
            g.budget.map_or("none".into(), |v| v.to_string()),
            agg.smse_db,
            agg.iter_mean,
            agg.kflops_mean,
            agg.fail_count
        );
    }
    Ok(())
}

fn separation_config(a: &ExtractArgs, regime: Regime) -> Result<SeparationConfig, CliError> {
    let kind = match a.algorithm {
        AlgorithmArg::Robustica => MethodKind::RobustIca,
        AlgorithmArg::Fastica => MethodKind::FastIca,
        AlgorithmArg::NcFastica => MethodKind::NcFastIca,
        AlgorithmArg::Kmf => MethodKind::KmFixedPoint,
    };
    let sign_schedule = match &a.sign_schedule {
        Some(s) => config::parse_sign_schedule(s).map_err(|e| CliError::Config(format!("--sign-schedule: {e}")))?,
        None => Vec::new(),
    };
    if !(a.eta.is_finite() && a.eta > 0.0) {
        return Err(CliError::Config("--eta must be positive".into()));
    }
    Ok(SeparationConfig {
        algorithm: experiment::algorithm(kind, regime).expect("not the MMSE reference"),
        deflation: match a.deflation {
            DeflationArg::Ortho => DeflationMode::Orthogonalization,
            DeflationArg::Regression => DeflationMode::Regression,
        },
        whitening: match (a.prewhiten, kind) {
            (Switch::On, _) => Whitening::Prewhiten { dimension: a.sources },
            (Switch::Off, MethodKind::RobustIca) => Whitening::None,
            (Switch::Off, _) => Whitening::AssumeWhite,
        },
        extraction: ExtractionConfig {
            max_iterations: a.max_iters,
            termination: Termination::Tolerance { eta: a.eta },
            init: a.seed.map_or(InitPolicy::Canonical, |seed| InitPolicy::Random { seed }),
            ..ExtractionConfig::default()
        },
        sources: a.sources,
        sign_schedule,
    })
}

fn extract_cmd(a: ExtractArgs) -> Result<(), CliError> {
    let input_format = a.input_format.unwrap_or_else(|| Format::from_path(&a.input));
    let block = format::read_file(&a.input, input_format).map_err(|source| CliError::Format {
        context: format!("reading {}", a.input.display()),
        source,
    })?;
    let cfg = separation_config(&a, block.regime())?;
    let out_format = a.format.unwrap_or_else(|| Format::from_path(&a.output));
    match block {
        AnyBlock::Real(x) => extract_and_write(&x, &cfg, &a, out_format),
        AnyBlock::Complex(x) => extract_and_write(&x, &cfg, &a, out_format),
    }
}

fn extract_and_write<S: Scalar>(
    x: &SignalBlock<S>,
    cfg: &SeparationConfig,
    a: &ExtractArgs,
    out_format: Format,
) -> Result<(), CliError>
where
    AnyBlock: From<SignalBlock<S>>,
{
    let sep = deflation::extract_all(x, cfg).map_err(|source| CliError::Numerical {
        context: format!("separating {}", a.input.display()),
        source,
    })?;
    write_block(&a.output, out_format, AnyBlock::from(sep.sources.clone()))?;
    if let Some(path) = &a.mixing_out {
        let h = DMatrix::from_columns(&sep.mixing_estimates);
        let block = SignalBlock::new(h).map_err(|source| CliError::Numerical {
            context: "mixing estimates".into(),
            source,
        })?;
        write_block(path, Format::from_path(path), AnyBlock::from(block))?;
    }
    write_reports(&a.output, cfg.algorithm, &sep)
}

fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_reports<S: Scalar>(output: &Path, algorithm: Algorithm, sep: &Separation<S>) -> Result<(), CliError> {
    let io = |path: &Path, e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let log_path = sidecar(output, ".log");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io(&log_path, e))?);
    report::write_log(&mut log, algorithm.name(), sep)
        .and_then(|_| log.flush())
        .map_err(|e| io(&log_path, e))?;
    let csv_path = sidecar(output, ".report.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(|e| io(&csv_path, e))?);
    report::write_csv(&mut csv, sep)
        .and_then(|_| csv.flush())
        .map_err(|e| io(&csv_path, e))
}

fn write_block(path: &Path, format: Format, block: AnyBlock) -> Result<(), CliError> {
    format::write_file(path, format, &block).map_err(|source| CliError::Format {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn generate_cmd(a: GenerateArgs) -> Result<(), CliError> {
    let sc = Scenario {
        regime: match a.regime {
            RegimeArg::Real => Regime::Real,
            RegimeArg::Complex => Regime::Complex,
        },
        source: match a.source {
            SourceArg::Uniform => SourceKind::Uniform,
            SourceArg::Bpsk => SourceKind::Bpsk,
            SourceArg::Qam4 => SourceKind::Qam4,
        },
        mixing: match a.mixing {
            MixingArg::Identity => MixingKind::Identity,
            MixingArg::Givens => MixingKind::Givens { angle: None },
            MixingArg::Orthogonal => MixingKind::Orthogonal,
            MixingArg::Unitary => MixingKind::Unitary,
            MixingArg::General => MixingKind::General,
        },
        sources: a.sources,
        sensors: a.sensors.unwrap_or(a.sources),
        samples: a.samples,
        snr_db: a.snr_db,
        trials: 1,
        seed: a.seed,
    };
    sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.output));
    match sc.regime {
        Regime::Real => generate_into::<f64>(&sc, &a, format),
        Regime::Complex => generate_into::<Complex<f64>>(&sc, &a, format),
    }
}

fn generate_into<S: Scalar>(sc: &Scenario, a: &GenerateArgs, format: Format) -> Result<(), CliError>
where
    AnyBlock: From<SignalBlock<S>>,
{
    let trial = benchgen::realize::<S>(sc, 0).map_err(|source| CliError::Numerical {
        context: "generating the scenario".into(),
        source,
    })?;
    write_block(&a.output, format, AnyBlock::from(trial.observations))?;
    if let Some(path) = &a.sources_out {
        write_block(
            path,
            a.format.unwrap_or_else(|| Format::from_path(path)),
            AnyBlock::from(trial.sources),
        )?;
    }
    Ok(())
}

fn smse_cmd(a: SmseArgs) -> Result<(), CliError> {
    let read = |p: &Path| {
        format::read_file(p, Format::from_path(p)).map_err(|source| CliError::Format {
            context: format!("reading {}", p.display()),
            source,
        })
    };
    let numerical = |source| CliError::Numerical {
        context: "computing SMSE".into(),
        source,
    };
    let result = match (read(&a.sources)?, read(&a.estimates)?) {
        (AnyBlock::Real(s), AnyBlock::Real(e)) => metrics::smse(&s, &e).map_err(numerical)?,
        (AnyBlock::Complex(s), AnyBlock::Complex(e)) => metrics::smse(&s, &e).map_err(numerical)?,
        (AnyBlock::Real(s), AnyBlock::Complex(e)) => metrics::smse(&complexify(&s), &e).map_err(numerical)?,
        (AnyBlock::Complex(s), AnyBlock::Real(e)) => metrics::smse(&s, &complexify(&e)).map_err(numerical)?,
    };
    for p in &result.per_pair {
        println!("source {} <- estimate {}: {:.3} dB", p.source, p.estimate, p.smse_db);
    }
    println!("average SMSE: {:.3} dB", result.average_db);
    Ok(())
}

fn complexify(b: &SignalBlock<f64>) -> SignalBlock<Complex<f64>> {
    SignalBlock::new(b.matrix().map(|v| Complex::new(v, 0.0))).expect("same shape as a valid block")
}
