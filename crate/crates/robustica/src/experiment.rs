//! Monte Carlo experiment runner.
//!
//! Every (grid point, trial) pair draws one scenario realization and runs
//! all configured methods on it. Trials run in parallel; records are
//! written in canonical order (grid point, trial, method) so the output
//! does not depend on the number of jobs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use robustica_core::baselines::BaselineKind;
use robustica_core::benchgen::{self, Scenario};
use robustica_core::deflation::{self, DeflationMode, SeparationConfig, Whitening};
use robustica_core::metrics::{self, Algorithm};
use robustica_core::robustica::{ExtractionConfig, Termination};
use robustica_core::{Complex, DMatrix, Regime, Scalar, SignalBlock};

use crate::config::{ExperimentConfig, Method, MethodKind, Mode, PlotAxis};

/// Largest tolerated decrease of the contrast between two RobustICA passes.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

/// Trials handed to the worker pool between two flushes.
const CHUNK: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("grid point {point}, trial {trial}, method {method}: {source}")]
    Trial {
        point: usize,
        trial: usize,
        method: String,
        source: robustica_core::Error,
    },
    #[error("contrast decreased by {descent:e} (trial {trial}, method {method})")]
    Monotonicity { trial: usize, method: String, descent: f64 },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot build the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub sources: usize,
    pub sensors: usize,
    pub samples: usize,
    pub snr_db: Option<f64>,
    pub budget: Option<f64>,
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    /// Iterations summed over the extracted sources.
    pub iterations: usize,
    /// Total flops, surcharges included.
    pub flops: u64,
    pub smse_db: f64,
    /// Worst contrast decrease over the RobustICA passes (`-inf` if none).
    pub worst_descent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub point: usize,
    pub method: Method,
    /// `10 log10` of the trial-averaged linear SMSE.
    pub smse_db: f64,
    pub iter_mean: f64,
    pub iter_std: f64,
    pub kflops_mean: f64,
    pub kflops_std: f64,
    pub fail_count: usize,
    pub flops_per_source_sample: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub grid: Vec<GridPoint>,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub worst_descent: f64,
}

impl ExperimentResult {
    pub fn aggregate(&self, method: &str, point: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.point == point && a.method.to_string() == method)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; rayon's default when `None`.
    pub jobs: Option<usize>,
    /// Prepend a `# generated at ...` line to every CSV.
    pub timestamp: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: None,
            timestamp: true,
        }
    }
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let budgets: Vec<Option<f64>> = match &cfg.mode {
        Mode::Budget { budgets } => budgets.iter().copied().map(Some).collect(),
        Mode::Tolerance { .. } => vec![None],
    };
    let mut points = Vec::new();
    for &k in &cfg.sources {
        for &t in &cfg.samples {
            for &snr in &cfg.snr_db {
                for &budget in &budgets {
                    points.push(GridPoint {
                        sources: k,
                        sensors: cfg.sensors.unwrap_or(k),
                        samples: t,
                        snr_db: snr,
                        budget,
                    });
                }
            }
        }
    }
    points
}

/// Runs the experiment and writes its CSV files into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<ExperimentResult, RunError> {
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let trials_path = out_dir.join(format!("{}_trials.csv", cfg.name));
    let mut sink = CsvSink::create(&trials_path, opts.timestamp)?;
    sink.line(TRIALS_HEADER)?;
    let grid = grid(cfg);
    let result = execute(cfg, &grid, opts.jobs, |chunk| {
        for r in chunk {
            sink.line(&trial_row(&grid, r))?;
        }
        sink.flush()
    })?;

    let agg_path = out_dir.join(format!("{}_aggregate.csv", cfg.name));
    let mut agg = CsvSink::create(&agg_path, opts.timestamp)?;
    agg.line(AGGREGATE_HEADER)?;
    for a in &result.aggregates {
        agg.line(&aggregate_row(&grid[a.point], a))?;
    }
    agg.flush()?;

    if cfg.plot_x != PlotAxis::None {
        let plot_path = out_dir.join(format!("{}_plot.csv", cfg.name));
        let mut plot = CsvSink::create(&plot_path, opts.timestamp)?;
        write_plot(&mut plot, cfg.plot_x, &grid, &result.aggregates)?;
        plot.flush()?;
    }

    check_monotonic(cfg, &result)?;
    Ok(result)
}

/// Runs the experiment without touching the file system.
pub fn run_in_memory(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult, RunError> {
    let grid = grid(cfg);
    let result = execute(cfg, &grid, jobs, |_| Ok(()))?;
    check_monotonic(cfg, &result)?;
    Ok(result)
}

fn check_monotonic(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<(), RunError> {
    if !cfg.check_monotonic {
        return Ok(());
    }
    match result
        .records
        .iter()
        .filter(|r| r.worst_descent > MONOTONICITY_SLACK)
        .max_by(|a, b| a.worst_descent.total_cmp(&b.worst_descent))
    {
        Some(r) => Err(RunError::Monotonicity {
            trial: r.trial,
            method: r.method.to_string(),
            descent: r.worst_descent,
        }),
        None => Ok(()),
    }
}

fn execute(
    cfg: &ExperimentConfig,
    grid: &[GridPoint],
    jobs: Option<usize>,
    mut on_chunk: impl FnMut(&[TrialRecord]) -> Result<(), RunError>,
) -> Result<ExperimentResult, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let work: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let mut records = Vec::with_capacity(work.len() * cfg.methods.len());
    for chunk in work.chunks(CHUNK) {
        let done: Vec<Result<Vec<TrialRecord>, RunError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(p, t)| match cfg.regime {
                    Regime::Real => run_trial::<f64>(cfg, grid, p, t),
                    Regime::Complex => run_trial::<Complex<f64>>(cfg, grid, p, t),
                })
                .collect()
        });
        let mut batch = Vec::new();
        for r in done {
            batch.extend(r?);
        }
        on_chunk(&batch)?;
        records.extend(batch);
    }
    let aggregates = aggregate(cfg, grid, &records);
    let worst_descent = records
        .iter()
        .map(|r| r.worst_descent)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExperimentResult {
        grid: grid.to_vec(),
        records,
        aggregates,
        worst_descent,
    })
}

fn scenario(cfg: &ExperimentConfig, point: &GridPoint) -> Scenario {
    Scenario {
        regime: cfg.regime,
        source: cfg.source,
        mixing: cfg.mixing,
        sources: point.sources,
        sensors: point.sensors,
        samples: point.samples,
        snr_db: point.snr_db,
        trials: cfg.trials,
        seed: cfg.seed,
    }
}

/// Core algorithm behind a method label.
pub fn algorithm(kind: MethodKind, regime: Regime) -> Option<Algorithm> {
    match kind {
        MethodKind::RobustIca => Some(Algorithm::RobustIca),
        MethodKind::FastIca => Some(Algorithm::Baseline(BaselineKind::fastica(regime))),
        MethodKind::NcFastIca => Some(Algorithm::Baseline(BaselineKind::NcFastIca)),
        MethodKind::KmFixedPoint => Some(Algorithm::Baseline(BaselineKind::KmFixedPoint)),
        MethodKind::Mmse => None,
    }
}

/// Iterations per source that fit into `budget` flops per source per sample.
pub fn iterations_for_budget(
    algorithm: Algorithm,
    regime: Regime,
    sources: usize,
    sensors: usize,
    samples: usize,
    prewhiten: bool,
    budget: f64,
) -> usize {
    let dim = if prewhiten { sources } else { sensors };
    let per_iteration = metrics::flops_per_iteration(algorithm, regime, dim, samples) as f64;
    let mut surcharge = metrics::setup_flops(algorithm, dim, samples) as f64;
    if prewhiten {
        surcharge += metrics::prewhitening_flops(regime, sources, samples) as f64;
    }
    let per_source_sample = per_iteration / samples as f64;
    let overhead = surcharge / (sources * samples) as f64;
    let n = (budget - overhead) / per_source_sample + 1e-9;
    if n > 0.0 {
        n.floor() as usize
    } else {
        0
    }
}

fn separation_config(cfg: &ExperimentConfig, point: &GridPoint, method: Method) -> Option<SeparationConfig> {
    let alg = algorithm(method.kind, cfg.regime)?;
    let baseline = matches!(alg, Algorithm::Baseline(_));
    let whitening = match (method.prewhiten, baseline) {
        (true, _) => Whitening::Prewhiten {
            dimension: Some(point.sources),
        },
        (false, true) => Whitening::AssumeWhite,
        (false, false) => Whitening::None,
    };
    let mut extraction = match (&cfg.mode, point.budget) {
        (Mode::Budget { .. }, Some(b)) => ExtractionConfig::fixed(iterations_for_budget(
            alg,
            cfg.regime,
            point.sources,
            point.sensors,
            point.samples,
            method.prewhiten,
            b,
        )),
        (Mode::Tolerance { eta, max_iterations }, _) => ExtractionConfig {
            max_iterations: *max_iterations,
            termination: Termination::Tolerance { eta: *eta },
            ..ExtractionConfig::default()
        },
        (Mode::Budget { .. }, None) => unreachable!("budget grids always carry a budget"),
    };
    extraction.sign_target = cfg.sign;
    Some(SeparationConfig {
        algorithm: alg,
        deflation: if baseline {
            DeflationMode::Orthogonalization
        } else {
            cfg.deflation
        },
        whitening,
        extraction,
        sources: Some(point.sources),
        sign_schedule: Vec::new(),
    })
}

fn run_trial<S: Scalar>(
    cfg: &ExperimentConfig,
    grid: &[GridPoint],
    p: usize,
    trial: usize,
) -> Result<Vec<TrialRecord>, RunError> {
    let point = &grid[p];
    let fail = |method: Method, source| RunError::Trial {
        point: p,
        trial,
        method: method.to_string(),
        source,
    };
    let sc = scenario(cfg, point);
    let first = cfg.methods[0];
    let data = benchgen::realize::<S>(&sc, trial).map_err(|e| fail(first, e))?;
    cfg.methods
        .iter()
        .map(|&method| {
            let (estimates, iterations, flops, worst_descent) = match separation_config(cfg, point, method) {
                None => {
                    let est = mmse_estimates(&data.model.mixing, data.model.noise_power, &data.observations)
                        .map_err(|e| fail(method, e))?;
                    (est, 0, 0, f64::NEG_INFINITY)
                }
                Some(sep_cfg) => {
                    let sep = deflation::extract_all(&data.observations, &sep_cfg).map_err(|e| fail(method, e))?;
                    let worst = match sep_cfg.algorithm {
                        Algorithm::RobustIca => sep
                            .reports
                            .iter()
                            .map(|r| r.worst_descent(sep_cfg.extraction.sign_target))
                            .fold(f64::NEG_INFINITY, f64::max),
                        Algorithm::Baseline(_) => f64::NEG_INFINITY,
                    };
                    let iterations = sep.reports.iter().map(|r| r.iterations).sum();
                    (sep.sources, iterations, sep.ledger.total, worst)
                }
            };
            let smse = metrics::smse(&data.sources, &estimates).map_err(|e| fail(method, e))?;
            Ok(TrialRecord {
                point: p,
                trial,
                seed: data.seed,
                method,
                iterations,
                flops,
                smse_db: smse.average_db,
                worst_descent,
            })
        })
        .collect()
}

/// Linear MMSE source estimates `W^H x` with `W = H (H^H H + s2 I)^-1`.
pub fn mmse_estimates<S: Scalar>(
    h: &DMatrix<S>,
    noise_power: f64,
    x: &SignalBlock<S>,
) -> robustica_core::Result<SignalBlock<S>> {
    let k = h.ncols();
    let gram = h.adjoint() * h + DMatrix::<S>::identity(k, k).scale(noise_power);
    let inv = gram.try_inverse().ok_or(robustica_core::Error::RankDeficient {
        requested: k,
        rank: k.saturating_sub(1),
    })?;
    let w = h * inv;
    SignalBlock::new(w.adjoint() * x.matrix())
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(cfg: &ExperimentConfig, grid: &[GridPoint], records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for (p, point) in grid.iter().enumerate() {
        for &method in &cfg.methods {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.point == p && r.method == method).collect();
            if rs.is_empty() {
                continue;
            }
            let n = rs.len() as f64;
            let linear = rs.iter().map(|r| 10f64.powf(r.smse_db / 10.0)).sum::<f64>() / n;
            let (iter_mean, iter_std) = mean_std(rs.iter().map(|r| r.iterations as f64));
            // flop counts are integers, so the sums stay exact
            let (flops_mean, flops_std) = mean_std(rs.iter().map(|r| r.flops as f64));
            let (kflops_mean, kflops_std) = (flops_mean / 1e3, flops_std / 1e3);
            out.push(Aggregate {
                point: p,
                method,
                smse_db: metrics::to_db(linear),
                iter_mean,
                iter_std,
                kflops_mean,
                kflops_std,
                fail_count: rs.iter().filter(|r| !(r.smse_db <= cfg.fail_threshold_db)).count(),
                flops_per_source_sample: flops_mean / (point.sources * point.samples) as f64,
                trials: rs.len(),
            });
        }
    }
    out
}

pub const TRIALS_HEADER: &str = "trial,seed,algorithm,K,L,T,snr_db,budget,iterations,flops,smse_db,worst_descent";
pub const AGGREGATE_HEADER: &str =
    "method,SMSE_dB,iter_mean,iter_std,kflops_mean,kflops_std,fail_count,K,L,T,snr_db,budget,flops_per_source_sample,trials";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_owned(), |v| v.to_string())
}

fn trial_row(grid: &[GridPoint], r: &TrialRecord) -> String {
    let g = &grid[r.point];
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.4},{:e}",
        r.trial,
        r.seed,
        r.method,
        g.sources,
        g.sensors,
        g.samples,
        opt(g.snr_db),
        opt(g.budget),
        r.iterations,
        r.flops,
        r.smse_db,
        r.worst_descent
    )
}

fn aggregate_row(g: &GridPoint, a: &Aggregate) -> String {
    format!(
        "{},{:.3},{:.3},{:.3},{:.4},{:.4},{},{},{},{},{},{},{:.3},{}",
        a.method,
        a.smse_db,
        a.iter_mean,
        a.iter_std,
        a.kflops_mean,
        a.kflops_std,
        a.fail_count,
        g.sources,
        g.sensors,
        g.samples,
        opt(g.snr_db),
        opt(g.budget),
        a.flops_per_source_sample,
        a.trials
    )
}

/// One row per (series, x) where the series fixes every grid coordinate
/// except the plotted one.
fn write_plot(sink: &mut CsvSink, axis: PlotAxis, grid: &[GridPoint], aggs: &[Aggregate]) -> Result<(), RunError> {
    let series_cols: &[&str] = match axis {
        PlotAxis::Budget => &["K", "T", "snr_db"],
        PlotAxis::Samples => &["K", "snr_db", "budget"],
        PlotAxis::SnrDb => &["K", "T", "budget"],
        PlotAxis::None => return Ok(()),
    };
    sink.line(&format!("method,{},{},SMSE_dB", series_cols.join(","), axis.column()))?;
    let mut rows: Vec<(String, f64, String)> = aggs
        .iter()
        .map(|a| {
            let g = &grid[a.point];
            let series = match axis {
                PlotAxis::Budget => format!("{},{},{}", g.sources, g.samples, opt(g.snr_db)),
                PlotAxis::Samples => format!("{},{},{}", g.sources, opt(g.snr_db), opt(g.budget)),
                _ => format!("{},{},{}", g.sources, g.samples, opt(g.budget)),
            };
            let x = match axis {
                PlotAxis::Budget => a.flops_per_source_sample,
                PlotAxis::Samples => g.samples as f64,
                _ => g.snr_db.unwrap_or(f64::INFINITY),
            };
            (format!("{},{series}", a.method), x, format!("{:.3}", a.smse_db))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for (series, x, y) in rows {
        sink.line(&format!("{series},{x},{y}"))?;
    }
    Ok(())
}

struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: &Path, timestamp: bool) -> Result<Self, RunError> {
        let io_err = |source| RunError::Io {
            path: path.to_owned(),
            source,
        };
        let mut sink = CsvSink {
            path: path.to_owned(),
            out: BufWriter::new(File::create(path).map_err(io_err)?),
        };
        if timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            sink.line(&format!("# generated at unix time {secs}"))?;
        }
        Ok(sink)
    }

    fn line(&mut self, text: &str) -> Result<(), RunError> {
        writeln!(self.out, "{text}").map_err(|source| RunError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn flush(&mut self) -> Result<(), RunError> {
        self.out.flush().map_err(|source| RunError::Io {
            path: self.path.clone(),
            source,
        })
    }
}
