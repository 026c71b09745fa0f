//! Plain-text experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys listed as
//! "list" take comma-separated values and span a sweep grid.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `name` | text | file stem |
//! | `regime` | `real`, `complex` | `real` |
//! | `source` | `uniform`, `bpsk`, `qam4` | required |
//! | `mixing` | `identity`, `givens`, `orthogonal`, `unitary`, `general` | required |
//! | `sources` | list of K | required |
//! | `sensors` | L | K |
//! | `samples` | list of T | required |
//! | `snr_db` | list of dB values or `none` | `none` |
//! | `trials` | count | required |
//! | `seed` | integer | `0` |
//! | `methods` | list of `[pw+]robustica`, `[pw+]fastica`, `[pw+]nc-fastica`, `[pw+]kmf`, `mmse` | required |
//! | `mode` | `tolerance`, `budget` | `tolerance` |
//! | `eta` | real | `0.5e-6` |
//! | `max_iterations` | count | `1000` |
//! | `budgets` | list of flops/source/sample (budget mode) | none |
//! | `deflation` | `ortho`, `regression` | `ortho` |
//! | `sign` | `any`, `positive`, `negative` | `any` |
//! | `fail_threshold_db` | real | `-10` |
//! | `plot_x` | `budget`, `samples`, `snr_db`, `none` | `none` |
//! | `check_monotonic` | `true`, `false` | `true` |

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use robustica_core::benchgen::{MixingKind, SourceKind};
use robustica_core::deflation::DeflationMode;
use robustica_core::robustica::{SignTarget, DEFAULT_ETA};
use robustica_core::Regime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    RobustIca,
    FastIca,
    NcFastIca,
    KmFixedPoint,
    /// Linear MMSE receiver built from the true mixing matrix.
    Mmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub kind: MethodKind,
    pub prewhiten: bool,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MethodKind::RobustIca => "robustica",
            MethodKind::FastIca => "fastica",
            MethodKind::NcFastIca => "nc-fastica",
            MethodKind::KmFixedPoint => "kmf",
            MethodKind::Mmse => "mmse",
        };
        if self.prewhiten {
            write!(f, "pw+{name}")
        } else {
            f.write_str(name)
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (prewhiten, name) = match s.strip_prefix("pw+") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let kind = match name {
            "robustica" => MethodKind::RobustIca,
            "fastica" => MethodKind::FastIca,
            "nc-fastica" => MethodKind::NcFastIca,
            "kmf" => MethodKind::KmFixedPoint,
            "mmse" if !prewhiten => MethodKind::Mmse,
            _ => return Err(format!("unknown method {s:?}")),
        };
        Ok(Method { kind, prewhiten })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Stopping rule with `eta`, capped at `max_iterations`.
    Tolerance { eta: f64, max_iterations: usize },
    /// Fixed iteration counts derived from each flop budget
    /// (flops per source per sample).
    Budget { budgets: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    None,
    Budget,
    Samples,
    SnrDb,
}

impl PlotAxis {
    pub fn column(self) -> &'static str {
        match self {
            PlotAxis::None => "",
            PlotAxis::Budget => "flops_per_source_sample",
            PlotAxis::Samples => "T",
            PlotAxis::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub regime: Regime,
    pub source: SourceKind,
    pub mixing: MixingKind,
    pub sources: Vec<usize>,
    pub sensors: Option<usize>,
    pub samples: Vec<usize>,
    pub snr_db: Vec<Option<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub mode: Mode,
    pub deflation: DeflationMode,
    pub sign: SignTarget,
    pub fail_threshold_db: f64,
    pub plot_x: PlotAxis,
    pub check_monotonic: bool,
}

const KEYS: &[&str] = &[
    "name",
    "regime",
    "source",
    "mixing",
    "sources",
    "sensors",
    "samples",
    "snr_db",
    "trials",
    "seed",
    "methods",
    "mode",
    "eta",
    "max_iterations",
    "budgets",
    "deflation",
    "sign",
    "fail_threshold_db",
    "plot_x",
    "check_monotonic",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::global(format!("cannot read {}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
        Self::parse(&text, stem)
    }

    /// Parses config text; `default_name` is used when `name` is absent.
    pub fn parse(text: &str, default_name: &str) -> Result<Self, ConfigError> {
        let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::at(line, format!("unknown key {key:?}")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("empty value for {key:?}")));
            }
            if let Some((first, _)) = entries.insert(key, (line, value)) {
                return Err(ConfigError::at(line, format!("{key:?} already set on line {first}")));
            }
        }
        let p = Entries(entries);

        let regime = p.parse_with("regime", Some(Regime::Real), |v| match v {
            "real" => Ok(Regime::Real),
            "complex" => Ok(Regime::Complex),
            _ => Err("expected `real` or `complex`".into()),
        })?;
        let source = p.parse_with("source", None, |v| {
            SourceKind::from_name(v).ok_or_else(|| "expected uniform, bpsk or qam4".into())
        })?;
        let mixing = p.parse_with("mixing", None, |v| {
            MixingKind::from_name(v).ok_or_else(|| "expected identity, givens, orthogonal, unitary or general".into())
        })?;
        let sources: Vec<usize> = p.list("sources", None)?;
        let sensors = p.optional::<usize>("sensors")?;
        let samples: Vec<usize> = p.list("samples", None)?;
        let snr_db = p.list_with("snr_db", Some(vec![None]), |v| match v {
            "none" => Ok(None),
            v => v.parse::<f64>().map(Some).map_err(|e| e.to_string()),
        })?;
        let trials = p.parse_with("trials", None, |v| v.parse::<usize>().map_err(|e| e.to_string()))?;
        let seed = p.parse_with("seed", Some(0), |v| v.parse::<u64>().map_err(|e| e.to_string()))?;
        let methods: Vec<Method> = p.list("methods", None)?;
        let mode = p.parse_with("mode", Some("tolerance"), |v| match v {
            "tolerance" => Ok("tolerance"),
            "budget" => Ok("budget"),
            _ => Err("expected `tolerance` or `budget`".into()),
        })?;
        let mode = if mode == "budget" {
            for key in ["eta", "max_iterations"] {
                if let Some(line) = p.line(key) {
                    return Err(ConfigError::at(line, format!("{key:?} has no effect in budget mode")));
                }
            }
            Mode::Budget {
                budgets: p.list("budgets", None)?,
            }
        } else {
            if let Some(line) = p.line("budgets") {
                return Err(ConfigError::at(line, "\"budgets\" needs `mode = budget`"));
            }
            Mode::Tolerance {
                eta: p.parse_with("eta", Some(DEFAULT_ETA), |v| {
                    v.parse::<f64>().map_err(|e| e.to_string())
                })?,
                max_iterations: p.parse_with("max_iterations", Some(1000), |v| {
                    v.parse::<usize>().map_err(|e| e.to_string())
                })?,
            }
        };
        let deflation = p.parse_with("deflation", Some(DeflationMode::Orthogonalization), |v| match v {
            "ortho" => Ok(DeflationMode::Orthogonalization),
            "regression" => Ok(DeflationMode::Regression),
            _ => Err("expected `ortho` or `regression`".into()),
        })?;
        let sign = p.parse_with("sign", Some(SignTarget::Any), parse_sign_word)?;
        let fail_threshold_db = p.parse_with("fail_threshold_db", Some(-10.0), |v| {
            v.parse::<f64>().map_err(|e| e.to_string())
        })?;
        let plot_x = p.parse_with("plot_x", Some(PlotAxis::None), |v| match v {
            "none" => Ok(PlotAxis::None),
            "budget" => Ok(PlotAxis::Budget),
            "samples" => Ok(PlotAxis::Samples),
            "snr_db" => Ok(PlotAxis::SnrDb),
            _ => Err("expected budget, samples, snr_db or none".into()),
        })?;
        let check_monotonic = p.parse_with("check_monotonic", Some(true), |v| {
            v.parse::<bool>().map_err(|e| e.to_string())
        })?;
        let name = p.parse_with("name", Some(default_name.to_owned()), |v| Ok(v.to_owned()))?;

        let cfg = ExperimentConfig {
            name,
            regime,
            source,
            mixing,
            sources,
            sensors,
            samples,
            snr_db,
            trials,
            seed,
            methods,
            mode,
            deflation,
            sign,
            fail_threshold_db,
            plot_x,
            check_monotonic,
        };
        cfg.validate(&p)?;
        Ok(cfg)
    }

    fn validate(&self, p: &Entries<'_>) -> Result<(), ConfigError> {
        let err = |key: &str, msg: &str| match p.line(key) {
            Some(line) => ConfigError::at(line, msg),
            None => ConfigError::global(msg),
        };
        if self.trials == 0 {
            return Err(err("trials", "trial count must be positive"));
        }
        if self.sources.contains(&0) {
            return Err(err("sources", "source counts must be positive"));
        }
        if self.samples.contains(&0) {
            return Err(err("samples", "sample counts must be positive"));
        }
        if let Some(l) = self.sensors {
            if self.sources.iter().any(|&k| k > l) {
                return Err(err("sensors", "fewer sensors than sources"));
            }
        }
        if let Mode::Budget { budgets } = &self.mode {
            if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(err("budgets", "budgets must be finite and nonnegative"));
            }
        }
        if let Mode::Tolerance { eta, .. } = self.mode {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(err("eta", "eta must be positive"));
            }
        }
        for m in &self.methods {
            let baseline = !matches!(m.kind, MethodKind::RobustIca | MethodKind::Mmse);
            if baseline && self.deflation == DeflationMode::Regression {
                return Err(err(
                    "deflation",
                    "FastICA-family methods deflate by orthogonalization only",
                ));
            }
        }
        let swept = match self.plot_x {
            PlotAxis::None => true,
            PlotAxis::Budget => matches!(self.mode, Mode::Budget { .. }),
            PlotAxis::Samples | PlotAxis::SnrDb => true,
        };
        if !swept {
            return Err(err("plot_x", "plot_x = budget needs `mode = budget`"));
        }
        Ok(())
    }
}

/// `+`, `-` or `any` (also the long words).
pub fn parse_sign_word(v: &str) -> Result<SignTarget, String> {
    match v {
        "any" | "*" => Ok(SignTarget::Any),
        "+" | "positive" => Ok(SignTarget::Positive),
        "-" | "negative" => Ok(SignTarget::Negative),
        _ => Err(format!("unknown sign {v:?}")),
    }
}

/// Comma-separated kurtosis signs, e.g. `"+,-"`.
pub fn parse_sign_schedule(text: &str) -> Result<Vec<SignTarget>, String> {
    // the typographic minus sign is accepted too
    text.split(',')
        .map(|s| parse_sign_word(&s.trim().replace('\u{2212}', "-")))
        .collect()
}

struct Entries<'a>(HashMap<&'a str, (usize, &'a str)>);

impl Entries<'_> {
    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|&(l, _)| l)
    }

    fn parse_with<T>(
        &self,
        key: &str,
        default: Option<T>,
        f: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        match self.0.get(key) {
            Some(&(line, v)) => f(v).map_err(|e| ConfigError::at(line, format!("{key}: {e}"))),
            None => default.ok_or_else(|| ConfigError::global(format!("missing required key {key:?}"))),
        }
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.0
            .get(key)
            .map(|&(line, v)| v.parse::<T>().map_err(|e| ConfigError::at(line, format!("{key}: {e}"))))
            .transpose()
    }

    fn list_with<T>(
        &self,
        key: &str,
        default: Option<Vec<T>>,
        f: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Vec<T>, ConfigError> {
        match self.0.get(key) {
            Some(&(line, v)) => v
                .split(',')
                .map(|item| f(item.trim()).map_err(|e| ConfigError::at(line, format!("{key}: {e}"))))
                .collect(),
            None => default.ok_or_else(|| ConfigError::global(format!("missing required key {key:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Option<Vec<T>>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.list_with(key, default, |v| v.parse::<T>().map_err(|e| e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "source = bpsk\nmixing = orthogonal\nsources = 3\nsamples = 100\ntrials = 4\nmethods = robustica, pw+fastica\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL, "demo").unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.regime, Regime::Real);
        assert_eq!(cfg.snr_db, vec![None]);
        assert_eq!(
            cfg.mode,
            Mode::Tolerance {
                eta: DEFAULT_ETA,
                max_iterations: 1000
            }
        );
        assert_eq!(cfg.methods[1].to_string(), "pw+fastica");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format!("{MINIMAL}# comment\nbogus = 1\n");
        assert_eq!(ExperimentConfig::parse(&text, "x").unwrap_err().line, Some(8));
        let text = MINIMAL.replace("trials = 4", "trials = four");
        assert_eq!(ExperimentConfig::parse(&text, "x").unwrap_err().line, Some(5));
        let text = MINIMAL.replace("trials = 4", "trials = 0");
        let err = ExperimentConfig::parse(&text, "x").unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().contains("trial count"));
        let text = format!("{MINIMAL}sources = 4\n");
        assert_eq!(ExperimentConfig::parse(&text, "x").unwrap_err().line, Some(7));
    }

    #[test]
    fn budget_mode_needs_budgets() {
        let text = format!("{MINIMAL}mode = budget\n");
        assert!(ExperimentConfig::parse(&text, "x")
            .unwrap_err()
            .message
            .contains("budgets"));
        let text = format!("{MINIMAL}mode = budget\nbudgets = 100, 200.5\nplot_x = budget\n");
        let cfg = ExperimentConfig::parse(&text, "x").unwrap();
        assert_eq!(
            cfg.mode,
            Mode::Budget {
                budgets: vec![100.0, 200.5]
            }
        );
    }

    #[test]
    fn sign_schedules() {
        assert_eq!(
            parse_sign_schedule("+,-").unwrap(),
            vec![SignTarget::Positive, SignTarget::Negative]
        );
        assert_eq!(
            parse_sign_schedule("+, \u{2212}, any").unwrap(),
            vec![SignTarget::Positive, SignTarget::Negative, SignTarget::Any]
        );
        assert!(parse_sign_schedule("+,?").is_err());
    }
}
