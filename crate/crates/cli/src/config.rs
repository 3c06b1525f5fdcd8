//! Run configuration: JSON file, then command-line flags on top.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use episde::systems::BENCHMARK_NAMES;
use episde::{CatalogOptions, SdeScheme};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "EPISDE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// Parameter drawn once per path.
    #[serde(alias = "epistemic")]
    #[value(alias = "epistemic")]
    Parametric,
    /// Brownian (or i.i.d.) reformulation.
    #[serde(alias = "aleatoric")]
    #[value(alias = "aleatoric")]
    Sde,
    Both,
}

impl Semantics {
    pub fn name(self) -> &'static str {
        match self {
            Semantics::Parametric => "parametric",
            Semantics::Sde => "sde",
            Semantics::Both => "both",
        }
    }

    pub fn includes_epistemic(self) -> bool {
        matches!(self, Semantics::Parametric | Semantics::Both)
    }

    pub fn includes_aleatoric(self) -> bool {
        matches!(self, Semantics::Sde | Semantics::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub num_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            num_steps: 300,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_bin: Option<PathBuf>,
}

impl Outputs {
    pub fn is_empty(&self) -> bool {
        self == &Outputs::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Per-dimension `[lower, upper]`.
    pub safe_box: Vec<(f64, f64)>,
    /// Defaults to the simulation horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub delta: f64,
}

/// Everything a run needs. Together with the master seed it determines
/// every output byte; the worker count is not echoed because it does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog name or path to a system JSON file.
    pub benchmark: String,
    pub semantics: Semantics,
    pub num_paths: usize,
    pub time: TimeConfig,
    pub master_seed: Option<u64>,
    pub scheme: SdeScheme,
    pub substeps: usize,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub model: CatalogOptions,
    pub outputs: Outputs,
    pub level: f64,
    pub alpha: f64,
    pub t_min: Option<f64>,
    pub constraint: Option<ConstraintConfig>,
    pub confidence: f64,
    pub growth_threshold: f64,
    pub highlighted_paths: usize,
    pub fail_on_divergence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: "scalar-drift".into(),
            semantics: Semantics::Both,
            num_paths: 10_000,
            time: TimeConfig::default(),
            master_seed: None,
            scheme: SdeScheme::EulerMaruyama,
            substeps: 1,
            workers: None,
            model: CatalogOptions::default(),
            outputs: Outputs::default(),
            level: 0.95,
            alpha: 0.01,
            t_min: None,
            constraint: None,
            confidence: 0.95,
            growth_threshold: 0.0,
            highlighted_paths: 7,
            fail_on_divergence: false,
        }
    }
}

/// A validation failure tied to one configuration field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

fn field_error(field: &'static str, message: String) -> FieldError {
    FieldError { field, message }
}

fn check_probability(field: &'static str, value: f64) -> Result<(), FieldError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(field_error(
            field,
            format!("must lie strictly between 0 and 1 (got {value})"),
        ))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.benchmark.is_empty() {
            return Err(field_error(
                "benchmark",
                "must name a catalog entry or a system file".into(),
            ));
        }
        if self.num_paths == 0 {
            return Err(field_error("num_paths", "must be positive (got 0)".into()));
        }
        if self.time.num_steps == 0 {
            return Err(field_error("time.num_steps", "must be positive (got 0)".into()));
        }
        if !(self.time.horizon.is_finite() && self.time.horizon > 0.0) {
            return Err(field_error(
                "time.T",
                format!("must be finite and positive (got {})", self.time.horizon),
            ));
        }
        if self.substeps == 0 {
            return Err(field_error("substeps", "must be positive (got 0)".into()));
        }
        if self.workers == Some(0) {
            return Err(field_error("workers", "must be positive (got 0)".into()));
        }
        if let Some(v) = self.model.prior_variance {
            if !(v.is_finite() && v > 0.0) {
                return Err(field_error(
                    "model.prior_variance",
                    format!("must be positive (got {v})"),
                ));
            }
        }
        check_probability("level", self.level)?;
        check_probability("alpha", self.alpha)?;
        check_probability("confidence", self.confidence)?;
        if let Some(t) = self.t_min {
            if !(t > 0.0) {
                return Err(field_error("t_min", format!("must be positive (got {t})")));
            }
        }
        if let Some(c) = &self.constraint {
            check_probability("constraint.delta", c.delta)?;
            if c.safe_box.is_empty() {
                return Err(field_error(
                    "constraint.safe_box",
                    "needs at least one [lower, upper] pair".into(),
                ));
            }
            for &(lo, hi) in &c.safe_box {
                if !(lo < hi) {
                    return Err(field_error(
                        "constraint.safe_box",
                        format!("lower bound {lo} must be below upper bound {hi}"),
                    ));
                }
            }
            if let Some(h) = c.horizon {
                if !(h >= 0.0 && h <= self.time.horizon) {
                    return Err(field_error(
                        "constraint.horizon",
                        format!("must lie in [0, T={}] (got {h})", self.time.horizon),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }

    pub fn is_catalog_benchmark(&self) -> bool {
        BENCHMARK_NAMES.contains(&self.benchmark.as_str())
    }
}

/// A parsed configuration file, kept with its text so that validation
/// errors can point at a line.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub text: String,
    pub config: RunConfig,
    pub has_seed: bool,
}

impl ConfigFile {
    pub fn load(path: &Path, base: RunConfig) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let has_seed = value.get("master_seed").is_some_and(|v| !v.is_null());
        let mut merged = serde_json::to_value(&base).expect("config serializes");
        merge_json(&mut merged, value);
        if let Some(w) = base.workers {
            merged["workers"] = w.into();
        }
        let config: RunConfig = serde_json::from_value(merged).map_err(|e| {
            let line = error_line(&text, &e.to_string());
            CliError::Config(format!(
                "{}{}: {e}",
                path.display(),
                line.map_or(String::new(), |l| format!(": line {l}"))
            ))
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            text,
            config,
            has_seed,
        })
    }

    /// 1-based line of the first occurrence of the last segment of `field`.
    pub fn line_of(&self, field: &str) -> Option<usize> {
        let key = field.rsplit('.').next().unwrap_or(field);
        let needle = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
    }
}

/// Deep merge of JSON objects; `patch` wins.
fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Finds a quoted field name mentioned in a serde message within the file.
fn error_line(text: &str, message: &str) -> Option<usize> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    let needle = format!("\"{}\"", &message[start..end]);
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Reads the default seed from the environment.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Which fields were set explicitly on the command line, for error messages.
#[derive(Debug, Default, Clone)]
pub struct FlagOrigins {
    pub fields: BTreeSet<&'static str>,
}

impl FlagOrigins {
    pub fn mark(&mut self, field: &'static str) {
        self.fields.insert(field);
    }
}

/// Flag spelling for a config field.
pub fn flag_for(field: &str) -> &'static str {
    match field {
        "benchmark" => "--benchmark",
        "semantics" => "--semantics",
        "num_paths" => "--paths",
        "time.T" => "--T",
        "time.num_steps" => "--steps",
        "master_seed" => "--seed",
        "scheme" => "--scheme",
        "substeps" => "--substeps",
        "workers" => "--workers",
        "model.prior_variance" => "--prior-variance",
        "level" => "--level",
        "alpha" => "--alpha",
        "t_min" => "--t-min",
        "confidence" => "--confidence",
        "constraint.delta" => "--delta",
        "constraint.safe_box" => "--safe-box",
        "constraint.horizon" => "--constraint-horizon",
        _ => "",
    }
}

/// Formats a validation failure, naming the flag or file line it came from.
pub fn describe(error: &FieldError, flags: &FlagOrigins, file: Option<&ConfigFile>) -> String {
    let origin = if flags.fields.contains(error.field) {
        format!(" (from {})", flag_for(error.field))
    } else if let Some(line) = file.and_then(|f| f.line_of(error.field).map(|l| (f, l))) {
        format!(" ({}: line {})", line.0.path.display(), line.1)
    } else {
        String::new()
    };
    format!("invalid `{}`: {}{origin}", error.field, error.message)
}
