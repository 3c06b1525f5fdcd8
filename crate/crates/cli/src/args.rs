//! Command-line flags. Every flag is optional so that a `--config` file can
//! supply the value; the documented default applies when neither does.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use episde::SdeScheme;

use crate::config::{env_seed, ConfigFile, ConstraintConfig, FlagOrigins, RunConfig, Semantics, TimeConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "episde",
    version,
    about = "Simulate random-parameter ODEs next to their Brownian SDE reformulation and compare them"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate ensembles and write paths, summaries, reports or binary dumps.
    Simulate(SimulateArgs),
    /// Write plot-ready sample paths and confidence bands.
    Figures(FiguresArgs),
    /// Run every discriminator on both semantics and print the evidence table.
    Compare(CompareArgs),
    /// Classify per-path growth rates and report the diverging fraction.
    Stability(StabilityArgs),
    /// Estimate a joint chance constraint with exact binomial intervals.
    Chance(ChanceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    #[value(alias = "em")]
    EulerMaruyama,
    Milstein,
}

impl From<SchemeArg> for SdeScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::EulerMaruyama => SdeScheme::EulerMaruyama,
            SchemeArg::Milstein => SdeScheme::Milstein,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags given here override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Catalog benchmark (scalar-drift, linear-feedback, dt-multiplicative, dt-additive) or a system JSON file [default: scalar-drift]
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Semantics to simulate [default: both]
    #[arg(long, value_enum)]
    pub semantics: Option<Semantics>,
    /// Number of sample paths N [default: 10000]
    #[arg(long = "paths", value_name = "N")]
    pub num_paths: Option<usize>,
    /// Time horizon T; discrete benchmarks use --steps unit steps instead [default: 3, stability: 10]
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Recorded grid steps over [0, T] [default: 300, stability: 1000]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Master seed [default: $EPISDE_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// SDE discretization [default: euler-maruyama]
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Integration steps per recorded step [default: 1]
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Worker threads; outputs do not depend on it [default: all cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Prior mean of θ [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub theta_bar: Option<f64>,
    /// Prior variance of θ [default: 1]
    #[arg(long)]
    pub prior_variance: Option<f64>,
    /// Feedback gain k of linear-feedback [default: -(theta_bar + 1)]
    #[arg(long, allow_hyphen_values = true)]
    pub gain: Option<f64>,
    /// Initial state [default: 0 for scalar-drift, 1 otherwise]
    #[arg(long = "x0", allow_hyphen_values = true)]
    pub initial_state: Option<f64>,
    /// Exit with status 3 if any path produces a non-finite state [default: off]
    #[arg(long)]
    pub fail_on_divergence: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ConstraintArgs {
    /// Safe interval for one state dimension as LO,HI; repeat per dimension
    #[arg(long = "safe-box", value_name = "LO,HI", allow_hyphen_values = true)]
    pub safe_box: Vec<String>,
    /// Tolerated failure probability δ
    #[arg(long)]
    pub delta: Option<f64>,
    /// Constraint horizon [default: T]
    #[arg(long)]
    pub constraint_horizon: Option<f64>,
    /// Confidence of the Clopper-Pearson interval [default: 0.95]
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write every path as CSV (path_id,t,dim,x)
    #[arg(long, value_name = "FILE")]
    pub paths_csv: Option<PathBuf>,
    /// Write per-time summaries as CSV (t,mean,variance,band_lo,band_hi,n_paths)
    #[arg(long, value_name = "FILE")]
    pub summary_csv: Option<PathBuf>,
    /// Write the statistics report as JSON [default: stdout when no output is set]
    #[arg(long, value_name = "FILE")]
    pub report_json: Option<PathBuf>,
    /// Write the ensemble in the little-endian binary format
    #[arg(long, value_name = "FILE")]
    pub ensemble_bin: Option<PathBuf>,
    /// Quantile band level [default: 0.95]
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FiguresArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory for paths.csv and bands.csv [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Highlighted paths file [default: <out-dir>/paths.csv]
    #[arg(long, value_name = "FILE")]
    pub paths_csv: Option<PathBuf>,
    /// Bands file (t,semantics,source,lo,hi) [default: <out-dir>/bands.csv]
    #[arg(long, value_name = "FILE")]
    pub bands_csv: Option<PathBuf>,
    /// Highlighted paths per semantics K [default: 7]
    #[arg(long, value_name = "K")]
    pub highlight: Option<usize>,
    /// Band level [default: 0.95]
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub constraint: ConstraintArgs,
    /// Write the full evidence report as JSON
    #[arg(long, value_name = "FILE")]
    pub report_json: Option<PathBuf>,
    /// KS significance level [default: 0.01]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Smallest time in the variance scaling fit [default: 10 dt, 1 for discrete]
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Growth rate above which a path counts as diverging [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub growth_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the stability reports as JSON
    #[arg(long, value_name = "FILE")]
    pub report_json: Option<PathBuf>,
    /// Growth rate above which a path counts as diverging [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub growth_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ChanceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub constraint: ConstraintArgs,
    /// Write the verdict rows as JSON
    #[arg(long, value_name = "FILE")]
    pub report_json: Option<PathBuf>,
}

fn parse_interval(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || {
        CliError::Config(format!(
            "invalid `constraint.safe_box`: expected LO,HI, got {text:?} (from --safe-box)"
        ))
    };
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

/// Resolved configuration plus where it came from.
pub struct Resolved {
    pub config: RunConfig,
    pub flags: FlagOrigins,
    pub file: Option<ConfigFile>,
}

impl Resolved {
    pub fn validate(self) -> Result<Self, CliError> {
        match self.config.validate() {
            Ok(()) => Ok(self),
            Err(e) => Err(CliError::Config(crate::config::describe(
                &e,
                &self.flags,
                self.file.as_ref(),
            ))),
        }
    }
}

/// File over `base`, flags over file, then the environment seed if nothing
/// else set one.
pub fn resolve(run: &RunArgs, base: RunConfig) -> Result<Resolved, CliError> {
    let file = run
        .config
        .as_deref()
        .map(|p| ConfigFile::load(p, base.clone()))
        .transpose()?;
    let mut config = file.as_ref().map_or(base, |f| f.config.clone());
    let mut flags = FlagOrigins::default();
    macro_rules! set {
        ($flag:expr, $field:expr, $name:literal) => {
            if let Some(v) = $flag.clone() {
                $field = v.into();
                flags.mark($name);
            }
        };
    }
    set!(run.benchmark, config.benchmark, "benchmark");
    set!(run.semantics, config.semantics, "semantics");
    set!(run.num_paths, config.num_paths, "num_paths");
    set!(run.horizon, config.time.horizon, "time.T");
    set!(run.steps, config.time.num_steps, "time.num_steps");
    if let Some(s) = run.seed {
        config.master_seed = Some(s);
        flags.mark("master_seed");
    }
    set!(run.scheme, config.scheme, "scheme");
    set!(run.substeps, config.substeps, "substeps");
    if let Some(w) = run.workers {
        config.workers = Some(w);
        flags.mark("workers");
    }
    if let Some(v) = run.theta_bar {
        config.model.theta_bar = Some(v);
    }
    if let Some(v) = run.prior_variance {
        config.model.prior_variance = Some(v);
        flags.mark("model.prior_variance");
    }
    if let Some(v) = run.gain {
        config.model.gain = Some(v);
    }
    if let Some(v) = run.initial_state {
        config.model.initial_state = Some(v);
    }
    if run.fail_on_divergence {
        config.fail_on_divergence = true;
    }
    let file_has_seed = file.as_ref().is_some_and(|f| f.has_seed);
    if run.seed.is_none() && !file_has_seed {
        config.master_seed = env_seed()?;
    }
    Ok(Resolved { config, flags, file })
}

/// Applies constraint flags, starting from `fallback` when neither the
/// file nor the flags define a constraint.
pub fn apply_constraint(
    resolved: &mut Resolved,
    args: &ConstraintArgs,
    fallback: Option<ConstraintConfig>,
) -> Result<(), CliError> {
    let config = &mut resolved.config;
    if let Some(c) = args.confidence {
        config.confidence = c;
        resolved.flags.mark("confidence");
    }
    let any_flag = !args.safe_box.is_empty() || args.delta.is_some() || args.constraint_horizon.is_some();
    if config.constraint.is_none() && (any_flag || fallback.is_some()) {
        config.constraint = Some(fallback.unwrap_or(ConstraintConfig {
            safe_box: vec![(-2.0, 2.0)],
            horizon: None,
            delta: 0.05,
        }));
    }
    if let Some(c) = config.constraint.as_mut() {
        if !args.safe_box.is_empty() {
            c.safe_box = args
                .safe_box
                .iter()
                .map(|s| parse_interval(s))
                .collect::<Result<_, _>>()?;
            resolved.flags.mark("constraint.safe_box");
        }
        if let Some(d) = args.delta {
            c.delta = d;
            resolved.flags.mark("constraint.delta");
        }
        if let Some(h) = args.constraint_horizon {
            c.horizon = Some(h);
            resolved.flags.mark("constraint.horizon");
        }
    }
    Ok(())
}

/// Defaults for the stability subcommand: a longer horizon so that growth
/// rates settle.
pub fn stability_defaults() -> RunConfig {
    RunConfig {
        time: TimeConfig {
            horizon: 10.0,
            num_steps: 1000,
        },
        ..RunConfig::default()
    }
}
