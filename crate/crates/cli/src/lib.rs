//! Command-line front end: `simulate`, `figures`, `compare`, `stability`
//! and `chance`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{apply_constraint, resolve, stability_defaults, Cli, Command};
use config::RunConfig;
pub use error::CliError;

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => {
            let mut r = resolve(&a.run, RunConfig::default())?;
            let o = &mut r.config.outputs;
            o.paths_csv = a.paths_csv.or(o.paths_csv.take());
            o.summary_csv = a.summary_csv.or(o.summary_csv.take());
            o.report_json = a.report_json.or(o.report_json.take());
            o.ensemble_bin = a.ensemble_bin.or(o.ensemble_bin.take());
            if let Some(l) = a.level {
                r.config.level = l;
                r.flags.mark("level");
            }
            commands::cmd_simulate(&r.validate()?.config)
        }
        Command::Figures(a) => {
            let mut r = resolve(&a.run, RunConfig::default())?;
            let o = &mut r.config.outputs;
            o.paths_csv = a.paths_csv.or(o.paths_csv.take());
            o.bands_csv = a.bands_csv.or(o.bands_csv.take());
            if let Some(k) = a.highlight {
                r.config.highlighted_paths = k;
            }
            if let Some(l) = a.level {
                r.config.level = l;
                r.flags.mark("level");
            }
            let out_dir = a.out_dir.unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_figures(&r.validate()?.config, &out_dir)
        }
        Command::Compare(a) => {
            let mut r = resolve(&a.run, RunConfig::default())?;
            apply_constraint(&mut r, &a.constraint, None)?;
            let o = &mut r.config.outputs;
            o.report_json = a.report_json.or(o.report_json.take());
            if let Some(v) = a.alpha {
                r.config.alpha = v;
                r.flags.mark("alpha");
            }
            if let Some(v) = a.t_min {
                r.config.t_min = Some(v);
                r.flags.mark("t_min");
            }
            if let Some(v) = a.growth_threshold {
                r.config.growth_threshold = v;
            }
            commands::cmd_compare(&r.validate()?.config)
        }
        Command::Stability(a) => {
            let mut r = resolve(&a.run, stability_defaults())?;
            let o = &mut r.config.outputs;
            o.report_json = a.report_json.or(o.report_json.take());
            if let Some(v) = a.growth_threshold {
                r.config.growth_threshold = v;
            }
            commands::cmd_stability(&r.validate()?.config)
        }
        Command::Chance(a) => {
            let mut r = resolve(&a.run, RunConfig::default())?;
            let fallback = config::ConstraintConfig {
                safe_box: vec![(-2.0, 2.0)],
                horizon: None,
                delta: 0.05,
            };
            apply_constraint(&mut r, &a.constraint, Some(fallback))?;
            let o = &mut r.config.outputs;
            o.report_json = a.report_json.or(o.report_json.take());
            commands::cmd_chance(&r.validate()?.config)
        }
    }
}

/// Parses `args` and runs the selected subcommand, returning the process
/// exit status (0 success, 2 configuration, 3 divergence, 4 i/o).
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("episde: {e}");
            e.into()
        }
    }
}
