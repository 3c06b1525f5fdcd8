use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use episde::analytic::confidence_band;
use episde::evidence::{compare_ensembles, CompareSettings};
use episde::integrate::{write_binary, write_paths_csv};
use episde::safety::{
    analytic_growth_probability, classify_stability, estimate_joint_chance, verdict_table, ConstraintSpec,
    CrossSemanticsSettings, StabilityReport, VerdictRow,
};
use episde::stats::{
    empirical_quantile, increment_dependence, marginal_law_distance, quadratic_variation, summary_table,
    variance_scaling_fit, write_summary_csv, QuadraticVariationSummary, StatisticsReport,
};
use episde::systems::BenchmarkCatalogEntry;
use episde::{catalog_lookup, IntegrationSettings, PathEnsemble, SystemKind, SystemSpec, TimeGrid};
use serde::Serialize;

use crate::config::{ConstraintConfig, RunConfig};
use crate::error::CliError;

/// Short name used in CSV tags and tables.
pub fn label(kind: SystemKind) -> &'static str {
    match kind {
        SystemKind::ParametricOde => "parametric",
        SystemKind::ItoSde => "sde",
        SystemKind::DiscreteMultiplicative => "multiplicative",
        SystemKind::DiscreteAdditive => "additive",
    }
}

pub fn load_entry(config: &RunConfig) -> Result<BenchmarkCatalogEntry, CliError> {
    if config.is_catalog_benchmark() {
        return Ok(catalog_lookup(&config.benchmark, &config.model)?);
    }
    let path = Path::new(&config.benchmark);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "invalid `benchmark`: {:?} is neither a catalog name nor an existing file",
            config.benchmark
        )));
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let spec = SystemSpec::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let other = spec.with_kind(spec.kind().counterpart());
    let (epistemic, aleatoric) = if spec.kind().is_epistemic() {
        (spec, other)
    } else {
        (other, spec)
    };
    Ok(BenchmarkCatalogEntry {
        name: "custom",
        epistemic,
        aleatoric,
        analytic_oracle: None,
    })
}

pub fn grid_for(config: &RunConfig, entry: &BenchmarkCatalogEntry) -> Result<TimeGrid, CliError> {
    Ok(if entry.is_discrete() {
        TimeGrid::discrete(config.time.num_steps)?
    } else {
        TimeGrid::new(config.time.horizon, config.time.num_steps)?
    })
}

fn integration(config: &RunConfig) -> IntegrationSettings {
    IntegrationSettings {
        substeps: config.substeps,
        workers: config.workers,
    }
}

fn simulate_one(config: &RunConfig, spec: &SystemSpec, grid: &TimeGrid) -> Result<PathEnsemble, CliError> {
    let ens = episde::integrate::simulate(
        spec,
        grid,
        config.num_paths,
        config.seed(),
        config.scheme,
        &integration(config),
    )?;
    if config.fail_on_divergence {
        if let Some(d) = ens.divergences().first() {
            return Err(CliError::Divergence(format!(
                "{} of {} {} paths became non-finite (first: path {} at t={})",
                ens.divergences().len(),
                ens.num_paths(),
                label(ens.kind()),
                d.path,
                d.time
            )));
        }
    }
    Ok(ens)
}

/// Simulates the semantics selected in `config`, epistemic first.
pub fn simulate_selected(
    config: &RunConfig,
    entry: &BenchmarkCatalogEntry,
    grid: &TimeGrid,
) -> Result<Vec<PathEnsemble>, CliError> {
    let mut out = Vec::new();
    if config.semantics.includes_epistemic() {
        out.push(simulate_one(config, &entry.epistemic, grid)?);
    }
    if config.semantics.includes_aleatoric() {
        out.push(simulate_one(config, &entry.aleatoric, grid)?);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    finish(w, path)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(lock)?;
    Ok(())
}

/// `out.csv` → `out.parametric.csv` when several semantics share one name.
fn per_semantics_path(path: &Path, tag: &str, several: bool) -> PathBuf {
    if !several {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn summary_line(command: &str, config: &RunConfig, grid: &TimeGrid, started: Instant) {
    let step = grid.dt() / config.substeps as f64;
    let dt = if config.substeps > 1 {
        format!("{step} (recorded every {})", grid.dt())
    } else {
        step.to_string()
    };
    eprintln!(
        "{command}: benchmark={} semantics={} N={} T={} dt={dt} seed={} wall={:.3}s",
        config.benchmark,
        config.semantics.name(),
        config.num_paths,
        grid.t_end(),
        config.seed(),
        started.elapsed().as_secs_f64()
    );
}

#[derive(Serialize)]
struct SemanticsResult {
    semantics: &'static str,
    kind: SystemKind,
    num_paths: usize,
    dt: f64,
    divergences: usize,
    statistics: StatisticsReport,
}

fn statistics_for(
    ens: &PathEnsemble,
    entry: &BenchmarkCatalogEntry,
    config: &RunConfig,
) -> Result<StatisticsReport, CliError> {
    let steps = ens.grid().num_steps();
    let last = steps;
    let ks = entry
        .analytic_oracle
        .as_ref()
        .and_then(|o| o.law(ens.kind().is_epistemic(), ens.grid().t_end()).ok().flatten())
        .and_then(|law| marginal_law_distance(ens, last, &law, config.alpha).ok());
    Ok(StatisticsReport {
        marginal_summary: Some(summary_table(ens, config.level)?),
        variance_scaling: variance_scaling_fit(ens, config.t_min).ok(),
        increment_dependence: (steps >= 3)
            .then(|| increment_dependence(ens, steps / 3, 2 * steps / 3).ok())
            .flatten(),
        quadratic_variation: quadratic_variation(ens)
            .ok()
            .map(|q| QuadraticVariationSummary::from(&q)),
        marginal_law_distance: ks,
    })
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    results: T,
}

pub fn cmd_simulate(config: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let entry = load_entry(config)?;
    let grid = grid_for(config, &entry)?;
    let ensembles = simulate_selected(config, &entry, &grid)?;
    let several = ensembles.len() > 1;
    let outputs = &config.outputs;

    if let Some(path) = &outputs.paths_csv {
        let mut w = create(path)?;
        for (k, ens) in ensembles.iter().enumerate() {
            write_paths_csv(ens, Some(label(ens.kind())), k == 0, &mut w)?;
        }
        finish(w, path)?;
    }
    if let Some(path) = &outputs.ensemble_bin {
        for ens in &ensembles {
            let target = per_semantics_path(path, label(ens.kind()), several);
            let mut w = create(&target)?;
            write_binary(ens, &mut w)?;
            finish(w, &target)?;
        }
    }
    if let Some(path) = &outputs.summary_csv {
        for ens in &ensembles {
            let target = per_semantics_path(path, label(ens.kind()), several);
            let mut w = create(&target)?;
            write_summary_csv(&summary_table(ens, config.level)?, &mut w)?;
            finish(w, &target)?;
        }
    }
    if outputs.report_json.is_some()
        || outputs.paths_csv.is_none() && outputs.ensemble_bin.is_none() && outputs.summary_csv.is_none()
    {
        let results = ensembles
            .iter()
            .map(|ens| {
                Ok(SemanticsResult {
                    semantics: label(ens.kind()),
                    kind: ens.kind(),
                    num_paths: ens.num_paths(),
                    dt: ens.grid().dt(),
                    divergences: ens.divergences().len(),
                    statistics: statistics_for(ens, &entry, config)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let report = Report { config, results };
        match &outputs.report_json {
            Some(path) => write_json(path, &report)?,
            None => print_json(&report)?,
        }
    }
    summary_line("simulate", config, &grid, started);
    Ok(())
}

/// Rows `t,semantics,source,lo,hi` for one ensemble.
fn band_rows(
    ens: &PathEnsemble,
    entry: &BenchmarkCatalogEntry,
    level: f64,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let tag = label(ens.kind());
    let grid = ens.grid();
    for i in 0..grid.num_points() {
        let t = grid.time(i);
        let mut values: Vec<f64> = ens.marginal(i, 0).into_iter().filter(|v| v.is_finite()).collect();
        if !values.is_empty() {
            values.sort_by(f64::total_cmp);
            let lo = empirical_quantile(&values, (1.0 - level) / 2.0);
            let hi = empirical_quantile(&values, (1.0 + level) / 2.0);
            writeln!(out, "{t},{tag},empirical,{lo},{hi}")?;
        }
        let law = entry
            .analytic_oracle
            .as_ref()
            .and_then(|o| o.law(ens.kind().is_epistemic(), t).ok().flatten());
        if let Some(law) = law {
            let (lo, hi) = confidence_band(&law, level)?;
            writeln!(out, "{t},{tag},analytic,{lo},{hi}")?;
        }
    }
    Ok(())
}

pub fn cmd_figures(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let entry = load_entry(config)?;
    if !entry.epistemic.is_scalar() {
        return Err(CliError::Config("figures need a scalar-state benchmark".into()));
    }
    let grid = grid_for(config, &entry)?;
    let ensembles = simulate_selected(config, &entry, &grid)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let paths_csv = config
        .outputs
        .paths_csv
        .clone()
        .unwrap_or_else(|| out_dir.join("paths.csv"));
    let bands_csv = config
        .outputs
        .bands_csv
        .clone()
        .unwrap_or_else(|| out_dir.join("bands.csv"));

    let mut w = create(&paths_csv)?;
    for (k, ens) in ensembles.iter().enumerate() {
        let head = ens.head(config.highlighted_paths.min(ens.num_paths()));
        write_paths_csv(&head, Some(label(ens.kind())), k == 0, &mut w)?;
    }
    finish(w, &paths_csv)?;

    let mut w = create(&bands_csv)?;
    writeln!(w, "t,semantics,source,lo,hi")?;
    for ens in &ensembles {
        band_rows(ens, &entry, config.level, &mut w)?;
    }
    finish(w, &bands_csv)?;
    eprintln!("figures: wrote {} and {}", paths_csv.display(), bands_csv.display());
    summary_line("figures", config, &grid, started);
    Ok(())
}

fn constraint_spec(
    constraint: Option<&ConstraintConfig>,
    grid: &TimeGrid,
    entry: &BenchmarkCatalogEntry,
) -> Result<Option<ConstraintSpec>, CliError> {
    let Some(c) = constraint else {
        return Ok(None);
    };
    let spec = ConstraintSpec::new(c.safe_box.clone(), c.horizon.unwrap_or(grid.t_end()), c.delta)?;
    if let Some(warning) = spec.initial_state_warning(entry.epistemic.initial_state()) {
        eprintln!("warning: {warning}");
    }
    Ok(Some(spec))
}

fn cross_settings(config: &RunConfig) -> CrossSemanticsSettings {
    CrossSemanticsSettings {
        horizon: config.time.horizon,
        num_steps: config.time.num_steps,
        num_paths: config.num_paths,
        master_seed: config.seed(),
        scheme: config.scheme,
        integration: integration(config),
        confidence: config.confidence,
        growth_threshold: config.growth_threshold,
    }
}

pub fn cmd_compare(config: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let entry = load_entry(config)?;
    let grid = grid_for(config, &entry)?;
    let epistemic = simulate_one(config, &entry.epistemic, &grid)?;
    let aleatoric = simulate_one(config, &entry.aleatoric, &grid)?;
    let constraint = constraint_spec(config.constraint.as_ref(), &grid, &entry)?;
    let settings = CompareSettings {
        run: cross_settings(config),
        alpha: config.alpha,
        t_min: config.t_min,
        ..CompareSettings::default()
    };
    let report = compare_ensembles(&entry, &epistemic, &aleatoric, constraint.as_ref(), &settings)?;
    print!("{}", report.table());
    if let Some(rows) = Some(report.cross_semantics.verdict_rows()).filter(|r| !r.is_empty()) {
        print!("\n{}", verdict_table(&rows));
    }
    if let Some(path) = &config.outputs.report_json {
        write_json(
            path,
            &Report {
                config,
                results: &report,
            },
        )?;
    }
    summary_line("compare", config, &grid, started);
    Ok(())
}

fn stability_table(benchmark: &str, reports: &[StabilityReport]) -> String {
    let mut out = format!(
        "{:<18} {:<16} {:>8} {:>8} {:>10} {:>23} {:>12}\n",
        "benchmark", "semantics", "N", "T", "diverging", "ci95", "analytic"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<18} {:<16} {:>8} {:>8} {:>10.5} {:>23} {:>12}\n",
            benchmark,
            label(r.semantics),
            r.empirical_growth_rates.len(),
            r.horizon,
            r.fraction_diverging,
            format!("[{:.5}, {:.5}]", r.diverging_interval.0, r.diverging_interval.1),
            r.analytic_prediction
                .map_or_else(|| "-".to_string(), |p| format!("{p:.4e}")),
        ));
    }
    out
}

pub fn cmd_stability(config: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let entry = load_entry(config)?;
    let grid = grid_for(config, &entry)?;
    let ensembles = simulate_selected(config, &entry, &grid)?;
    let reports = ensembles
        .iter()
        .map(|ens| {
            let prediction = entry
                .analytic_oracle
                .as_ref()
                .and_then(|o| analytic_growth_probability(o, ens.kind(), grid.t_end(), config.growth_threshold));
            Ok(classify_stability(ens, config.growth_threshold)?.with_prediction(prediction))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    print!("{}", stability_table(entry.name, &reports));
    if let Some(path) = &config.outputs.report_json {
        write_json(
            path,
            &Report {
                config,
                results: &reports,
            },
        )?;
    }
    summary_line("stability", config, &grid, started);
    Ok(())
}

pub fn cmd_chance(config: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let entry = load_entry(config)?;
    let grid = grid_for(config, &entry)?;
    let constraint = constraint_spec(config.constraint.as_ref(), &grid, &entry)?
        .ok_or_else(|| CliError::Config("chance needs a constraint".into()))?;
    let ensembles = simulate_selected(config, &entry, &grid)?;
    let rows = ensembles
        .iter()
        .map(|ens| {
            let estimate = estimate_joint_chance(ens, &constraint, config.confidence)?;
            Ok(VerdictRow::new(entry.name, ens.kind(), ens.integration_dt(), &estimate))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    print!("{}", verdict_table(&rows));
    if let Some(path) = &config.outputs.report_json {
        write_json(path, &Report { config, results: &rows })?;
    }
    summary_line("chance", config, &grid, started);
    Ok(())
}
