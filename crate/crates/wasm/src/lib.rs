//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain numbers, runs both semantics of a catalog
//! benchmark and returns a JSON string. The `*_json` functions hold the
//! logic and run natively as well.

use episde::analytic::confidence_band;
use episde::evidence::{run_compare, CompareSettings};
use episde::safety::{cross_semantics_report, ConstraintSpec, CrossSemanticsSettings};
use episde::stats::empirical_quantile;
use episde::{catalog_lookup, CatalogOptions, PathEnsemble, Result, SdeScheme};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Paths above this count are refused; the page runs on one thread.
pub const MAX_PATHS: usize = 50_000;

fn options(theta_bar: f64) -> CatalogOptions {
    CatalogOptions {
        theta_bar: Some(theta_bar),
        ..CatalogOptions::default()
    }
}

fn settings(num_paths: usize, horizon: f64, steps: usize, seed: u64) -> Result<CrossSemanticsSettings> {
    if num_paths > MAX_PATHS {
        return Err(episde::Error::InvalidArgument(format!(
            "at most {MAX_PATHS} paths in the browser, got {num_paths}"
        )));
    }
    Ok(CrossSemanticsSettings {
        horizon,
        num_steps: steps,
        num_paths,
        master_seed: seed,
        ..CrossSemanticsSettings::default()
    })
}

#[derive(Serialize)]
struct SemanticsPaths {
    label: &'static str,
    paths: Vec<Vec<f64>>,
    empirical: Vec<[f64; 2]>,
    analytic: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct PathsView {
    benchmark: String,
    t: Vec<f64>,
    level: f64,
    semantics: Vec<SemanticsPaths>,
}

fn view(
    ens: &PathEnsemble,
    label: &'static str,
    oracle: Option<&episde::systems::AnalyticOracle>,
    highlight: usize,
    level: f64,
) -> Result<SemanticsPaths> {
    let grid = ens.grid();
    let paths = (0..highlight.min(ens.num_paths()))
        .map(|j| ens.path(j).to_vec())
        .collect();
    let mut empirical = Vec::with_capacity(grid.num_points());
    for i in 0..grid.num_points() {
        let mut v: Vec<f64> = ens.marginal(i, 0).into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        empirical.push(if v.is_empty() {
            [f64::NAN, f64::NAN]
        } else {
            [
                empirical_quantile(&v, (1.0 - level) / 2.0),
                empirical_quantile(&v, (1.0 + level) / 2.0),
            ]
        });
    }
    let analytic = match oracle {
        Some(o) => {
            let mut rows = Vec::with_capacity(grid.num_points());
            for i in 0..grid.num_points() {
                match o.law(ens.kind().is_epistemic(), grid.time(i))? {
                    Some(law) => {
                        let (lo, hi) = confidence_band(&law, level)?;
                        rows.push([lo, hi]);
                    }
                    None => rows.push([f64::NAN, f64::NAN]),
                }
            }
            Some(rows)
        }
        None => None,
    };
    Ok(SemanticsPaths {
        label,
        paths,
        empirical,
        analytic,
    })
}

/// Sample paths of both semantics with empirical and analytic bands.
pub fn sample_paths_json(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
    highlight: usize,
) -> Result<String> {
    let entry = catalog_lookup(benchmark, &options(theta_bar))?;
    let s = settings(num_paths, horizon, steps, seed)?;
    let grid = s.grid(entry.is_discrete())?;
    let run =
        |spec| episde::integrate::simulate(spec, &grid, num_paths, seed, SdeScheme::EulerMaruyama, &s.integration);
    let level = 0.95;
    let oracle = entry.analytic_oracle.as_ref();
    let (a, b) = if entry.is_discrete() {
        ("multiplicative", "additive")
    } else {
        ("parametric", "sde")
    };
    let out = PathsView {
        benchmark: entry.name.to_string(),
        t: (0..grid.num_points()).map(|i| grid.time(i)).collect(),
        level,
        semantics: vec![
            view(&run(&entry.epistemic)?, a, oracle, highlight, level)?,
            view(&run(&entry.aleatoric)?, b, oracle, highlight, level)?,
        ],
    };
    serde_json::to_string(&out).map_err(|e| episde::Error::Format(e.to_string()))
}

/// Every discriminator on both semantics.
pub fn compare_json(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
) -> Result<String> {
    let settings = CompareSettings {
        run: settings(num_paths, horizon, steps, seed)?,
        ..CompareSettings::default()
    };
    run_compare(benchmark, &options(theta_bar), None, &settings)?.to_json()
}

/// Joint chance constraint `P(x ∈ [lo, hi] on [0, T]) ≥ 1 − δ` and the
/// stability comparison for both semantics.
#[allow(clippy::too_many_arguments)]
pub fn chance_json(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    delta: f64,
) -> Result<String> {
    let constraint = ConstraintSpec::new(vec![(lo, hi)], horizon, delta)?;
    let report = cross_semantics_report(
        benchmark,
        &options(theta_bar),
        Some(&constraint),
        &settings(num_paths, horizon, steps, seed)?,
    )?;
    serde_json::to_string(&report).map_err(|e| episde::Error::Format(e.to_string()))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = samplePaths)]
pub fn sample_paths(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u32,
    highlight: usize,
) -> std::result::Result<String, JsError> {
    js(sample_paths_json(
        benchmark,
        theta_bar,
        num_paths,
        horizon,
        steps,
        seed.into(),
        highlight,
    ))
}

#[wasm_bindgen]
pub fn compare(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(compare_json(
        benchmark,
        theta_bar,
        num_paths,
        horizon,
        steps,
        seed.into(),
    ))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn chance(
    benchmark: &str,
    theta_bar: f64,
    num_paths: usize,
    horizon: f64,
    steps: usize,
    seed: u32,
    lo: f64,
    hi: f64,
    delta: f64,
) -> std::result::Result<String, JsError> {
    js(chance_json(
        benchmark,
        theta_bar,
        num_paths,
        horizon,
        steps,
        seed.into(),
        lo,
        hi,
        delta,
    ))
}
