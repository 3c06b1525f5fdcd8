//! The compare suite: every discriminator evaluated on both semantics of a
//! catalog pair, reduced to a pass/fail table of distinctness evidence.

use std::fmt::Write as _;

use serde::Serialize;

use crate::analytic::MarginalLaw;
use crate::error::{Error, Result};
use crate::integrate::{simulate, PathEnsemble};
use crate::numerics::KahanSum;
use crate::safety::{cross_semantics_from_ensembles, ConstraintSpec, CrossSemanticsReport, CrossSemanticsSettings};
use crate::stats::{increment_dependence, marginal_law_distance, variance_scaling_fit, KsOutcome, ScalingFit};
use crate::systems::{catalog_lookup, AnalyticOracle, BenchmarkCatalogEntry, CatalogOptions, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareSettings {
    pub run: CrossSemanticsSettings,
    /// Significance of the KS tests.
    pub alpha: f64,
    /// Lower end of the variance-scaling fit; defaults to ten steps
    /// (continuous) or one step (discrete).
    pub t_min: Option<f64>,
    /// Grid indices `(t₁, t₂)` of the increment test and of the KS tests
    /// (at `t₂`); defaults to one and two thirds of the grid, or steps 1
    /// and 2 for discrete pairs.
    pub increment_indices: Option<(usize, usize)>,
    /// Ensembles whose relative spread `std/(1+|mean|)` never exceeds this
    /// are reported as indistinguishable without further testing.
    pub resolution: f64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            run: CrossSemanticsSettings::default(),
            alpha: 0.01,
            t_min: None,
            increment_indices: None,
            resolution: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    /// The statistic separates the two semantics.
    Distinct,
    /// The statistic does not separate them.
    Indistinguishable,
    /// Both ensembles agree with their own closed-form law.
    Consistent,
    /// At least one ensemble disagrees with its own closed-form law.
    Inconsistent,
}

impl Evidence {
    pub fn passed(self) -> bool {
        matches!(self, Evidence::Distinct | Evidence::Consistent)
    }

    pub fn name(self) -> &'static str {
        match self {
            Evidence::Distinct => "distinct",
            Evidence::Indistinguishable => "indistinguishable",
            Evidence::Consistent => "consistent",
            Evidence::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminatorRow {
    pub name: &'static str,
    pub epistemic: f64,
    pub aleatoric: f64,
    /// Closed-form values for (epistemic, aleatoric) where known.
    pub expected: Option<(f64, f64)>,
    pub evidence: Evidence,
    pub pass: bool,
}

impl DiscriminatorRow {
    fn new(name: &'static str, values: (f64, f64), expected: Option<(f64, f64)>, evidence: Evidence) -> Self {
        Self {
            name,
            epistemic: values.0,
            aleatoric: values.1,
            expected,
            evidence,
            pass: evidence.passed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticsStatistics {
    pub semantics: SystemKind,
    pub variance_scaling: Option<ScalingFit>,
    pub increment_dependence: Option<f64>,
    /// Mean QV on the full grid and on every other grid point.
    pub quadratic_variation: Option<(f64, f64)>,
    pub ks_own_law: Option<KsOutcome>,
    pub ks_swapped_law: Option<KsOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceTrajectoryRow {
    pub t: f64,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub epistemic_oracle: Option<f64>,
    pub aleatoric_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceReport {
    pub benchmark: String,
    pub num_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub increment_times: (f64, f64),
    /// Largest relative spread seen in either ensemble.
    pub max_relative_spread: f64,
    pub degenerate: bool,
    pub rows: Vec<DiscriminatorRow>,
    pub epistemic: SemanticsStatistics,
    pub aleatoric: SemanticsStatistics,
    pub variance_trajectory: Vec<VarianceTrajectoryRow>,
    pub cross_semantics: CrossSemanticsReport,
}

/// Simulates both semantics of `catalog_name` and runs the full suite.
pub fn run_compare(
    catalog_name: &str,
    options: &CatalogOptions,
    constraint: Option<&ConstraintSpec>,
    settings: &CompareSettings,
) -> Result<EvidenceReport> {
    let entry = catalog_lookup(catalog_name, options)?;
    let grid = settings.run.grid(entry.is_discrete())?;
    let run = |spec| {
        simulate(
            spec,
            &grid,
            settings.run.num_paths,
            settings.run.master_seed,
            settings.run.scheme,
            &settings.run.integration,
        )
    };
    let epistemic = run(&entry.epistemic)?;
    let aleatoric = run(&entry.aleatoric)?;
    compare_ensembles(&entry, &epistemic, &aleatoric, constraint, settings)
}

fn sample_moments(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let finite: Vec<f64> = values.filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n < 2 {
        return (finite.first().copied().unwrap_or(f64::NAN), f64::NAN, n);
    }
    let mean = finite.iter().copied().collect::<KahanSum>().value() / n as f64;
    let ss: KahanSum = finite.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, ss.value() / (n - 1) as f64, n)
}

fn max_relative_spread(ens: &PathEnsemble) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..ens.grid().num_points() {
        for d in 0..ens.state_dim() {
            let (mean, var, _) = sample_moments((0..ens.num_paths()).map(|j| ens.value(j, i, d)));
            if var.is_finite() {
                worst = worst.max(var.sqrt() / (1.0 + mean.abs()));
            }
        }
    }
    worst
}

/// Mean quadratic variation over recorded points `0, stride, 2·stride, …`
/// up to index `last`.
fn mean_qv(ens: &PathEnsemble, stride: usize, last: usize) -> f64 {
    let n = ens.state_dim();
    let per_path = (0..ens.num_paths()).map(|j| {
        let mut acc = KahanSum::new();
        let mut i = 0;
        while i + stride <= last {
            for d in 0..n {
                let dx = ens.value(j, i + stride, d) - ens.value(j, i, d);
                acc.add(dx * dx);
            }
            i += stride;
        }
        acc.value()
    });
    sample_moments(per_path).0
}

fn ks_against(ens: &PathEnsemble, index: usize, law: Option<MarginalLaw>, alpha: f64) -> Option<KsOutcome> {
    let law = law?;
    if ens.state_dim() != 1 {
        return None;
    }
    marginal_law_distance(ens, index, &law, alpha).ok()
}

fn fisher_z(r: f64) -> f64 {
    r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()
}

fn default_indices(steps: usize, discrete: bool) -> (usize, usize) {
    if discrete {
        (1, 2.min(steps))
    } else {
        (
            (steps as f64 / 3.0).round() as usize,
            (2.0 * steps as f64 / 3.0).round() as usize,
        )
    }
}

/// Runs the suite on ensembles that share grid, `N` and master seed.
pub fn compare_ensembles(
    entry: &BenchmarkCatalogEntry,
    epistemic: &PathEnsemble,
    aleatoric: &PathEnsemble,
    constraint: Option<&ConstraintSpec>,
    settings: &CompareSettings,
) -> Result<EvidenceReport> {
    if epistemic.grid() != aleatoric.grid() || epistemic.num_paths() != aleatoric.num_paths() {
        return Err(Error::DimensionMismatch(
            "compared ensembles need the same grid and N".into(),
        ));
    }
    let grid = *epistemic.grid();
    let discrete = entry.is_discrete();
    let steps = grid.num_steps();
    let (i1, i2) = settings
        .increment_indices
        .unwrap_or_else(|| default_indices(steps, discrete));
    let t_min = settings.t_min.or(if discrete { Some(1.0) } else { None });
    let oracle: Option<&AnalyticOracle> = entry.analytic_oracle.as_ref();
    let t_ks = grid.time(i2.min(steps));
    let law = |epi: bool| oracle.and_then(|o| o.law(epi, t_ks).ok().flatten());

    let statistics = |ens: &PathEnsemble, epi: bool| SemanticsStatistics {
        semantics: ens.kind(),
        variance_scaling: variance_scaling_fit(ens, t_min).ok(),
        increment_dependence: increment_dependence(ens, i1, i2).ok(),
        quadratic_variation: (!discrete && steps >= 4).then(|| {
            let last = steps - steps % 2;
            (mean_qv(ens, 1, last), mean_qv(ens, 2, last))
        }),
        ks_own_law: ks_against(ens, i2.min(steps), law(epi), settings.alpha),
        ks_swapped_law: ks_against(ens, i2.min(steps), law(!epi), settings.alpha),
    };
    let e_stats = statistics(epistemic, true);
    let a_stats = statistics(aleatoric, false);
    let cross = cross_semantics_from_ensembles(entry, epistemic, aleatoric, constraint, &settings.run)?;

    let spread = max_relative_spread(epistemic).max(max_relative_spread(aleatoric));
    let degenerate = spread <= settings.resolution;
    let separated = |distinct: bool| {
        if distinct && !degenerate {
            Evidence::Distinct
        } else {
            Evidence::Indistinguishable
        }
    };
    let scalar_drift = matches!(oracle, Some(AnalyticOracle::ScalarDrift { .. }));

    let mut rows = Vec::new();
    {
        let a = e_stats.variance_scaling.map_or(f64::NAN, |f| f.exponent);
        let b = a_stats.variance_scaling.map_or(f64::NAN, |f| f.exponent);
        rows.push(DiscriminatorRow::new(
            "variance_scaling_exponent",
            (a, b),
            scalar_drift.then_some((2.0, 1.0)),
            separated((a - b).abs() > 0.25),
        ));
    }
    {
        let a = e_stats.increment_dependence.unwrap_or(f64::NAN);
        let b = a_stats.increment_dependence.unwrap_or(f64::NAN);
        let n = epistemic.num_paths() as f64;
        let z = (fisher_z(a) - fisher_z(b)).abs() / (2.0 / (n - 3.0)).sqrt();
        rows.push(DiscriminatorRow::new(
            "increment_correlation",
            (a, b),
            scalar_drift.then_some((1.0, 0.0)),
            separated(z > 3.0),
        ));
    }
    if let (Some(a), Some(b)) = (e_stats.quadratic_variation, a_stats.quadratic_variation) {
        // Fine-grid QV over coarse-grid QV: 1/2 for smooth paths, 1 for Brownian ones.
        let (ra, rb) = (a.0 / a.1, b.0 / b.1);
        rows.push(DiscriminatorRow::new(
            "qv_refinement_ratio",
            (ra, rb),
            Some((0.5, 1.0)),
            separated((ra - rb).abs() > 0.25),
        ));
    }
    if let (Some(a), Some(b)) = (&e_stats.ks_own_law, &a_stats.ks_own_law) {
        let evidence = if a.passed && b.passed {
            Evidence::Consistent
        } else {
            Evidence::Inconsistent
        };
        rows.push(DiscriminatorRow::new(
            "ks_own_law",
            (a.statistic, b.statistic),
            None,
            evidence,
        ));
    }
    if let (Some(a), Some(b)) = (&e_stats.ks_swapped_law, &a_stats.ks_swapped_law) {
        rows.push(DiscriminatorRow::new(
            "ks_swapped_law",
            (a.statistic, b.statistic),
            None,
            separated(!a.passed && !b.passed),
        ));
    }
    if let (Some(a), Some(b)) = (&cross.epistemic.stability, &cross.aleatoric.stability) {
        rows.push(DiscriminatorRow::new(
            "stability_fraction_diverging",
            (a.fraction_diverging, b.fraction_diverging),
            a.analytic_prediction.zip(b.analytic_prediction),
            separated(cross.stability_agree == Some(false)),
        ));
    }
    if let (Some(a), Some(b)) = (&cross.epistemic.chance, &cross.aleatoric.chance) {
        rows.push(DiscriminatorRow::new(
            "joint_chance_probability",
            (a.point_estimate, b.point_estimate),
            None,
            separated(cross.chance_agree == Some(false)),
        ));
    }

    let variance_trajectory = variance_trajectory(epistemic, aleatoric, oracle);
    Ok(EvidenceReport {
        benchmark: entry.name.to_string(),
        num_paths: epistemic.num_paths(),
        horizon: grid.t_end(),
        dt: grid.dt(),
        master_seed: epistemic.master_seed(),
        increment_times: (grid.time(i1.min(steps)), t_ks),
        max_relative_spread: spread,
        degenerate,
        rows,
        epistemic: e_stats,
        aleatoric: a_stats,
        variance_trajectory,
        cross_semantics: cross,
    })
}

/// Variances of both ensembles (first state component) at up to about 50
/// evenly spaced recorded times, next to the closed-form values.
fn variance_trajectory(
    epistemic: &PathEnsemble,
    aleatoric: &PathEnsemble,
    oracle: Option<&AnalyticOracle>,
) -> Vec<VarianceTrajectoryRow> {
    let grid = epistemic.grid();
    let stride = grid.num_steps().div_ceil(50).max(1);
    let var = |ens: &PathEnsemble, i| sample_moments((0..ens.num_paths()).map(|j| ens.value(j, i, 0))).1;
    (0..grid.num_points())
        .step_by(stride)
        .map(|i| {
            let t = grid.time(i);
            let exact = |epi| oracle.and_then(|o| o.variance(epi, t).ok()).filter(|v| !v.is_nan());
            VarianceTrajectoryRow {
                t,
                epistemic: var(epistemic, i),
                aleatoric: var(aleatoric, i),
                epistemic_oracle: exact(true),
                aleatoric_oracle: exact(false),
            }
        })
        .collect()
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else {
        format!("{v:.5}")
    }
}

impl EvidenceReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Aligned plain-text table, one discriminator per line.
    pub fn table(&self) -> String {
        let (e, a) = (self.epistemic.semantics.name(), self.aleatoric.semantics.name());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} | N={} T={} dt={} seed={}{}",
            self.benchmark,
            self.num_paths,
            self.horizon,
            self.dt,
            self.master_seed,
            if self.degenerate {
                " | spread below resolution"
            } else {
                ""
            }
        );
        let _ = writeln!(
            out,
            "{:<30} {:>24} {:>24} {:>22}  result",
            "discriminator", e, a, "expected"
        );
        for r in &self.rows {
            let expected = r.expected.map_or_else(
                || "-".to_string(),
                |(x, y)| format!("{} / {}", fmt_value(x), fmt_value(y)),
            );
            let _ = writeln!(
                out,
                "{:<30} {:>24} {:>24} {:>22}  {} {}",
                r.name,
                fmt_value(r.epistemic),
                fmt_value(r.aleatoric),
                expected,
                if r.pass { "PASS" } else { "FAIL" },
                r.evidence.name()
            );
        }
        out
    }
}
