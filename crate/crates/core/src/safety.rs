//! Joint chance constraints and stability classification.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{simulate, IntegrationSettings, PathEnsemble, SdeScheme, TimeGrid};
use crate::numerics::{beta_quantile, normal_cdf, normal_sf};
use crate::systems::{catalog_lookup, AnalyticOracle, BenchmarkCatalogEntry, CatalogOptions, SystemKind};

/// Safe box `𝒳`, horizon `T` and tolerated failure probability `δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSpec {
    safe_box: Vec<(f64, f64)>,
    horizon: f64,
    delta: f64,
}

impl ConstraintSpec {
    pub fn new(safe_box: Vec<(f64, f64)>, horizon: f64, delta: f64) -> Result<Self> {
        if safe_box.is_empty() {
            return Err(Error::InvalidArgument("safe box needs at least one dimension".into()));
        }
        for (d, &(lo, hi)) in safe_box.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "safe box dimension {d}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self {
            safe_box,
            horizon,
            delta,
        })
    }

    /// Scalar box `[−c, c]`.
    pub fn symmetric(half_width: f64, horizon: f64, delta: f64) -> Result<Self> {
        Self::new(vec![(-half_width, half_width)], horizon, delta)
    }

    pub fn safe_box(&self) -> &[(f64, f64)] {
        &self.safe_box
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.safe_box.len() && x.iter().zip(&self.safe_box).all(|(v, &(lo, hi))| lo <= *v && *v <= hi)
    }

    /// A warning when `x0` starts outside the box, which makes the
    /// constraint violated by every path.
    pub fn initial_state_warning(&self, x0: &[f64]) -> Option<String> {
        (!self.contains(x0)).then(|| format!("initial state {x0:?} lies outside the safe box {:?}", self.safe_box))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl Verdict {
    /// Satisfied iff the lower bound clears `1−δ`, Violated iff the upper
    /// bound falls short of it.
    pub fn from_interval(interval: (f64, f64), delta: f64) -> Self {
        let target = 1.0 - delta;
        if interval.0 >= target {
            Verdict::Satisfied
        } else if interval.1 < target {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Exact two-sided binomial interval for `successes` out of `trials`.
pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k, n - k + 1.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k)
    };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChanceEstimate {
    pub point_estimate: f64,
    pub confidence_interval: (f64, f64),
    pub confidence: f64,
    pub num_paths: usize,
    pub num_violations: usize,
    pub delta: f64,
    pub verdict: Verdict,
}

impl ChanceEstimate {
    pub fn from_counts(num_violations: usize, num_paths: usize, delta: f64, confidence: f64) -> Self {
        let safe = num_paths - num_violations;
        let confidence_interval = clopper_pearson(safe, num_paths, confidence);
        Self {
            point_estimate: safe as f64 / num_paths as f64,
            confidence_interval,
            confidence,
            num_paths,
            num_violations,
            delta,
            verdict: Verdict::from_interval(confidence_interval, delta),
        }
    }
}

/// Flags, per path, whether the trajectory leaves the safe box on `[0, T]`.
///
/// When `T` is the end of the grid and the ensemble tracked running extrema,
/// every integration step is checked; otherwise the recorded grid points
/// with `tᵢ ≤ T` are. Diverged paths count as violations.
pub fn violation_flags(ensemble: &PathEnsemble, spec: &ConstraintSpec) -> Result<Vec<bool>> {
    let grid = ensemble.grid();
    let n = ensemble.state_dim();
    if spec.safe_box.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "safe box has {} dimensions, state has {n}",
            spec.safe_box.len()
        )));
    }
    let tol = 1e-9 * grid.t_end().max(1.0);
    if spec.horizon > grid.t_end() + tol {
        return Err(Error::HorizonMismatch {
            horizon: spec.horizon,
            grid_end: grid.t_end(),
        });
    }
    let use_extrema = ensemble.extrema(0, 0).is_some() && spec.horizon >= grid.t_end() - tol;
    let last = (0..grid.num_points())
        .take_while(|&i| grid.time(i) <= spec.horizon + tol)
        .last()
        .unwrap_or(0);
    let mut diverged = vec![false; ensemble.num_paths()];
    for d in ensemble.divergences() {
        if d.time <= spec.horizon + tol || use_extrema {
            diverged[d.path] = true;
        }
    }
    Ok((0..ensemble.num_paths())
        .map(|j| {
            if diverged[j] {
                return true;
            }
            if use_extrema {
                (0..n).any(|d| {
                    let (lo, hi) = ensemble.extrema(j, d).expect("extrema tracked");
                    let (a, b) = spec.safe_box[d];
                    !(a <= lo && hi <= b)
                })
            } else {
                (0..=last).any(|i| !spec.contains(ensemble.state(j, i)))
            }
        })
        .collect())
}

pub fn estimate_joint_chance(
    ensemble: &PathEnsemble,
    spec: &ConstraintSpec,
    confidence: f64,
) -> Result<ChanceEstimate> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0,1), got {confidence}"
        )));
    }
    let flags = violation_flags(ensemble, spec)?;
    let violations = flags.iter().filter(|&&v| v).count();
    Ok(ChanceEstimate::from_counts(
        violations,
        flags.len(),
        spec.delta,
        confidence,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub semantics: SystemKind,
    /// `(1/T)·ln|x(T)/x₀|`; `+∞` for diverged paths. Not serialized.
    #[serde(skip)]
    pub empirical_growth_rates: Vec<f64>,
    pub growth_threshold: f64,
    pub horizon: f64,
    pub num_diverging: usize,
    pub fraction_diverging: f64,
    /// 95% Clopper–Pearson interval for `fraction_diverging`.
    pub diverging_interval: (f64, f64),
    pub analytic_prediction: Option<f64>,
}

impl StabilityReport {
    pub fn with_prediction(mut self, prediction: Option<f64>) -> Self {
        self.analytic_prediction = prediction;
        self
    }
}

pub fn classify_stability(ensemble: &PathEnsemble, growth_threshold: f64) -> Result<StabilityReport> {
    if ensemble.state_dim() != 1 {
        return Err(Error::UnsupportedDimension(ensemble.state_dim()));
    }
    let grid = ensemble.grid();
    let horizon = grid.t_end();
    let end = grid.num_steps();
    let rates: Vec<f64> = (0..ensemble.num_paths())
        .map(|j| {
            let x0 = ensemble.value(j, 0, 0);
            if x0 == 0.0 {
                return Err(Error::ZeroInitialState);
            }
            let x = ensemble.value(j, end, 0);
            Ok(if x.is_finite() {
                (x / x0).abs().ln() / horizon
            } else {
                f64::INFINITY
            })
        })
        .collect::<Result<_>>()?;
    let num_diverging = rates.iter().filter(|&&r| r > growth_threshold).count();
    let n = rates.len();
    Ok(StabilityReport {
        semantics: ensemble.kind(),
        empirical_growth_rates: rates,
        growth_threshold,
        horizon,
        num_diverging,
        fraction_diverging: num_diverging as f64 / n as f64,
        diverging_interval: clopper_pearson(num_diverging, n, 0.95),
        analytic_prediction: None,
    })
}

fn gaussian_exceedance(mean: f64, std_dev: f64, threshold: f64) -> f64 {
    if std_dev > 0.0 {
        normal_sf((threshold - mean) / std_dev)
    } else if mean > threshold {
        1.0
    } else {
        0.0
    }
}

/// Closed-form `P(growth rate > threshold)` over horizon `T`, where known.
pub fn analytic_growth_probability(
    oracle: &AnalyticOracle,
    kind: SystemKind,
    horizon: f64,
    threshold: f64,
) -> Option<f64> {
    match (*oracle, kind) {
        (
            AnalyticOracle::LinearFeedback {
                theta_bar,
                prior_variance,
                gain,
                ..
            },
            SystemKind::ParametricOde,
        ) => Some(gaussian_exceedance(theta_bar + gain, prior_variance.sqrt(), threshold)),
        (
            AnalyticOracle::LinearFeedback {
                theta_bar,
                prior_variance,
                gain,
                ..
            },
            SystemKind::ItoSde,
        ) => Some(gaussian_exceedance(
            theta_bar + gain - 0.5 * prior_variance,
            (prior_variance / horizon).sqrt(),
            threshold,
        )),
        (
            AnalyticOracle::DiscreteMoments {
                theta_bar,
                prior_variance,
                ..
            },
            SystemKind::DiscreteMultiplicative,
        ) => {
            // ln|θ| > r  ⇔  |θ| > eʳ
            let s = prior_variance.sqrt();
            let e = threshold.exp();
            Some(if s > 0.0 {
                normal_sf((e - theta_bar) / s) + normal_cdf((-e - theta_bar) / s)
            } else if theta_bar.abs() > e {
                1.0
            } else {
                0.0
            })
        }
        _ => None,
    }
}

/// Knobs shared by both semantics in [`cross_semantics_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSemanticsSettings {
    /// Continuous horizon; discrete pairs run `num_steps` unit steps instead.
    pub horizon: f64,
    pub num_steps: usize,
    pub num_paths: usize,
    pub master_seed: u64,
    pub scheme: SdeScheme,
    pub integration: IntegrationSettings,
    pub confidence: f64,
    pub growth_threshold: f64,
}

impl Default for CrossSemanticsSettings {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            num_steps: 300,
            num_paths: 10_000,
            master_seed: 0,
            scheme: SdeScheme::EulerMaruyama,
            integration: IntegrationSettings::default(),
            confidence: 0.95,
            growth_threshold: 0.0,
        }
    }
}

impl CrossSemanticsSettings {
    pub fn grid(&self, discrete: bool) -> Result<TimeGrid> {
        if discrete {
            TimeGrid::discrete(self.num_steps)
        } else {
            TimeGrid::new(self.horizon, self.num_steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticsOutcome {
    pub semantics: SystemKind,
    pub chance: Option<ChanceEstimate>,
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossSemanticsReport {
    pub benchmark: String,
    pub dt: f64,
    pub epistemic: SemanticsOutcome,
    pub aleatoric: SemanticsOutcome,
    pub chance_agree: Option<bool>,
    /// Whether the 95% intervals of the diverging fractions overlap.
    pub stability_agree: Option<bool>,
}

/// Stability verdicts agree when the two diverging-fraction intervals
/// overlap.
pub fn stability_agreement(a: &StabilityReport, b: &StabilityReport) -> bool {
    a.diverging_interval.0 <= b.diverging_interval.1 && b.diverging_interval.0 <= a.diverging_interval.1
}

/// Runs both semantics of a catalog pair with matched `N`, grid and master
/// seed, then evaluates the chance constraint (when given) and stability
/// (scalar state with `x₀ ≠ 0`).
pub fn cross_semantics_report(
    catalog_name: &str,
    options: &CatalogOptions,
    constraint: Option<&ConstraintSpec>,
    settings: &CrossSemanticsSettings,
) -> Result<CrossSemanticsReport> {
    let entry = catalog_lookup(catalog_name, options)?;
    let grid = settings.grid(entry.is_discrete())?;
    let run = |spec| {
        simulate(
            spec,
            &grid,
            settings.num_paths,
            settings.master_seed,
            settings.scheme,
            &settings.integration,
        )
    };
    let epistemic = run(&entry.epistemic)?;
    let aleatoric = run(&entry.aleatoric)?;
    cross_semantics_from_ensembles(&entry, &epistemic, &aleatoric, constraint, settings)
}

/// [`cross_semantics_report`] over ensembles that were already simulated.
pub fn cross_semantics_from_ensembles(
    entry: &BenchmarkCatalogEntry,
    epistemic: &PathEnsemble,
    aleatoric: &PathEnsemble,
    constraint: Option<&ConstraintSpec>,
    settings: &CrossSemanticsSettings,
) -> Result<CrossSemanticsReport> {
    let evaluate = |ens: &PathEnsemble| -> Result<SemanticsOutcome> {
        let chance = constraint
            .map(|c| estimate_joint_chance(ens, c, settings.confidence))
            .transpose()?;
        let stability = if ens.state_dim() == 1 && ens.value(0, 0, 0) != 0.0 {
            let report = classify_stability(ens, settings.growth_threshold)?;
            let prediction = entry.analytic_oracle.as_ref().and_then(|o| {
                analytic_growth_probability(o, ens.kind(), ens.grid().t_end(), settings.growth_threshold)
            });
            Some(report.with_prediction(prediction))
        } else {
            None
        };
        Ok(SemanticsOutcome {
            semantics: ens.kind(),
            chance,
            stability,
        })
    };
    let epistemic_outcome = evaluate(epistemic)?;
    let aleatoric_outcome = evaluate(aleatoric)?;
    let chance_agree = match (&epistemic_outcome.chance, &aleatoric_outcome.chance) {
        (Some(a), Some(b)) => Some(a.verdict == b.verdict),
        _ => None,
    };
    let stability_agree = match (&epistemic_outcome.stability, &aleatoric_outcome.stability) {
        (Some(a), Some(b)) => Some(stability_agreement(a, b)),
        _ => None,
    };
    Ok(CrossSemanticsReport {
        benchmark: entry.name.to_string(),
        dt: epistemic.grid().dt(),
        epistemic: epistemic_outcome,
        aleatoric: aleatoric_outcome,
        chance_agree,
        stability_agree,
    })
}

/// One line of the verdict table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub benchmark: String,
    pub semantics: String,
    #[serde(rename = "N")]
    pub num_paths: usize,
    pub dt: f64,
    pub point_estimate: f64,
    pub ci: [f64; 2],
    pub delta: f64,
    pub verdict: &'static str,
}

impl VerdictRow {
    pub fn new(benchmark: &str, semantics: SystemKind, dt: f64, estimate: &ChanceEstimate) -> Self {
        Self {
            benchmark: benchmark.to_string(),
            semantics: semantics.name().to_string(),
            num_paths: estimate.num_paths,
            dt,
            point_estimate: estimate.point_estimate,
            ci: [estimate.confidence_interval.0, estimate.confidence_interval.1],
            delta: estimate.delta,
            verdict: estimate.verdict.name(),
        }
    }
}

impl CrossSemanticsReport {
    pub fn verdict_rows(&self) -> Vec<VerdictRow> {
        [&self.epistemic, &self.aleatoric]
            .into_iter()
            .filter_map(|o| {
                o.chance
                    .as_ref()
                    .map(|c| VerdictRow::new(&self.benchmark, o.semantics, self.dt, c))
            })
            .collect()
    }
}

/// Aligned plain-text rendering of verdict rows.
pub fn verdict_table(rows: &[VerdictRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:<24} {:>8} {:>10} {:>9} {:>21} {:>6}  verdict",
        "benchmark", "semantics", "N", "dt", "estimate", "ci", "delta"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:<24} {:>8} {:>10.3e} {:>9.5} {:>21} {:>6}  {}",
            r.benchmark,
            r.semantics,
            r.num_paths,
            r.dt,
            r.point_estimate,
            format!("[{:.5}, {:.5}]", r.ci[0], r.ci[1]),
            r.delta,
            r.verdict
        );
    }
    out
}
