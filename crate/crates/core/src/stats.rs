//! Ensemble statistics that tell the two uncertainty semantics apart.
//!
//! Non-finite states (paths that diverged) are left out of every per-time
//! statistic; the reported `num_paths` is the number actually used.

use std::io::Write;

use serde::Serialize;

use crate::analytic::MarginalLaw;
use crate::error::{Error, Result};
use crate::integrate::PathEnsemble;
use crate::numerics::KahanSum;

/// Mean, unbiased variance and an empirical quantile band at one grid index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSummary {
    pub time_index: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    pub level: f64,
    pub num_paths: usize,
}

/// Least-squares fit of `ln Var[x(t)]` against `ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
    pub num_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticVariation {
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// One-sample Kolmogorov–Smirnov comparison against an analytic law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub alpha: f64,
    pub critical_value: f64,
    /// `c(α)/√N`.
    pub threshold: f64,
    pub num_paths: usize,
    pub passed: bool,
}

fn finite_values(values: Vec<f64>) -> Vec<f64> {
    values.into_iter().filter(|v| v.is_finite()).collect()
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<KahanSum>().value() / n;
    let ss: KahanSum = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, ss.value() / (n - 1.0))
}

/// Type-7 quantile of sorted data: linear interpolation between order
/// statistics at position `(N−1)q`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn marginal_summary(ensemble: &PathEnsemble, time_index: usize, level: f64) -> Result<MarginalSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0,1), got {level}")));
    }
    if time_index >= ensemble.grid().num_points() {
        return Err(Error::InvalidArgument(format!(
            "time index {time_index} outside grid of {} points",
            ensemble.grid().num_points()
        )));
    }
    let n = ensemble.state_dim();
    let mut summary = MarginalSummary {
        time_index,
        time: ensemble.grid().time(time_index),
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        band_lower: Vec::with_capacity(n),
        band_upper: Vec::with_capacity(n),
        level,
        num_paths: 0,
    };
    for d in 0..n {
        let mut values = finite_values(ensemble.marginal(time_index, d));
        if values.len() < 2 {
            return Err(Error::InsufficientPaths {
                required: 2,
                found: values.len(),
            });
        }
        let (mean, variance) = mean_and_variance(&values);
        values.sort_by(f64::total_cmp);
        summary.mean.push(mean);
        summary.variance.push(variance.max(0.0));
        summary
            .band_lower
            .push(empirical_quantile(&values, (1.0 - level) / 2.0));
        summary
            .band_upper
            .push(empirical_quantile(&values, (1.0 + level) / 2.0));
        summary.num_paths = if d == 0 {
            values.len()
        } else {
            summary.num_paths.min(values.len())
        };
    }
    Ok(summary)
}

/// Summaries at every recorded grid point.
pub fn summary_table(ensemble: &PathEnsemble, level: f64) -> Result<Vec<MarginalSummary>> {
    (0..ensemble.grid().num_points())
        .map(|i| marginal_summary(ensemble, i, level))
        .collect()
}

/// Fraction of finite paths whose state `dim` at `time_index` lies in `[lo, hi]`.
pub fn band_coverage(ensemble: &PathEnsemble, time_index: usize, dim: usize, band: (f64, f64)) -> f64 {
    let values = finite_values(ensemble.marginal(time_index, dim));
    let inside = values.iter().filter(|&&v| band.0 <= v && v <= band.1).count();
    inside as f64 / values.len() as f64
}

/// Fits `Var[x(t)] ∝ t^α` over grid points with `t ≥ t_min`, where the
/// variance of a vector state is the trace of its covariance. `t_min`
/// defaults to ten integration steps.
pub fn variance_scaling_fit(ensemble: &PathEnsemble, t_min: Option<f64>) -> Result<ScalingFit> {
    let grid = ensemble.grid();
    let t_min = t_min.unwrap_or(10.0 * ensemble.integration_dt());
    if !(t_min > 0.0) {
        return Err(Error::InvalidArgument(format!("t_min must be positive, got {t_min}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..grid.num_points() {
        let t = grid.time(i);
        if t < t_min * (1.0 - 1e-12) {
            continue;
        }
        let mut total = 0.0;
        for d in 0..ensemble.state_dim() {
            let values = finite_values(ensemble.marginal(i, d));
            if values.len() < 2 {
                return Err(Error::InsufficientPaths {
                    required: 2,
                    found: values.len(),
                });
            }
            total += mean_and_variance(&values).1;
        }
        if !(total > 0.0) {
            return Err(Error::DegenerateVariance(format!("zero ensemble variance at t={t}")));
        }
        xs.push(t.ln());
        ys.push(total.ln());
    }
    if xs.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "variance fit needs at least 5 grid points with t >= {t_min}, found {}",
            xs.len()
        )));
    }
    let (exponent, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(ScalingFit {
        exponent,
        intercept,
        r_squared,
        fit_range: (xs[0].exp(), xs[xs.len() - 1].exp()),
        num_points: xs.len(),
    })
}

/// Slope, intercept and R² of the ordinary least-squares line.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let (mx, _) = mean_and_variance_or_zero(xs);
    let (my, _) = mean_and_variance_or_zero(ys);
    let sxy: KahanSum = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: KahanSum = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let syy: KahanSum = ys.iter().map(|y| (y - my) * (y - my)).collect();
    let slope = sxy.value() / sxx.value();
    let intercept = my - slope * mx;
    let r_squared = if syy.value() > 0.0 {
        sxy.value() * sxy.value() / (sxx.value() * syy.value())
    } else {
        1.0
    };
    (slope, intercept, r_squared)
}

fn mean_and_variance_or_zero(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        (values.first().copied().unwrap_or(0.0), 0.0)
    } else {
        mean_and_variance(values)
    }
}

/// Pearson correlation of `x(t₁)−x(0)` and `x(t₂)−x(t₁)` across paths
/// (scalar state; diverged paths dropped).
pub fn increment_dependence(ensemble: &PathEnsemble, t1_index: usize, t2_index: usize) -> Result<f64> {
    if ensemble.state_dim() != 1 {
        return Err(Error::UnsupportedDimension(ensemble.state_dim()));
    }
    if !(0 < t1_index && t1_index < t2_index && t2_index < ensemble.grid().num_points()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t1_index < t2_index <= {}, got ({t1_index}, {t2_index})",
            ensemble.grid().num_steps()
        )));
    }
    let mut first = Vec::with_capacity(ensemble.num_paths());
    let mut second = Vec::with_capacity(ensemble.num_paths());
    for j in 0..ensemble.num_paths() {
        let (a, b, c) = (
            ensemble.value(j, 0, 0),
            ensemble.value(j, t1_index, 0),
            ensemble.value(j, t2_index, 0),
        );
        if a.is_finite() && b.is_finite() && c.is_finite() {
            first.push(b - a);
            second.push(c - b);
        }
    }
    if first.len() < 100 {
        return Err(Error::InsufficientPaths {
            required: 100,
            found: first.len(),
        });
    }
    pearson(&first, &second)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, va) = mean_and_variance(a);
    let (mb, vb) = mean_and_variance(b);
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(Error::DegenerateVariance("increment with zero variance".into()));
    }
    let cov: KahanSum = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let r = cov.value() / ((a.len() - 1) as f64 * (va * vb).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

/// Per-path `Σᵢ |x_{i+1} − xᵢ|²` over the recorded grid, with the mean and
/// standard deviation over finite paths.
pub fn quadratic_variation(ensemble: &PathEnsemble) -> Result<QuadraticVariation> {
    if ensemble.grid().num_steps() < 2 {
        return Err(Error::InvalidArgument(
            "quadratic variation needs at least 2 steps".into(),
        ));
    }
    let n = ensemble.state_dim();
    let per_path: Vec<f64> = (0..ensemble.num_paths())
        .map(|j| {
            let p = ensemble.path(j);
            p.windows(2 * n)
                .step_by(n)
                .flat_map(|w| (0..n).map(move |d| (w[n + d] - w[d]) * (w[n + d] - w[d])))
                .collect::<KahanSum>()
                .value()
        })
        .collect();
    let finite: Vec<f64> = per_path.iter().copied().filter(|v| v.is_finite()).collect();
    let (mean, variance) = mean_and_variance_or_zero(&finite);
    Ok(QuadraticVariation {
        per_path,
        mean,
        std_dev: variance.sqrt(),
    })
}

/// Asymptotic Kolmogorov critical value `c(α) = √(−ln(α/2)/2)`.
pub fn ks_critical_value(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Supremum distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_test(sample: &mut [f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<KsOutcome> {
    if sample.len() < 1000 {
        return Err(Error::InsufficientPaths {
            required: 1000,
            found: sample.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let statistic = ks_statistic(sample, cdf);
    let critical_value = ks_critical_value(alpha);
    let threshold = critical_value / (sample.len() as f64).sqrt();
    Ok(KsOutcome {
        statistic,
        alpha,
        critical_value,
        threshold,
        num_paths: sample.len(),
        passed: statistic < threshold,
    })
}

/// KS test of the ensemble marginal at `time_index` against `law`.
pub fn marginal_law_distance(
    ensemble: &PathEnsemble,
    time_index: usize,
    law: &MarginalLaw,
    alpha: f64,
) -> Result<KsOutcome> {
    if ensemble.state_dim() != 1 {
        return Err(Error::UnsupportedDimension(ensemble.state_dim()));
    }
    if time_index >= ensemble.grid().num_points() {
        return Err(Error::InvalidArgument(format!("time index {time_index} outside grid")));
    }
    let mut sample = finite_values(ensemble.marginal(time_index, 0));
    ks_test(&mut sample, |x| law.cdf(x), alpha)
}

pub const SUMMARY_CSV_HEADER: &str = "t,mean,variance,band_lo,band_hi,n_paths";

/// Writes one row per summary and state dimension.
pub fn write_summary_csv<W: Write>(summaries: &[MarginalSummary], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for s in summaries {
        for d in 0..s.mean.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.time, s.mean[d], s.variance[d], s.band_lower[d], s.band_upper[d], s.num_paths
            )?;
        }
    }
    Ok(())
}

/// Statistics keyed by name; absent entries are omitted from the JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatisticsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_summary: Option<Vec<MarginalSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_scaling: Option<ScalingFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increment_dependence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadratic_variation: Option<QuadraticVariationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_law_distance: Option<KsOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticVariationSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub num_paths: usize,
}

impl From<&QuadraticVariation> for QuadraticVariationSummary {
    fn from(qv: &QuadraticVariation) -> Self {
        QuadraticVariationSummary {
            mean: qv.mean,
            std_dev: qv.std_dev,
            num_paths: qv.per_path.len(),
        }
    }
}

impl StatisticsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}
