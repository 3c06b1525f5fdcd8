//! Closed-form laws for every solvable benchmark.
//!
//! With `θ ~ N(θ̄, σ²)`:
//!
//! | benchmark | random-parameter ODE | Brownian reformulation |
//! |---|---|---|
//! | `ẋ = θ`, `x₀` | `x₀ + θt ~ N(x₀ + θ̄t, σ²t²)` | `N(x₀ + θ̄t, σ²t)` |
//! | `ẋ = (θ+k)x` | `ln(x/x₀) ~ N((θ̄+k)t, σ²t²)` | `ln(x/x₀) ~ N((θ̄+k−σ²/2)t, σ²t)` |
//!
//! The unit-variance helpers mirror the catalog defaults; [`AnalyticOracle`]
//! carries the general parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_quantile, KahanSum};
use crate::systems::{AnalyticOracle, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawFamily {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// `x = sign · scale_factor · exp(Y)`, `Y ~ N(location, scale²)`.
    LogNormalSigned {
        location: f64,
        scale: f64,
        sign: f64,
        scale_factor: f64,
    },
}

/// Marginal distribution of a process at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalLaw {
    pub family: LawFamily,
    pub time: f64,
}

impl MarginalLaw {
    pub fn gaussian(mean: f64, variance: f64, time: f64) -> Self {
        Self {
            family: LawFamily::Gaussian {
                mean,
                variance: variance.max(0.0),
            },
            time,
        }
    }

    /// Law of `x₀·exp(Y)` with `Y ~ N(location, scale²)`. A zero scale
    /// collapses to the point mass at `x₀·exp(location)`.
    pub fn log_domain(x0: f64, location: f64, scale: f64, time: f64) -> Result<Self> {
        if x0 == 0.0 {
            return Err(Error::Undefined);
        }
        if scale == 0.0 {
            return Ok(Self::gaussian(x0 * location.exp(), 0.0, time));
        }
        Ok(Self {
            family: LawFamily::LogNormalSigned {
                location,
                scale,
                sign: x0.signum(),
                scale_factor: x0.abs(),
            },
            time,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            LawFamily::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    if x >= mean {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf((x - mean) / variance.sqrt())
                }
            }
            LawFamily::LogNormalSigned {
                location,
                scale,
                sign,
                scale_factor,
            } => {
                let y = sign * x / scale_factor;
                let upper = if y > 0.0 {
                    normal_cdf((y.ln() - location) / scale)
                } else {
                    0.0
                };
                if sign > 0.0 {
                    upper
                } else {
                    1.0 - upper
                }
            }
        }
    }

    /// Variance for Gaussian laws; `None` for log-domain laws.
    pub fn gaussian_variance(&self) -> Option<f64> {
        match self.family {
            LawFamily::Gaussian { variance, .. } => Some(variance),
            LawFamily::LogNormalSigned { .. } => None,
        }
    }

    /// Variance of either family.
    pub fn variance(&self) -> f64 {
        match self.family {
            LawFamily::Gaussian { variance, .. } => variance,
            LawFamily::LogNormalSigned {
                location,
                scale,
                scale_factor,
                ..
            } => {
                let s2 = scale * scale;
                scale_factor * scale_factor * (2.0 * location + s2).exp() * s2.exp_m1()
            }
        }
    }

    /// Center of the law: the mean for Gaussian laws, the median otherwise.
    pub fn center(&self) -> f64 {
        match self.family {
            LawFamily::Gaussian { mean, .. } => mean,
            LawFamily::LogNormalSigned {
                location,
                sign,
                scale_factor,
                ..
            } => sign * scale_factor * location.exp(),
        }
    }
}

/// Equal-tailed interval holding probability `level`.
pub fn confidence_band(law: &MarginalLaw, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(match law.family {
        LawFamily::Gaussian { mean, variance } => {
            let half = z * variance.sqrt();
            (mean - half, mean + half)
        }
        LawFamily::LogNormalSigned {
            location,
            scale,
            sign,
            scale_factor,
        } => {
            let lo = scale_factor * (location - z * scale).exp();
            let hi = scale_factor * (location + z * scale).exp();
            if sign > 0.0 {
                (lo, hi)
            } else {
                (-hi, -lo)
            }
        }
    })
}

/// `x(t) = θt` for `ẋ = θ`, `x(0) = 0`.
pub fn scalar_drift_parametric_value(t: f64, theta: f64) -> f64 {
    theta * t
}

/// `N(0, t²)`.
pub fn scalar_drift_parametric_law(t: f64) -> MarginalLaw {
    MarginalLaw::gaussian(0.0, t * t, t)
}

/// `N(0, t)`, the law of standard Brownian motion.
pub fn scalar_drift_sde_law(t: f64) -> MarginalLaw {
    MarginalLaw::gaussian(0.0, t, t)
}

/// `x(t₂) − x(t₁)` along `x = θt`, expressed through `x(t₁)`:
/// `(t₂/t₁ − 1)·x(t₁)`.
pub fn scalar_drift_increment(x_t1: f64, t1: f64, t2: f64) -> f64 {
    (t2 / t1 - 1.0) * x_t1
}

/// `x₀·e^{(θ+k)t}`.
pub fn feedback_parametric_value(t: f64, x0: f64, theta: f64, gain: f64) -> f64 {
    x0 * ((theta + gain) * t).exp()
}

/// `ln(x(t)/x₀) ~ N((θ̄+k)t, t²)`.
pub fn feedback_parametric_law(t: f64, x0: f64, theta_bar: f64, gain: f64) -> Result<MarginalLaw> {
    MarginalLaw::log_domain(x0, (theta_bar + gain) * t, t, t)
}

/// Geometric Brownian motion `x₀·e^{(θ̄+k−½)t + w}` evaluated at `W(t) = w`.
pub fn feedback_sde_value(t: f64, x0: f64, theta_bar: f64, gain: f64, brownian: f64) -> f64 {
    x0 * ((theta_bar + gain - 0.5) * t + brownian).exp()
}

/// `ln(x(t)/x₀) ~ N((θ̄+k−½)t, t)`.
pub fn feedback_sde_law(t: f64, x0: f64, theta_bar: f64, gain: f64) -> Result<MarginalLaw> {
    MarginalLaw::log_domain(x0, (theta_bar + gain - 0.5) * t, t.sqrt(), t)
}

/// Probability that a sampled closed loop `ẋ = (θ+k)x` is unstable,
/// `P(θ + k > 0)` for `θ ~ N(θ̄, σ²)`.
pub fn feedback_instability_probability(theta_bar: f64, gain: f64, prior_variance: f64) -> f64 {
    normal_cdf((theta_bar + gain) / prior_variance.sqrt())
}

/// Almost-sure exponential rate of the SDE solution, `θ̄ + k − σ²/2`.
pub fn feedback_sde_lyapunov_exponent(theta_bar: f64, gain: f64, prior_variance: f64) -> f64 {
    theta_bar + gain - 0.5 * prior_variance
}

/// `P((1/T)·ln|x(T)/x₀| > 0)` for the SDE: `Φ((θ̄+k−σ²/2)√T/σ)`.
pub fn feedback_sde_growth_probability(theta_bar: f64, gain: f64, prior_variance: f64, horizon: f64) -> f64 {
    let rate = feedback_sde_lyapunov_exponent(theta_bar, gain, prior_variance);
    normal_cdf(rate * horizon.sqrt() / prior_variance.sqrt())
}

/// Raw moments `E[θʳ]`, `r = 0..=max_order`, of `N(mean, variance)` from
/// `m_r = mean·m_{r−1} + (r−1)·variance·m_{r−2}`.
pub fn gaussian_raw_moments(mean: f64, variance: f64, max_order: usize) -> Vec<f64> {
    let mut m = Vec::with_capacity(max_order + 1);
    m.push(1.0);
    if max_order >= 1 {
        m.push(mean);
    }
    for r in 2..=max_order {
        let next = mean * m[r - 1] + (r - 1) as f64 * variance * m[r - 2];
        m.push(next);
    }
    m
}

/// Mean and variance of the discrete-time systems after `t` steps with
/// `θ ~ N(θ̄, σ²)` (multiplicative) or `w ~ N(0, σ²)` (additive).
pub fn discrete_moments_with_variance(
    kind: SystemKind,
    theta_bar: f64,
    prior_variance: f64,
    x0: f64,
    t: usize,
) -> Result<(f64, f64)> {
    match kind {
        SystemKind::DiscreteMultiplicative => {
            let m = gaussian_raw_moments(theta_bar, prior_variance, 2 * t);
            let mean = x0 * m[t];
            Ok((mean, x0 * x0 * (m[2 * t] - m[t] * m[t])))
        }
        SystemKind::DiscreteAdditive => {
            let mut variance = 0.0;
            for _ in 0..t {
                variance = theta_bar * theta_bar * variance + prior_variance;
            }
            Ok((theta_bar.powi(t as i32) * x0, variance))
        }
        other => Err(Error::WrongKind {
            expected: "discrete_multiplicative or discrete_additive",
            found: other.name(),
        }),
    }
}

/// Unit-variance case of [`discrete_moments_with_variance`].
pub fn oracle_discrete_moments(kind: SystemKind, theta_bar: f64, x0: f64, t: usize) -> Result<(f64, f64)> {
    discrete_moments_with_variance(kind, theta_bar, 1.0, x0, t)
}

/// `P(sup_{s≤t} |σW(s)| ≤ a)` by the alternating reflection series,
/// truncated at `|k| ≤ 10`.
pub fn brownian_box_probability(half_width: f64, t: f64, sigma: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let s = half_width / (sigma * t.sqrt());
    let mut acc = KahanSum::new();
    for k in -10_i32..=10 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let k = f64::from(k);
        acc.add(sign * (normal_cdf((2.0 * k + 1.0) * s) - normal_cdf((2.0 * k - 1.0) * s)));
    }
    acc.value()
}

/// `P(x₀ + θs ∈ [lo, hi] ∀s ≤ t)` for `θ ~ N(θ̄, σ²)`. Straight-line paths
/// leave an interval only through their endpoint, so this is the endpoint
/// probability.
pub fn linear_path_box_probability(lo: f64, hi: f64, x0: f64, theta_bar: f64, prior_variance: f64, t: f64) -> f64 {
    if !(lo <= x0 && x0 <= hi) {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let s = prior_variance.sqrt() * t;
    let c = x0 + theta_bar * t;
    normal_cdf((hi - c) / s) - normal_cdf((lo - c) / s)
}

impl AnalyticOracle {
    /// Marginal law of the epistemic model at time (or step) `t`, when one
    /// is available in closed form.
    pub fn epistemic_law(&self, t: f64) -> Result<Option<MarginalLaw>> {
        Ok(match *self {
            AnalyticOracle::ScalarDrift {
                theta_bar,
                prior_variance,
                x0,
            } => Some(MarginalLaw::gaussian(x0 + theta_bar * t, prior_variance * t * t, t)),
            AnalyticOracle::LinearFeedback {
                theta_bar,
                prior_variance,
                gain,
                x0,
            } => Some(MarginalLaw::log_domain(
                x0,
                (theta_bar + gain) * t,
                prior_variance.sqrt() * t,
                t,
            )?),
            AnalyticOracle::DiscreteMoments { .. } => None,
        })
    }

    /// Marginal law of the aleatoric reformulation at time (or step) `t`.
    pub fn aleatoric_law(&self, t: f64) -> Result<Option<MarginalLaw>> {
        Ok(match *self {
            AnalyticOracle::ScalarDrift {
                theta_bar,
                prior_variance,
                x0,
            } => Some(MarginalLaw::gaussian(x0 + theta_bar * t, prior_variance * t, t)),
            AnalyticOracle::LinearFeedback {
                theta_bar,
                prior_variance,
                gain,
                x0,
            } => Some(MarginalLaw::log_domain(
                x0,
                feedback_sde_lyapunov_exponent(theta_bar, gain, prior_variance) * t,
                (prior_variance * t).sqrt(),
                t,
            )?),
            AnalyticOracle::DiscreteMoments {
                theta_bar,
                prior_variance,
                x0,
            } => {
                let steps = t.round() as usize;
                let (mean, variance) =
                    discrete_moments_with_variance(SystemKind::DiscreteAdditive, theta_bar, prior_variance, x0, steps)?;
                Some(MarginalLaw::gaussian(mean, variance, t))
            }
        })
    }

    /// Closed-form variance at time (or step) `t`; this also covers the
    /// multiplicative discrete map, whose law has no closed form.
    pub fn variance(&self, epistemic: bool, t: f64) -> Result<f64> {
        if let AnalyticOracle::DiscreteMoments {
            theta_bar,
            prior_variance,
            x0,
        } = *self
        {
            let kind = if epistemic {
                SystemKind::DiscreteMultiplicative
            } else {
                SystemKind::DiscreteAdditive
            };
            return Ok(discrete_moments_with_variance(kind, theta_bar, prior_variance, x0, t.round() as usize)?.1);
        }
        Ok(self.law(epistemic, t)?.map_or(f64::NAN, |law| law.variance()))
    }

    /// Law for the given semantics.
    pub fn law(&self, epistemic: bool, t: f64) -> Result<Option<MarginalLaw>> {
        if epistemic {
            self.epistemic_law(t)
        } else {
            self.aleatoric_law(t)
        }
    }
}
