//! Model catalog: parametric ODEs `ẋ = φ(x,u)θ + G·u` with a Gaussian prior on
//! `θ`, their Brownian reformulations, and the discrete-time pair.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::PathStream;

/// Gaussian belief `θ ~ N(mean, covariance)` together with its lower Cholesky
/// factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorDocument", into = "PriorDocument")]
pub struct ParameterPrior {
    mean: Vec<f64>,
    covariance: Matrix,
    cholesky_factor: Matrix,
}

#[derive(Serialize, Deserialize)]
struct PriorDocument {
    mean: Vec<f64>,
    covariance: Matrix,
}

impl TryFrom<PriorDocument> for ParameterPrior {
    type Error = Error;

    fn try_from(doc: PriorDocument) -> Result<Self> {
        make_prior(doc.mean, doc.covariance)
    }
}

impl From<ParameterPrior> for PriorDocument {
    fn from(prior: ParameterPrior) -> Self {
        PriorDocument {
            mean: prior.mean,
            covariance: prior.covariance,
        }
    }
}

/// Builds a prior, symmetrizing the covariance and factorizing it.
pub fn make_prior(mean: Vec<f64>, covariance: Matrix) -> Result<ParameterPrior> {
    let p = covariance.rows();
    if p == 0 || covariance.cols() != p {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be a non-empty square matrix, got {}x{}",
            covariance.rows(),
            covariance.cols()
        )));
    }
    if mean.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {} but covariance is {p}x{p}",
            mean.len()
        )));
    }
    let scale = covariance.max_abs();
    let mut sym = covariance.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (covariance.get(i, j), covariance.get(j, i));
            if (a - b).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
            let avg = 0.5 * (a + b);
            sym.set(i, j, avg);
            sym.set(j, i, avg);
        }
    }
    let cholesky_factor = sym.cholesky()?;
    Ok(ParameterPrior {
        mean,
        covariance: sym,
        cholesky_factor,
    })
}

impl ParameterPrior {
    /// Scalar prior `N(mean, variance)`.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        make_prior(vec![mean], Matrix::scalar(variance))
    }

    pub fn standard(dim: usize) -> Result<Self> {
        make_prior(vec![0.0; dim], Matrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.cholesky_factor
    }

    /// `θ̄ + Bθ·z` for a given standard-normal vector `z`.
    pub fn transform_into(&self, z: &[f64], out: &mut [f64]) {
        self.cholesky_factor.mul_vec_into(z, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }

    /// One parameter draw from the stream (consumes `p` normals).
    pub fn sample(&self, stream: &mut PathStream) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        stream.fill_standard_normal(&mut z);
        let mut theta = vec![0.0; self.dim()];
        self.transform_into(&z, &mut theta);
        theta
    }
}

/// See [`ParameterPrior::sample`].
pub fn sample_parameters(prior: &ParameterPrior, stream: &mut PathStream) -> Vec<f64> {
    prior.sample(stream)
}

type BasisFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Host-provided feature map with a declared `n×p` output shape.
#[derive(Clone)]
pub struct CustomBasis {
    name: String,
    state_dim: usize,
    param_dim: usize,
    evaluate: Arc<BasisFn>,
    state_gradient: Option<Arc<BasisFn>>,
}

impl CustomBasis {
    /// `evaluate(x, u, out)` must write the row-major `n×p` matrix φ(x,u).
    pub fn new<F>(name: impl Into<String>, state_dim: usize, param_dim: usize, evaluate: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            param_dim,
            evaluate: Arc::new(evaluate),
            state_gradient: None,
        }
    }

    /// Registers ∂φ/∂x for scalar states, which enables the Milstein scheme.
    pub fn with_state_gradient<F>(mut self, gradient: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.state_gradient = Some(Arc::new(gradient));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBasis")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("param_dim", &self.param_dim)
            .field("has_state_gradient", &self.state_gradient.is_some())
            .finish()
    }
}

/// Feature map φ(x,u) ∈ ℝ^{n×p}.
///
/// The built-ins require `p = n`: `Constant` is the identity (so `ẋ = θ`),
/// `LinearState` is `diag(x)` (so `ẋ = θ ⊙ x`).
#[derive(Debug, Clone)]
pub enum BasisFunction {
    Constant,
    LinearState,
    Custom(CustomBasis),
}

impl BasisFunction {
    pub fn tag(&self) -> &'static str {
        match self {
            BasisFunction::Constant => "constant",
            BasisFunction::LinearState => "linear_state",
            BasisFunction::Custom(_) => "custom",
        }
    }

    pub fn check_shape(&self, state_dim: usize, param_dim: usize) -> Result<()> {
        let ok = match self {
            BasisFunction::Constant | BasisFunction::LinearState => state_dim == param_dim,
            BasisFunction::Custom(c) => c.state_dim == state_dim && c.param_dim == param_dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{} basis cannot map n={state_dim}, p={param_dim}",
                self.tag()
            )))
        }
    }

    /// Writes φ(x,u) row-major into `out` (length `n·p`, with `n = x.len()`).
    #[inline]
    pub fn evaluate_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            BasisFunction::Constant => {
                out.fill(0.0);
                let p = out.len() / x.len().max(1);
                for i in 0..x.len() {
                    out[i * p + i] = 1.0;
                }
            }
            BasisFunction::LinearState => {
                out.fill(0.0);
                let p = out.len() / x.len().max(1);
                for (i, xi) in x.iter().enumerate() {
                    out[i * p + i] = *xi;
                }
            }
            BasisFunction::Custom(c) => (c.evaluate)(x, u, out),
        }
    }

    /// φ(x,u) as a matrix with `param_dim` columns.
    pub fn evaluate(&self, x: &[f64], u: &[f64], param_dim: usize) -> Result<Matrix> {
        self.check_shape(x.len(), param_dim)?;
        let mut out = vec![0.0; x.len() * param_dim];
        self.evaluate_into(x, u, &mut out);
        Matrix::from_row_major(x.len(), param_dim, out)
    }

    /// ∂φ/∂x for scalar states, if known. Writes a `1×p` row.
    pub(crate) fn state_gradient_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> bool {
        match self {
            BasisFunction::Constant => {
                out.fill(0.0);
                true
            }
            BasisFunction::LinearState => {
                out.fill(0.0);
                out[0] = 1.0;
                true
            }
            BasisFunction::Custom(c) => match &c.state_gradient {
                Some(g) => {
                    g(x, u, out);
                    true
                }
                None => false,
            },
        }
    }

    pub(crate) fn has_state_gradient(&self) -> bool {
        match self {
            BasisFunction::Custom(c) => c.state_gradient.is_some(),
            _ => true,
        }
    }
}

/// State-feedback law `u = π(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeedbackPolicy {
    Zero,
    LinearGain { gain: Matrix },
}

impl FeedbackPolicy {
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FeedbackPolicy::Zero => out.fill(0.0),
            FeedbackPolicy::LinearGain { gain } => gain.mul_vec_into(x, out),
        }
    }

    pub fn apply(&self, x: &[f64], input_dim: usize) -> Vec<f64> {
        let mut u = vec![0.0; input_dim];
        self.apply_into(x, &mut u);
        u
    }
}

/// Which semantics a [`SystemSpec`] is simulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// `ẋ = φ(x,u)θ + Gu`, θ drawn once per trajectory.
    ParametricOde,
    /// `dx = (φθ̄ + Gu)dt + φBθ dW` (Itô).
    ItoSde,
    /// `x⁺ = φ(x,u)θ + Gu`, θ drawn once per trajectory.
    DiscreteMultiplicative,
    /// `x⁺ = φ(x,u)θ̄ + Gu + Bθ w`, fresh `w ~ N(0, I)` every step.
    DiscreteAdditive,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::ParametricOde => "parametric_ode",
            SystemKind::ItoSde => "ito_sde",
            SystemKind::DiscreteMultiplicative => "discrete_multiplicative",
            SystemKind::DiscreteAdditive => "discrete_additive",
        }
    }

    /// True for kinds whose only randomness is the one-off parameter draw.
    pub fn is_epistemic(self) -> bool {
        matches!(self, SystemKind::ParametricOde | SystemKind::DiscreteMultiplicative)
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, SystemKind::DiscreteMultiplicative | SystemKind::DiscreteAdditive)
    }

    /// The kind with the other uncertainty semantics.
    pub fn counterpart(self) -> SystemKind {
        match self {
            SystemKind::ParametricOde => SystemKind::ItoSde,
            SystemKind::ItoSde => SystemKind::ParametricOde,
            SystemKind::DiscreteMultiplicative => SystemKind::DiscreteAdditive,
            SystemKind::DiscreteAdditive => SystemKind::DiscreteMultiplicative,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully specified model: dynamics, prior, feedback and initial state.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    kind: SystemKind,
    basis: BasisFunction,
    prior: ParameterPrior,
    policy: FeedbackPolicy,
    input_matrix: Matrix,
    initial_state: Vec<f64>,
}

impl SystemSpec {
    /// Validates that all dimensions agree: φ is `n×p`, the policy returns an
    /// `m`-vector, and the input matrix `G` is `n×m`.
    pub fn new(
        kind: SystemKind,
        basis: BasisFunction,
        prior: ParameterPrior,
        policy: FeedbackPolicy,
        input_matrix: Matrix,
        initial_state: Vec<f64>,
    ) -> Result<Self> {
        let n = initial_state.len();
        let p = prior.dim();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty initial state".into()));
        }
        basis.check_shape(n, p)?;
        if input_matrix.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "input matrix has {} rows, state dimension is {n}",
                input_matrix.rows()
            )));
        }
        let m = input_matrix.cols();
        if let FeedbackPolicy::LinearGain { gain } = &policy {
            if gain.rows() != m || gain.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "gain is {}x{}, expected {m}x{n}",
                    gain.rows(),
                    gain.cols()
                )));
            }
        }
        if initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        Ok(Self {
            kind,
            basis,
            prior,
            policy,
            input_matrix,
            initial_state,
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn basis(&self) -> &BasisFunction {
        &self.basis
    }

    pub fn prior(&self) -> &ParameterPrior {
        &self.prior
    }

    pub fn policy(&self) -> &FeedbackPolicy {
        &self.policy
    }

    pub fn input_matrix(&self) -> &Matrix {
        &self.input_matrix
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_matrix.cols()
    }

    pub fn param_dim(&self) -> usize {
        self.prior.dim()
    }

    /// Same model under a different kind; the SDE drift `φθ̄` and diffusion
    /// `φBθ` are derived from the shared `(basis, prior)` pair.
    pub fn with_kind(&self, kind: SystemKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn with_prior(&self, prior: ParameterPrior) -> Result<Self> {
        Self::new(
            self.kind,
            self.basis.clone(),
            prior,
            self.policy.clone(),
            self.input_matrix.clone(),
            self.initial_state.clone(),
        )
    }

    pub fn with_initial_state(&self, initial_state: Vec<f64>) -> Result<Self> {
        Self::new(
            self.kind,
            self.basis.clone(),
            self.prior.clone(),
            self.policy.clone(),
            self.input_matrix.clone(),
            initial_state,
        )
    }

    pub fn is_scalar(&self) -> bool {
        self.state_dim() == 1 && self.param_dim() == 1
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SystemDocument::try_from(self)?;
        serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::try_from(doc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum BasisDocument {
    Constant,
    LinearState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Dims {
    state: usize,
    input: usize,
    param: usize,
}

/// On-disk JSON form of a [`SystemSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDocument {
    kind: SystemKind,
    basis: BasisDocument,
    prior: ParameterPrior,
    policy: FeedbackPolicy,
    initial_state: Vec<f64>,
    dims: Dims,
    /// `G` in `ẋ = φθ + Gu`; defaults to ones on the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_matrix: Option<Matrix>,
}

impl TryFrom<&SystemSpec> for SystemDocument {
    type Error = Error;

    fn try_from(spec: &SystemSpec) -> Result<Self> {
        let basis = match spec.basis {
            BasisFunction::Constant => BasisDocument::Constant,
            BasisFunction::LinearState => BasisDocument::LinearState,
            BasisFunction::Custom(_) => return Err(Error::NotSerializable),
        };
        Ok(SystemDocument {
            kind: spec.kind,
            basis,
            prior: spec.prior.clone(),
            policy: spec.policy.clone(),
            initial_state: spec.initial_state.clone(),
            dims: Dims {
                state: spec.state_dim(),
                input: spec.input_dim(),
                param: spec.param_dim(),
            },
            input_matrix: Some(spec.input_matrix.clone()),
        })
    }
}

impl TryFrom<SystemDocument> for SystemSpec {
    type Error = Error;

    fn try_from(doc: SystemDocument) -> Result<Self> {
        let Dims { state, input, param } = doc.dims;
        if doc.initial_state.len() != state || doc.prior.dim() != param {
            return Err(Error::DimensionMismatch(format!(
                "dims {{state: {state}, param: {param}}} disagree with initial_state/prior"
            )));
        }
        let input_matrix = match doc.input_matrix {
            Some(g) => g,
            None => {
                let mut g = Matrix::zeros(state, input);
                for i in 0..state.min(input) {
                    g.set(i, i, 1.0);
                }
                g
            }
        };
        if input_matrix.cols() != input {
            return Err(Error::DimensionMismatch(format!(
                "input matrix has {} columns, dims.input is {input}",
                input_matrix.cols()
            )));
        }
        let basis = match doc.basis {
            BasisDocument::Constant => BasisFunction::Constant,
            BasisDocument::LinearState => BasisFunction::LinearState,
        };
        SystemSpec::new(doc.kind, basis, doc.prior, doc.policy, input_matrix, doc.initial_state)
    }
}

/// Names of the built-in benchmarks.
pub const BENCHMARK_NAMES: [&str; 4] = ["scalar-drift", "linear-feedback", "dt-multiplicative", "dt-additive"];

/// Closed-form reference attached to a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum AnalyticOracle {
    ScalarDrift {
        theta_bar: f64,
        prior_variance: f64,
        x0: f64,
    },
    LinearFeedback {
        theta_bar: f64,
        prior_variance: f64,
        gain: f64,
        x0: f64,
    },
    DiscreteMoments {
        theta_bar: f64,
        prior_variance: f64,
        x0: f64,
    },
}

impl AnalyticOracle {
    pub fn id(&self) -> &'static str {
        match self {
            AnalyticOracle::ScalarDrift { .. } => "scalar_drift",
            AnalyticOracle::LinearFeedback { .. } => "linear_feedback",
            AnalyticOracle::DiscreteMoments { .. } => "discrete_moments",
        }
    }
}

/// Overrides for catalog construction. Unset fields take the catalog defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogOptions {
    /// Prior mean θ̄ (default 0).
    pub theta_bar: Option<f64>,
    /// Prior variance (default 1).
    pub prior_variance: Option<f64>,
    /// Feedback gain for "linear-feedback" (default −(θ̄+1)).
    pub gain: Option<f64>,
    /// Initial state (defaults: 0 for "scalar-drift", 1 otherwise).
    pub initial_state: Option<f64>,
}

/// A named benchmark: the epistemic model and its aleatoric counterpart.
#[derive(Debug, Clone)]
pub struct BenchmarkCatalogEntry {
    pub name: &'static str,
    /// Parameter drawn once per path (ParametricOde or DiscreteMultiplicative).
    pub epistemic: SystemSpec,
    /// Brownian / i.i.d. reformulation (ItoSde or DiscreteAdditive).
    pub aleatoric: SystemSpec,
    pub analytic_oracle: Option<AnalyticOracle>,
}

impl BenchmarkCatalogEntry {
    pub fn system_pair(&self) -> (&SystemSpec, &SystemSpec) {
        (&self.epistemic, &self.aleatoric)
    }

    pub fn is_discrete(&self) -> bool {
        self.epistemic.kind().is_discrete()
    }
}

/// Looks up one of [`BENCHMARK_NAMES`].
pub fn catalog_lookup(name: &str, options: &CatalogOptions) -> Result<BenchmarkCatalogEntry> {
    let theta_bar = options.theta_bar.unwrap_or(0.0);
    let prior_variance = options.prior_variance.unwrap_or(1.0);
    let prior = ParameterPrior::scalar(theta_bar, prior_variance)?;
    let unit = Matrix::scalar(1.0);
    let build = |kind, basis: BasisFunction, policy: FeedbackPolicy, x0: f64| {
        SystemSpec::new(kind, basis, prior.clone(), policy, unit.clone(), vec![x0])
    };
    let (name, epistemic, oracle) = match name {
        "scalar-drift" => {
            let x0 = options.initial_state.unwrap_or(0.0);
            let spec = build(
                SystemKind::ParametricOde,
                BasisFunction::Constant,
                FeedbackPolicy::Zero,
                x0,
            )?;
            (
                "scalar-drift",
                spec,
                AnalyticOracle::ScalarDrift {
                    theta_bar,
                    prior_variance,
                    x0,
                },
            )
        }
        "linear-feedback" => {
            let x0 = options.initial_state.unwrap_or(1.0);
            let gain = options.gain.unwrap_or(-(theta_bar + 1.0));
            let spec = build(
                SystemKind::ParametricOde,
                BasisFunction::LinearState,
                FeedbackPolicy::LinearGain {
                    gain: Matrix::scalar(gain),
                },
                x0,
            )?;
            (
                "linear-feedback",
                spec,
                AnalyticOracle::LinearFeedback {
                    theta_bar,
                    prior_variance,
                    gain,
                    x0,
                },
            )
        }
        "dt-multiplicative" | "dt-additive" => {
            let x0 = options.initial_state.unwrap_or(1.0);
            let spec = build(
                SystemKind::DiscreteMultiplicative,
                BasisFunction::LinearState,
                FeedbackPolicy::Zero,
                x0,
            )?;
            let name = if name == "dt-additive" {
                "dt-additive"
            } else {
                "dt-multiplicative"
            };
            (
                name,
                spec,
                AnalyticOracle::DiscreteMoments {
                    theta_bar,
                    prior_variance,
                    x0,
                },
            )
        }
        other => return Err(Error::UnknownBenchmark(other.to_string())),
    };
    let aleatoric = epistemic.with_kind(epistemic.kind().counterpart());
    Ok(BenchmarkCatalogEntry {
        name,
        epistemic,
        aleatoric,
        analytic_oracle: Some(oracle),
    })
}

/// Evaluates one random function `f = φθ` at every probe point, with θ drawn
/// once from the prior (the weight-space view of a GP with mean `φθ̄` and
/// cross-covariance `φ(a)Σθφ(b)ᵀ`).
pub fn weight_space_gp_draw(
    basis: &BasisFunction,
    prior: &ParameterPrior,
    probes: &[(Vec<f64>, Vec<f64>)],
    stream: &mut PathStream,
) -> Result<Vec<Vec<f64>>> {
    let first = probes
        .first()
        .ok_or_else(|| Error::InvalidArgument("probe list is empty".into()))?;
    let (n, m) = (first.0.len(), first.1.len());
    if probes.iter().any(|(x, u)| x.len() != n || u.len() != m) {
        return Err(Error::DimensionMismatch(
            "probe points have inconsistent dimensions".into(),
        ));
    }
    let p = prior.dim();
    basis.check_shape(n, p)?;
    let theta = prior.sample(stream);
    let mut phi = vec![0.0; n * p];
    Ok(probes
        .iter()
        .map(|(x, u)| {
            basis.evaluate_into(x, u, &mut phi);
            let mut f = vec![0.0; n];
            crate::numerics::mat_vec(&phi, p, &theta, &mut f);
            f
        })
        .collect())
}

/// Function-space moments implied by the weight-space prior: mean `φ(a)θ̄`
/// and cross-covariance `φ(a) Σθ φ(b)ᵀ`.
pub fn weight_space_moments(
    basis: &BasisFunction,
    prior: &ParameterPrior,
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
) -> Result<(Vec<f64>, Matrix)> {
    let p = prior.dim();
    let phi_a = basis.evaluate(a.0, a.1, p)?;
    let phi_b = basis.evaluate(b.0, b.1, p)?;
    let mean = phi_a.mul_vec(prior.mean());
    let cov = phi_a.matmul(prior.covariance())?.matmul(&phi_b.transpose())?;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_path_stream;

    #[test]
    fn scalar_priors_factor_by_hand() {
        let p = make_prior(vec![0.0], Matrix::scalar(1.0)).unwrap();
        assert_eq!(p.cholesky_factor().as_slice(), &[1.0]);
        let p = make_prior(vec![1.0], Matrix::scalar(4.0)).unwrap();
        assert_eq!(p.cholesky_factor().as_slice(), &[2.0]);
        let p = make_prior(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        assert_eq!(p.cholesky_factor(), &Matrix::identity(2));
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cov = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            make_prior(vec![0.0, 0.0], cov),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn mean_length_checked() {
        assert!(matches!(
            make_prior(vec![0.0, 1.0], Matrix::scalar(1.0)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn asymmetric_covariance_rejected_and_tiny_asymmetry_symmetrized() {
        let cov = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.4, 2.0]]).unwrap();
        assert!(matches!(
            make_prior(vec![0.0, 0.0], cov),
            Err(Error::NotSymmetric { .. })
        ));
        let cov = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5 + 1e-13, 2.0]]).unwrap();
        let p = make_prior(vec![0.0, 0.0], cov).unwrap();
        let c = p.covariance();
        assert_eq!(c.get(0, 1).to_bits(), c.get(1, 0).to_bits());
    }

    #[test]
    fn sampling_is_affine_in_the_stream() {
        let prior = ParameterPrior::scalar(3.0, 4.0).unwrap();
        let mut out = [0.0];
        prior.transform_into(&[1.0], &mut out);
        assert_eq!(out[0], 5.0);
        let unit = ParameterPrior::scalar(0.0, 1.0).unwrap();
        unit.transform_into(&[0.5], &mut out);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn builtin_bases_reproduce_scalar_examples() {
        let one = BasisFunction::Constant.evaluate(&[3.7], &[0.2], 1).unwrap();
        assert_eq!(one.as_slice(), &[1.0]);
        let lin = BasisFunction::LinearState.evaluate(&[3.7], &[0.2], 1).unwrap();
        assert_eq!(lin.as_slice(), &[3.7]);
        assert!(BasisFunction::Constant.evaluate(&[1.0], &[], 2).is_err());
    }

    #[test]
    fn policies() {
        let zero = FeedbackPolicy::Zero;
        assert_eq!(zero.apply(&[4.0, 5.0], 2), vec![0.0, 0.0]);
        let gain = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let lin = FeedbackPolicy::LinearGain { gain };
        assert_eq!(lin.apply(&[4.0, 5.0], 1), vec![-6.0]);
    }

    #[test]
    fn catalog_defaults() {
        let sd = catalog_lookup("scalar-drift", &CatalogOptions::default()).unwrap();
        assert_eq!(sd.epistemic.kind(), SystemKind::ParametricOde);
        assert_eq!(sd.aleatoric.kind(), SystemKind::ItoSde);
        assert!(matches!(sd.epistemic.basis(), BasisFunction::Constant));
        assert_eq!(sd.epistemic.prior().mean(), &[0.0]);
        assert_eq!(sd.epistemic.prior().covariance().as_slice(), &[1.0]);
        assert_eq!(sd.epistemic.initial_state(), &[0.0]);
        assert_eq!(sd.epistemic.policy(), &FeedbackPolicy::Zero);

        let lf = catalog_lookup("linear-feedback", &CatalogOptions::default()).unwrap();
        match lf.epistemic.policy() {
            FeedbackPolicy::LinearGain { gain } => assert_eq!(gain.as_slice(), &[-1.0]),
            other => panic!("unexpected policy {other:?}"),
        }
        assert_eq!(lf.epistemic.initial_state(), &[1.0]);

        let opts = CatalogOptions {
            theta_bar: Some(2.5),
            ..Default::default()
        };
        let lf = catalog_lookup("linear-feedback", &opts).unwrap();
        assert_eq!(
            lf.analytic_oracle,
            Some(AnalyticOracle::LinearFeedback {
                theta_bar: 2.5,
                prior_variance: 1.0,
                gain: -3.5,
                x0: 1.0
            })
        );

        for name in ["dt-multiplicative", "dt-additive"] {
            let e = catalog_lookup(name, &CatalogOptions::default()).unwrap();
            assert_eq!(e.name, name);
            assert_eq!(e.epistemic.kind(), SystemKind::DiscreteMultiplicative);
            assert_eq!(e.aleatoric.kind(), SystemKind::DiscreteAdditive);
        }
        assert!(matches!(
            catalog_lookup("nonexistent", &CatalogOptions::default()),
            Err(Error::UnknownBenchmark(_))
        ));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let lf = catalog_lookup("linear-feedback", &CatalogOptions::default()).unwrap();
        let text = lf.aleatoric.to_json().unwrap();
        let back = SystemSpec::from_json(&text).unwrap();
        assert_eq!(back.kind(), SystemKind::ItoSde);
        assert_eq!(back.policy(), lf.aleatoric.policy());
        assert_eq!(back.prior(), lf.aleatoric.prior());
        assert_eq!(back.to_json().unwrap(), text);

        let bad = text.replace("\"param\": 1", "\"param\": 2");
        assert!(SystemSpec::from_json(&bad).is_err());
        let err = SystemSpec::from_json("{\n  \"kind\": \"nope\"\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let minimal = r#"{"kind":"parametric_ode","basis":{"type":"constant"},
            "prior":{"mean":[0.0],"covariance":[[1.0]]},"policy":{"type":"zero"},
            "initial_state":[0.0],"dims":{"state":1,"input":1,"param":1}}"#;
        let spec = SystemSpec::from_json(minimal).unwrap();
        assert_eq!(spec.input_matrix().as_slice(), &[1.0]);
    }

    #[test]
    fn custom_basis_is_not_serializable() {
        let basis = BasisFunction::Custom(CustomBasis::new("sin", 1, 1, |x, _u, out| out[0] = x[0].sin()));
        let spec = SystemSpec::new(
            SystemKind::ParametricOde,
            basis,
            ParameterPrior::standard(1).unwrap(),
            FeedbackPolicy::Zero,
            Matrix::scalar(1.0),
            vec![0.5],
        )
        .unwrap();
        assert_eq!(spec.to_json(), Err(Error::NotSerializable));
    }

    #[test]
    fn gp_draw_constant_basis_is_perfectly_correlated() {
        let prior = ParameterPrior::standard(1).unwrap();
        let probes = vec![(vec![-3.0], vec![0.0]), (vec![10.0], vec![5.0])];
        for j in 0..100 {
            let mut s = derive_path_stream(9, j);
            let f = weight_space_gp_draw(&BasisFunction::Constant, &prior, &probes, &mut s).unwrap();
            assert_eq!(f[0][0].to_bits(), f[1][0].to_bits());
        }
        let mut s = derive_path_stream(9, 0);
        assert!(weight_space_gp_draw(&BasisFunction::Constant, &prior, &[], &mut s).is_err());
        let ragged = vec![(vec![1.0], vec![0.0]), (vec![1.0, 2.0], vec![0.0])];
        assert!(matches!(
            weight_space_gp_draw(&BasisFunction::Constant, &prior, &ragged, &mut s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gp_moments_use_covariance_not_precision() {
        let prior = ParameterPrior::scalar(0.5, 4.0).unwrap();
        let (mean, cov) =
            weight_space_moments(&BasisFunction::LinearState, &prior, (&[1.0], &[]), (&[2.0], &[])).unwrap();
        assert_eq!(mean, vec![0.5]);
        assert_eq!(cov.as_slice(), &[8.0]);
    }
}
