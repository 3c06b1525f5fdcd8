//! Path ensembles for every system kind on a shared uniform grid.
//!
//! Each path owns the stream `derive_path_stream(master_seed, j)`:
//! parametric kinds draw θ from it once, the SDE draws one `N(0, dt·I_p)`
//! increment per integration step, the additive map draws one `N(0, I_p)`
//! disturbance per step. Paths never share state, so the result is the same
//! for any worker count.

mod ensemble;
mod format;
mod grid;

pub use ensemble::{Divergence, PathEnsemble};
pub use format::{read_binary, write_binary, write_paths_csv, BINARY_MAGIC, BINARY_VERSION};
pub use grid::TimeGrid;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mat_vec, KahanSum};
use crate::rng::{derive_path_stream, PathStream};
use crate::systems::{BasisFunction, FeedbackPolicy, SystemKind, SystemSpec};

/// Discretization of the Itô SDE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    #[default]
    EulerMaruyama,
    /// Scalar Milstein; needs n = p = 1 and a known ∂φ/∂x.
    Milstein,
}

/// Execution knobs that do not change the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationSettings {
    /// Integration steps per recorded grid interval. Only every
    /// `substeps`-th state is stored; running extrema still see every step.
    pub substeps: usize,
    /// Worker threads; `None` uses the global pool. Output does not depend
    /// on this value.
    pub workers: Option<usize>,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            substeps: 1,
            workers: None,
        }
    }
}

impl IntegrationSettings {
    pub fn with_substeps(substeps: usize) -> Self {
        Self {
            substeps,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Scratch space for evaluating `φ(x, π(x))` without allocating.
struct Workspace {
    u: Vec<f64>,
    phi: Vec<f64>,
    tmp_n: Vec<f64>,
}

impl Workspace {
    fn new(spec: &SystemSpec) -> Self {
        Self {
            u: vec![0.0; spec.input_dim()],
            phi: vec![0.0; spec.state_dim() * spec.param_dim()],
            tmp_n: vec![0.0; spec.state_dim()],
        }
    }

    /// `out = φ(x, π(x))·θ + G·π(x)`; leaves φ in `self.phi`.
    #[inline]
    fn vector_field(&mut self, spec: &SystemSpec, x: &[f64], theta: &[f64], out: &mut [f64]) {
        spec.policy().apply_into(x, &mut self.u);
        spec.basis().evaluate_into(x, &self.u, &mut self.phi);
        mat_vec(&self.phi, spec.param_dim(), theta, out);
        spec.input_matrix().mul_vec_into(&self.u, &mut self.tmp_n);
        for (o, g) in out.iter_mut().zip(&self.tmp_n) {
            *o += g;
        }
    }
}

/// Per-path outputs besides the recorded states.
struct PathOutcome {
    parameters: Vec<f64>,
    extrema: Vec<f64>,
    divergence: Option<f64>,
}

/// Compensated state accumulator with running extrema.
struct StateTracker {
    acc: Vec<KahanSum>,
    value: Vec<f64>,
    extrema: Vec<f64>,
}

impl StateTracker {
    fn new(x0: &[f64]) -> Self {
        Self {
            acc: x0.iter().map(|&v| KahanSum::starting_at(v)).collect(),
            value: x0.to_vec(),
            extrema: x0.iter().flat_map(|&v| [v, v]).collect(),
        }
    }

    /// Adds `delta` and returns false if the new state is not finite.
    #[inline]
    fn advance(&mut self, delta: &[f64]) -> bool {
        let mut finite = true;
        for (d, (acc, v)) in self.acc.iter_mut().zip(self.value.iter_mut()).enumerate() {
            acc.add(delta[d]);
            *v = acc.value();
            finite &= v.is_finite();
            let e = &mut self.extrema[2 * d..2 * d + 2];
            e[0] = e[0].min(*v);
            e[1] = e[1].max(*v);
        }
        finite
    }

    /// Replaces the state outright (discrete maps).
    #[inline]
    fn set(&mut self, next: &[f64]) -> bool {
        let mut finite = true;
        for (d, (acc, v)) in self.acc.iter_mut().zip(self.value.iter_mut()).enumerate() {
            *acc = KahanSum::starting_at(next[d]);
            *v = next[d];
            finite &= v.is_finite();
            let e = &mut self.extrema[2 * d..2 * d + 2];
            e[0] = e[0].min(*v);
            e[1] = e[1].max(*v);
        }
        finite
    }
}

/// Drives a per-step closure over the recorded grid, handling substeps,
/// recording, extrema, and divergence bookkeeping.
fn march<F>(x0: &[f64], grid: &TimeGrid, substeps: usize, out: &mut [f64], mut step: F) -> (Vec<f64>, Option<f64>)
where
    F: FnMut(&mut StateTracker, f64) -> bool,
{
    let n = x0.len();
    out[..n].copy_from_slice(x0);
    let mut tracker = StateTracker::new(x0);
    let h = grid.dt() / substeps as f64;
    for i in 0..grid.num_steps() {
        for s in 0..substeps {
            let t = (i * substeps + s) as f64 * h;
            if !step(&mut tracker, t) {
                let t_fail = (i * substeps + s + 1) as f64 * h;
                out[(i + 1) * n..].fill(f64::NAN);
                return (tracker.extrema, Some(t_fail));
            }
        }
        out[(i + 1) * n..(i + 2) * n].copy_from_slice(&tracker.value);
    }
    (tracker.extrema, None)
}

fn run_paths<F>(
    num_paths: usize,
    per_path: usize,
    settings: &IntegrationSettings,
    simulate: F,
) -> Result<(Vec<f64>, Vec<PathOutcome>)>
where
    F: Fn(usize, &mut [f64]) -> PathOutcome + Sync + Send,
{
    let mut states = vec![0.0; num_paths * per_path];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let work = |states: &mut Vec<f64>| -> Vec<PathOutcome> {
            states
                .par_chunks_mut(per_path)
                .enumerate()
                .map(|(j, chunk)| simulate(j, chunk))
                .collect()
        };
        let outcomes = match settings.workers {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .install(|| work(&mut states)),
            None => work(&mut states),
        };
        Ok((states, outcomes))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = settings;
        let outcomes = states
            .chunks_mut(per_path)
            .enumerate()
            .map(|(j, chunk)| simulate(j, chunk))
            .collect();
        Ok((states, outcomes))
    }
}

fn assemble(
    spec: &SystemSpec,
    grid: TimeGrid,
    master_seed: u64,
    substeps: usize,
    states: Vec<f64>,
    outcomes: Vec<PathOutcome>,
) -> PathEnsemble {
    let param_dim = spec.param_dim();
    let keeps_parameters = spec.kind().is_epistemic();
    let mut parameters = Vec::with_capacity(if keeps_parameters {
        outcomes.len() * param_dim
    } else {
        0
    });
    let mut extrema = Vec::with_capacity(outcomes.len() * spec.state_dim() * 2);
    let mut divergences = Vec::new();
    for (j, o) in outcomes.into_iter().enumerate() {
        parameters.extend(o.parameters);
        extrema.extend(o.extrema);
        if let Some(time) = o.divergence {
            divergences.push(Divergence { path: j, time });
        }
    }
    PathEnsemble {
        grid,
        kind: spec.kind(),
        master_seed,
        num_paths: extrema.len() / (2 * spec.state_dim()),
        state_dim: spec.state_dim(),
        param_dim: if keeps_parameters { param_dim } else { 0 },
        substeps,
        states,
        sampled_parameters: keeps_parameters.then_some(parameters),
        extrema: Some(extrema),
        divergences,
    }
}

fn require_kind(spec: &SystemSpec, allowed: &[SystemKind], expected: &'static str) -> Result<()> {
    if allowed.contains(&spec.kind()) {
        Ok(())
    } else {
        Err(Error::WrongKind {
            expected,
            found: spec.kind().name(),
        })
    }
}

fn require_paths(num_paths: usize) -> Result<()> {
    if num_paths == 0 {
        Err(Error::InsufficientPaths { required: 1, found: 0 })
    } else {
        Ok(())
    }
}

/// Classical fixed-step RK4 for `ẋ = φ(x, π(x))θ + Gπ(x)` with a given θ.
/// Writes `num_points · n` states into `out`.
fn rk4_path(
    spec: &SystemSpec,
    grid: &TimeGrid,
    substeps: usize,
    theta: &[f64],
    out: &mut [f64],
) -> (Vec<f64>, Option<f64>) {
    let n = spec.state_dim();
    let h = grid.dt() / substeps as f64;
    let mut ws = Workspace::new(spec);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut probe = vec![0.0; n];
    let mut delta = vec![0.0; n];
    march(spec.initial_state(), grid, substeps, out, |tracker, _t| {
        let x = &tracker.value;
        ws.vector_field(spec, x, theta, &mut k1);
        for d in 0..n {
            probe[d] = x[d] + 0.5 * h * k1[d];
        }
        ws.vector_field(spec, &probe, theta, &mut k2);
        for d in 0..n {
            probe[d] = x[d] + 0.5 * h * k2[d];
        }
        ws.vector_field(spec, &probe, theta, &mut k3);
        for d in 0..n {
            probe[d] = x[d] + h * k3[d];
        }
        ws.vector_field(spec, &probe, theta, &mut k4);
        for d in 0..n {
            delta[d] = h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        tracker.advance(&delta)
    })
}

/// Integrates the random-parameter ODE: θ is drawn once per path and held
/// fixed along the whole trajectory.
pub fn integrate_parametric(
    spec: &SystemSpec,
    grid: &TimeGrid,
    num_paths: usize,
    master_seed: u64,
    settings: &IntegrationSettings,
) -> Result<PathEnsemble> {
    require_kind(spec, &[SystemKind::ParametricOde], "parametric_ode")?;
    require_paths(num_paths)?;
    settings.validate()?;
    let per_path = grid.num_points() * spec.state_dim();
    let (states, outcomes) = run_paths(num_paths, per_path, settings, |j, out| {
        let mut stream = derive_path_stream(master_seed, j as u64);
        let theta = spec.prior().sample(&mut stream);
        let (extrema, divergence) = rk4_path(spec, grid, settings.substeps, &theta, out);
        PathOutcome {
            parameters: theta,
            extrema,
            divergence,
        }
    })?;
    Ok(assemble(spec, *grid, master_seed, settings.substeps, states, outcomes))
}

/// Re-integrates one parametric path for a known θ.
pub fn integrate_parametric_path(
    spec: &SystemSpec,
    grid: &TimeGrid,
    substeps: usize,
    theta: &[f64],
) -> Result<Vec<f64>> {
    require_kind(spec, &[SystemKind::ParametricOde], "parametric_ode")?;
    if theta.len() != spec.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "θ has length {}, expected {}",
            theta.len(),
            spec.param_dim()
        )));
    }
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be positive".into()));
    }
    let mut out = vec![0.0; grid.num_points() * spec.state_dim()];
    rk4_path(spec, grid, substeps, theta, &mut out);
    Ok(out)
}

/// Source of Brownian increments for one SDE path.
trait IncrementSource {
    fn next(&mut self, sqrt_h: f64, out: &mut [f64]);
}

impl IncrementSource for PathStream {
    #[inline]
    fn next(&mut self, sqrt_h: f64, out: &mut [f64]) {
        for w in out.iter_mut() {
            *w = sqrt_h * self.standard_normal();
        }
    }
}

struct GivenIncrements<'a> {
    values: &'a [f64],
    cursor: usize,
}

impl IncrementSource for GivenIncrements<'_> {
    fn next(&mut self, _sqrt_h: f64, out: &mut [f64]) {
        let p = out.len();
        out.copy_from_slice(&self.values[self.cursor..self.cursor + p]);
        self.cursor += p;
    }
}

fn check_sde_scheme(spec: &SystemSpec, scheme: SdeScheme) -> Result<()> {
    if scheme == SdeScheme::Milstein && !(spec.is_scalar() && spec.basis().has_state_gradient()) {
        return Err(Error::MilsteinUnavailable);
    }
    Ok(())
}

/// Scalar systems with a built-in basis and at most one input, unrolled.
/// Operations mirror the generic path so results agree bit for bit.
struct ScalarCoefficients {
    linear: bool,
    dphi: f64,
    gain: f64,
    input: f64,
}

impl ScalarCoefficients {
    fn of(spec: &SystemSpec) -> Option<Self> {
        if !spec.is_scalar() || spec.input_dim() > 1 {
            return None;
        }
        let linear = match spec.basis() {
            BasisFunction::Constant => false,
            BasisFunction::LinearState => true,
            BasisFunction::Custom(_) => return None,
        };
        let (gain, input) = if spec.input_dim() == 0 {
            (0.0, 0.0)
        } else {
            let gain = match spec.policy() {
                FeedbackPolicy::Zero => 0.0,
                FeedbackPolicy::LinearGain { gain } => gain.get(0, 0),
            };
            (gain, spec.input_matrix().get(0, 0))
        };
        Some(Self {
            linear,
            dphi: if linear { 1.0 } else { 0.0 },
            gain,
            input,
        })
    }

    #[inline]
    fn phi(&self, x: f64) -> f64 {
        if self.linear {
            x
        } else {
            1.0
        }
    }
}

fn sde_path<S: IncrementSource>(
    spec: &SystemSpec,
    grid: &TimeGrid,
    substeps: usize,
    scheme: SdeScheme,
    increments: &mut S,
    out: &mut [f64],
) -> (Vec<f64>, Option<f64>) {
    let n = spec.state_dim();
    let p = spec.param_dim();
    let h = grid.dt() / substeps as f64;
    let sqrt_h = h.sqrt();
    let theta_bar = spec.prior().mean();
    let chol = spec.prior().cholesky_factor();
    if let Some(c) = ScalarCoefficients::of(spec) {
        let b = chol.get(0, 0);
        let mut dw = [0.0];
        return march(spec.initial_state(), grid, substeps, out, |tracker, _t| {
            let x = tracker.value[0];
            let phi = c.phi(x);
            let mut delta = (0.0 + phi * theta_bar[0] + (0.0 + c.input * (0.0 + c.gain * x))) * h;
            increments.next(sqrt_h, &mut dw);
            delta += 0.0 + phi * (0.0 + b * dw[0]);
            if scheme == SdeScheme::Milstein {
                delta += 0.5 * (phi * b) * (c.dphi * b) * (dw[0] * dw[0] - h);
            }
            tracker.advance(&[delta])
        });
    }
    let mut ws = Workspace::new(spec);
    let mut drift = vec![0.0; n];
    let mut dw = vec![0.0; p];
    let mut scaled_noise = vec![0.0; p];
    let mut diffusion = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut grad = vec![0.0; p];
    march(spec.initial_state(), grid, substeps, out, |tracker, _t| {
        let x = &tracker.value;
        // φ(x,u)θ̄ + Gu, and φ itself left in the workspace.
        ws.vector_field(spec, x, theta_bar, &mut drift);
        increments.next(sqrt_h, &mut dw);
        chol.mul_vec_into(&dw, &mut scaled_noise);
        mat_vec(&ws.phi, p, &scaled_noise, &mut diffusion);
        for d in 0..n {
            delta[d] = drift[d] * h + diffusion[d];
        }
        if scheme == SdeScheme::Milstein {
            // Scalar: b(x) = φ(x)·B, b'(x) = ∂φ/∂x·B, correction ½bb'(ΔW² − h).
            spec.basis().state_gradient_into(x, &ws.u, &mut grad);
            let b_chol = chol.get(0, 0);
            let b = ws.phi[0] * b_chol;
            let db = grad[0] * b_chol;
            delta[0] += 0.5 * b * db * (dw[0] * dw[0] - h);
        }
        tracker.advance(&delta)
    })
}

/// Integrates the Itô SDE `dx = (φθ̄ + Gu)dt + φBθ dW`.
pub fn integrate_sde(
    spec: &SystemSpec,
    grid: &TimeGrid,
    num_paths: usize,
    master_seed: u64,
    scheme: SdeScheme,
    settings: &IntegrationSettings,
) -> Result<PathEnsemble> {
    require_kind(spec, &[SystemKind::ItoSde], "ito_sde")?;
    require_paths(num_paths)?;
    settings.validate()?;
    check_sde_scheme(spec, scheme)?;
    let per_path = grid.num_points() * spec.state_dim();
    let (states, outcomes) = run_paths(num_paths, per_path, settings, |j, out| {
        let mut stream = derive_path_stream(master_seed, j as u64);
        let (extrema, divergence) = sde_path(spec, grid, settings.substeps, scheme, &mut stream, out);
        PathOutcome {
            parameters: Vec::new(),
            extrema,
            divergence,
        }
    })?;
    Ok(assemble(spec, *grid, master_seed, settings.substeps, states, outcomes))
}

/// Integrates one SDE path driven by caller-supplied Brownian increments
/// (`num_steps · p` values, step-major). Used to compare schemes on a shared
/// Brownian path.
pub fn integrate_sde_with_increments(
    spec: &SystemSpec,
    grid: &TimeGrid,
    scheme: SdeScheme,
    increments: &[f64],
) -> Result<Vec<f64>> {
    require_kind(spec, &[SystemKind::ItoSde], "ito_sde")?;
    check_sde_scheme(spec, scheme)?;
    if increments.len() != grid.num_steps() * spec.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} increments supplied, grid needs {}",
            increments.len(),
            grid.num_steps() * spec.param_dim()
        )));
    }
    let mut out = vec![0.0; grid.num_points() * spec.state_dim()];
    let mut source = GivenIncrements {
        values: increments,
        cursor: 0,
    };
    sde_path(spec, grid, 1, scheme, &mut source, &mut out);
    Ok(out)
}

/// The Brownian increments `integrate_sde` uses for path `path_index` on a
/// grid with `num_steps` integration steps of size `dt`.
pub fn brownian_increments(master_seed: u64, path_index: u64, num_steps: usize, dt: f64, param_dim: usize) -> Vec<f64> {
    let mut stream = derive_path_stream(master_seed, path_index);
    let mut out = vec![0.0; num_steps * param_dim];
    let sqrt_h = dt.sqrt();
    for chunk in out.chunks_mut(param_dim) {
        stream.next(sqrt_h, chunk);
    }
    out
}

/// Iterates the discrete-time map for `num_steps` steps.
///
/// Multiplicative: θⱼ is drawn once and `x⁺ = φ(x,u)θⱼ + Gu`.
/// Additive: `x⁺ = φ(x,u)θ̄ + Gu + Bθ·w` with fresh `w ~ N(0, I)` each step.
pub fn iterate_discrete(
    spec: &SystemSpec,
    num_steps: usize,
    num_paths: usize,
    master_seed: u64,
    settings: &IntegrationSettings,
) -> Result<PathEnsemble> {
    require_kind(
        spec,
        &[SystemKind::DiscreteMultiplicative, SystemKind::DiscreteAdditive],
        "discrete_multiplicative or discrete_additive",
    )?;
    require_paths(num_paths)?;
    if !spec.is_scalar() {
        return Err(Error::UnsupportedDimension(spec.state_dim()));
    }
    let settings = IntegrationSettings {
        substeps: 1,
        ..*settings
    };
    settings.validate()?;
    let grid = TimeGrid::discrete(num_steps)?;
    let n = spec.state_dim();
    let p = spec.param_dim();
    let per_path = grid.num_points() * n;
    let multiplicative = spec.kind() == SystemKind::DiscreteMultiplicative;
    let (states, outcomes) = run_paths(num_paths, per_path, &settings, |j, out| {
        let mut stream = derive_path_stream(master_seed, j as u64);
        let mut ws = Workspace::new(spec);
        let mut next = vec![0.0; n];
        let mut w = vec![0.0; p];
        let mut noise = vec![0.0; n];
        let theta = if multiplicative {
            spec.prior().sample(&mut stream)
        } else {
            spec.prior().mean().to_vec()
        };
        let (extrema, divergence) = march(spec.initial_state(), &grid, 1, out, |tracker, _t| {
            ws.vector_field(spec, &tracker.value, &theta, &mut next);
            if !multiplicative {
                stream.fill_standard_normal(&mut w);
                spec.prior().cholesky_factor().mul_vec_into(&w, &mut noise);
                for d in 0..n {
                    next[d] += noise[d];
                }
            }
            tracker.set(&next)
        });
        PathOutcome {
            parameters: if multiplicative { theta } else { Vec::new() },
            extrema,
            divergence,
        }
    })?;
    Ok(assemble(spec, grid, master_seed, 1, states, outcomes))
}

/// Runs whichever integrator matches the spec's kind. Discrete kinds use
/// `grid.num_steps()` steps and ignore the horizon and substeps.
pub fn simulate(
    spec: &SystemSpec,
    grid: &TimeGrid,
    num_paths: usize,
    master_seed: u64,
    scheme: SdeScheme,
    settings: &IntegrationSettings,
) -> Result<PathEnsemble> {
    match spec.kind() {
        SystemKind::ParametricOde => integrate_parametric(spec, grid, num_paths, master_seed, settings),
        SystemKind::ItoSde => integrate_sde(spec, grid, num_paths, master_seed, scheme, settings),
        SystemKind::DiscreteMultiplicative | SystemKind::DiscreteAdditive => {
            iterate_discrete(spec, grid.num_steps(), num_paths, master_seed, settings)
        }
    }
}

#[cfg(test)]
mod tests;
