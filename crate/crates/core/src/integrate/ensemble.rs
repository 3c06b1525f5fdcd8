use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{Error, Result};
use crate::systems::SystemKind;

/// A path that produced a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub path: usize,
    /// First integration time with a non-finite state.
    pub time: f64,
}

/// `N` sample paths on a shared grid.
///
/// States are stored as `[path][time][state]`. Once a path diverges, the
/// remaining recorded points of that path are NaN and the path is listed in
/// [`PathEnsemble::divergences`]; it is never dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub(crate) grid: TimeGrid,
    pub(crate) kind: SystemKind,
    pub(crate) master_seed: u64,
    pub(crate) num_paths: usize,
    pub(crate) state_dim: usize,
    pub(crate) param_dim: usize,
    pub(crate) substeps: usize,
    pub(crate) states: Vec<f64>,
    pub(crate) sampled_parameters: Option<Vec<f64>>,
    /// `[path][dim][min, max]` over every integration step, when tracked.
    pub(crate) extrema: Option<Vec<f64>>,
    pub(crate) divergences: Vec<Divergence>,
}

impl PathEnsemble {
    /// Wraps externally produced states (`[path][time][state]`).
    pub fn from_states(
        grid: TimeGrid,
        kind: SystemKind,
        state_dim: usize,
        states: Vec<f64>,
        master_seed: u64,
    ) -> Result<Self> {
        let per_path = grid.num_points() * state_dim;
        if state_dim == 0 || states.is_empty() || !states.len().is_multiple_of(per_path) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form whole paths of {per_path}",
                states.len()
            )));
        }
        let num_paths = states.len() / per_path;
        let mut ensemble = Self {
            grid,
            kind,
            master_seed,
            num_paths,
            state_dim,
            param_dim: 0,
            substeps: 1,
            states,
            sampled_parameters: None,
            extrema: None,
            divergences: Vec::new(),
        };
        ensemble.divergences = ensemble.scan_divergences();
        Ok(ensemble)
    }

    pub(crate) fn scan_divergences(&self) -> Vec<Divergence> {
        (0..self.num_paths)
            .filter_map(|j| {
                self.path(j)
                    .chunks_exact(self.state_dim)
                    .position(|s| s.iter().any(|v| !v.is_finite()))
                    .map(|i| Divergence {
                        path: j,
                        time: self.grid.time(i),
                    })
            })
            .collect()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// Integration steps per recorded grid interval.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Integration step size (grid step divided by the substep count).
    pub fn integration_dt(&self) -> f64 {
        self.grid.dt() / self.substeps as f64
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn sampled_parameters(&self) -> Option<&[f64]> {
        self.sampled_parameters.as_deref()
    }

    /// θ drawn for path `j` (parametric kinds only).
    pub fn parameters(&self, path: usize) -> Option<&[f64]> {
        let p = self.param_dim;
        self.sampled_parameters
            .as_ref()
            .map(|all| &all[path * p..(path + 1) * p])
    }

    pub fn divergences(&self) -> &[Divergence] {
        &self.divergences
    }

    /// Running `(min, max)` of state component `dim` over every integration
    /// step of path `j`, including substeps between recorded points.
    pub fn extrema(&self, path: usize, dim: usize) -> Option<(f64, f64)> {
        self.extrema.as_ref().map(|e| {
            let k = (path * self.state_dim + dim) * 2;
            (e[k], e[k + 1])
        })
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let len = self.grid.num_points() * self.state_dim;
        &self.states[path * len..(path + 1) * len]
    }

    pub fn state(&self, path: usize, time_index: usize) -> &[f64] {
        let n = self.state_dim;
        let start = (path * self.grid.num_points() + time_index) * n;
        &self.states[start..start + n]
    }

    #[inline]
    pub fn value(&self, path: usize, time_index: usize, dim: usize) -> f64 {
        self.states[(path * self.grid.num_points() + time_index) * self.state_dim + dim]
    }

    /// Component `dim` at `time_index` across all paths, in path order.
    pub fn marginal(&self, time_index: usize, dim: usize) -> Vec<f64> {
        (0..self.num_paths).map(|j| self.value(j, time_index, dim)).collect()
    }

    /// First `count` paths as a new ensemble (for figure highlights).
    pub fn head(&self, count: usize) -> PathEnsemble {
        let count = count.min(self.num_paths);
        let per_path = self.grid.num_points() * self.state_dim;
        let mut out = self.clone();
        out.num_paths = count;
        out.states.truncate(count * per_path);
        if let Some(p) = out.sampled_parameters.as_mut() {
            p.truncate(count * self.param_dim);
        }
        if let Some(e) = out.extrema.as_mut() {
            e.truncate(count * self.state_dim * 2);
        }
        out.divergences.retain(|d| d.path < count);
        out
    }
}
