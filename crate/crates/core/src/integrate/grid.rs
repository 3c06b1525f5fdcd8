use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `tᵢ = i·dt`, `i = 0..=num_steps`, on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    num_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, num_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time horizon must be positive and finite, got {t_end}"
            )));
        }
        if num_steps == 0 {
            return Err(Error::InvalidArgument("num_steps must be positive".into()));
        }
        Ok(Self { t_end, num_steps })
    }

    /// Integer time grid for discrete-time systems (`dt = 1`).
    pub fn discrete(num_steps: usize) -> Result<Self> {
        Self::new(num_steps as f64, num_steps)
    }

    pub fn t_start(&self) -> f64 {
        0.0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_points(&self) -> usize {
        self.num_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.num_steps as f64
    }

    #[inline]
    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dt();
        (0..self.num_points()).map(move |i| i as f64 * dt)
    }

    /// Index of the grid point closest to `t`, if `t` lies on the grid
    /// within a relative tolerance of 1e-9 steps.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = t / self.dt();
        let idx = pos.round();
        if (pos - idx).abs() <= 1e-9 * pos.abs().max(1.0) && idx >= 0.0 && idx <= self.num_steps as f64 {
            Some(idx as usize)
        } else {
            None
        }
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.t_end, self.num_steps * factor)
    }
}
