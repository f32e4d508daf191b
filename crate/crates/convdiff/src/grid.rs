//! Space-time discretization of Λ = (0,1)^d.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid with `m` interior points per axis and `n_t` time
/// steps on `[0, T]`. Boundary nodes carry the Dirichlet value 0 and are
/// not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub m: usize,
    pub n_t: usize,
    pub t_horizon: f64,
}

impl Grid {
    pub fn new(d: usize, m: usize, n_t: usize, t_horizon: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Config(format!("dimension {d} not supported (d must be 1 or 2)")));
        }
        if m < 3 {
            return Err(Error::Config("grid needs at least 3 interior points".into()));
        }
        if n_t < 1 {
            return Err(Error::Config("grid needs at least one time step".into()));
        }
        if t_horizon <= 0.0 {
            return Err(Error::Config("time horizon must be positive".into()));
        }
        Ok(Grid {
            d,
            m,
            n_t,
            t_horizon,
        })
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.m as f64 + 1.0)
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.n_t as f64
    }

    /// Number of interior nodes, m^d.
    pub fn node_count(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Cell volume Δx^d of the spatial quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Coordinates of the interior node with flat index `idx`
    /// (row-major, first axis slowest).
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let dx = self.dx();
        match self.d {
            1 => vec![(idx as f64 + 1.0) * dx],
            _ => {
                let i = idx / self.m;
                let j = idx % self.m;
                vec![(i as f64 + 1.0) * dx, (j as f64 + 1.0) * dx]
            }
        }
    }

    /// Δt/Δx ratio; recorded as a diagnostic, not enforced (the stepping
    /// scheme is implicit in the stiff part).
    pub fn cfl_ratio(&self) -> f64 {
        self.dt() / self.dx()
    }
}
