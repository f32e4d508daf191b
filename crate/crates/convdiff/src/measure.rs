//! Extraction of the local observation processes
//! `X_δ,k = ⟨X, K_δ,x_k⟩`, `X^∇_δ,k = ⟨X, ∇K_δ,x_k⟩`, `X^Δ_δ,k = ⟨X, ΔK_δ,x_k⟩`
//! by midpoint quadrature over grid nodes, plus the Itô-sum and
//! time-integral primitives consumed by the estimator.
//!
//! Both integral primitives use the left-endpoint convention: the MLE's
//! stochastic integral is an Itô integral, and mixing conventions would
//! bias the estimator by a quadratic-variation term.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{BaseKernel, LocalizedKernel};
use crate::model::ModelSpec;
use crate::sim::{simulate_streamed, SimOptions, SolutionPath};

pub const DEFAULT_GUARD_RATIO: f64 = 8.0;

/// Locations and resolution of a set of local measurements.
#[derive(Debug, Clone)]
pub struct MeasurementConfig {
    pub delta: f64,
    pub locations: Vec<Vec<f64>>,
    pub kernel: Arc<BaseKernel>,
    /// Minimum number of grid points per kernel support radius.
    pub guard_ratio: f64,
}

impl MeasurementConfig {
    /// Validates geometry: every localized kernel must be supported
    /// inside Λ = (0,1)^d and supports must be pairwise disjoint.
    pub fn new(delta: f64, locations: Vec<Vec<f64>>, kernel: Arc<BaseKernel>) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::Config("measurement resolution must be positive".into()));
        }
        if locations.is_empty() {
            return Err(Error::Config("at least one measurement location required".into()));
        }
        let d = kernel.dimension();
        let support = delta * kernel.support_radius();
        for (k, x) in locations.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Config(format!(
                    "location {k} has dimension {} but kernel is {d}-dimensional",
                    x.len()
                )));
            }
            for &xi in x.iter() {
                if xi - support <= 0.0 || xi + support >= 1.0 {
                    return Err(Error::Config(format!(
                        "support of K_delta at location {k} = {x:?} is not contained in (0,1)^{d} (radius {support:.4})"
                    )));
                }
            }
        }
        for k in 0..locations.len() {
            for l in k + 1..locations.len() {
                let dist: f64 = locations[k]
                    .iter()
                    .zip(locations[l].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist <= 2.0 * support {
                    return Err(Error::Config(format!(
                        "supports at locations {k} and {l} overlap: |x_k - x_l| = {dist:.5} <= 2 delta r_K = {:.5}",
                        2.0 * support
                    )));
                }
            }
        }
        Ok(MeasurementConfig {
            delta,
            locations,
            kernel,
            guard_ratio: DEFAULT_GUARD_RATIO,
        })
    }

    pub fn with_guard_ratio(mut self, guard_ratio: f64) -> Self {
        self.guard_ratio = guard_ratio;
        self
    }

    fn check_resolution(&self, grid: &Grid) -> Result<()> {
        let support = self.delta * self.kernel.support_radius();
        let points_per_radius = support / grid.dx();
        if points_per_radius < self.guard_ratio {
            return Err(Error::Measurement(format!(
                "grid too coarse for delta = {}: {points_per_radius:.2} points per kernel radius, {} required",
                self.delta, self.guard_ratio
            )));
        }
        if grid.d != self.kernel.dimension() {
            return Err(Error::Measurement(
                "grid dimension does not match kernel dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Quadrature stencil of one localized functional: node indices and the
/// kernel-derivative values times the cell volume.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    #[inline]
    pub fn apply(&self, row: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (n, w) in self.nodes.iter().zip(self.weights.iter()) {
            acc += row[*n] * w;
        }
        acc
    }
}

/// Node indices within the support ball of a localized kernel.
fn support_nodes(grid: &Grid, center: &[f64], radius: f64) -> Vec<usize> {
    let dx = grid.dx();
    let m = grid.m;
    let axis_range = |c: f64| -> (usize, usize) {
        let lo = ((c - radius) / dx - 1.0).ceil().max(0.0) as usize;
        let hi = (((c + radius) / dx - 1.0).floor() as isize).min(m as isize - 1);
        (lo, hi.max(-1) as usize)
    };
    let mut nodes = Vec::new();
    match grid.d {
        1 => {
            let (lo, hi) = axis_range(center[0]);
            if (hi as isize) >= lo as isize {
                for i in lo..=hi {
                    nodes.push(i);
                }
            }
        }
        _ => {
            let (lo0, hi0) = axis_range(center[0]);
            let (lo1, hi1) = axis_range(center[1]);
            let r2 = radius * radius;
            for i in lo0..=hi0 {
                let x0 = (i as f64 + 1.0) * dx;
                for j in lo1..=hi1 {
                    let x1 = (j as f64 + 1.0) * dx;
                    let dist2 = (x0 - center[0]).powi(2) + (x1 - center[1]).powi(2);
                    if dist2 <= r2 {
                        nodes.push(i * m + j);
                    }
                }
            }
        }
    }
    nodes
}

/// Quadrature stencil for an arbitrary compactly supported functional.
pub fn functional_stencil<F: Fn(&[f64]) -> f64>(
    grid: &Grid,
    center: &[f64],
    radius: f64,
    f: F,
) -> Stencil {
    let vol = grid.cell_volume();
    let nodes = support_nodes(grid, center, radius);
    let weights = nodes
        .iter()
        .map(|&n| f(&grid.node_coords(n)) * vol)
        .collect();
    Stencil { nodes, weights }
}

/// The stencils of one measurement location: value, gradient components
/// and Laplacian of the localized kernel.
pub struct LocationStencils {
    pub value: Stencil,
    pub grad: Vec<Stencil>,
    pub lap: Stencil,
}

/// Build per-location stencils for all measurement functionals.
pub fn kernel_stencils(grid: &Grid, config: &MeasurementConfig) -> Result<Vec<LocationStencils>> {
    config.check_resolution(grid)?;
    let vol = grid.cell_volume();
    let d = grid.d;
    let mut out = Vec::with_capacity(config.locations.len());
    for x in &config.locations {
        let loc = LocalizedKernel::new(&config.kernel, config.delta, x.clone())?;
        let radius = loc.support_radius();
        let nodes = support_nodes(grid, x, radius);
        let mut value_w = Vec::with_capacity(nodes.len());
        let mut grad_w: Vec<Vec<f64>> = vec![Vec::with_capacity(nodes.len()); d];
        let mut lap_w = Vec::with_capacity(nodes.len());
        for &n in &nodes {
            let u = grid.node_coords(n);
            value_w.push(loc.value(&u) * vol);
            let g = loc.grad(&u);
            for (i, gi) in g.into_iter().enumerate() {
                grad_w[i].push(gi * vol);
            }
            lap_w.push(loc.lap(&u) * vol);
        }
        out.push(LocationStencils {
            value: Stencil {
                nodes: nodes.clone(),
                weights: value_w,
            },
            grad: grad_w
                .into_iter()
                .map(|w| Stencil {
                    nodes: nodes.clone(),
                    weights: w,
                })
                .collect(),
            lap: Stencil {
                nodes,
                weights: lap_w,
            },
        });
    }
    Ok(out)
}

/// The extracted observation processes, one time series per location and
/// derivative order, all of length n_t + 1.
#[derive(Debug, Clone)]
pub struct LocalMeasurementSet {
    pub delta: f64,
    pub locations: Vec<Vec<f64>>,
    pub dt: f64,
    /// `x[k][j]` = X_δ,k(t_j)
    pub x: Vec<Vec<f64>>,
    /// `grad[k][i][j]` = (X^∇_δ,k)_i(t_j)
    pub grad: Vec<Vec<Vec<f64>>>,
    /// `lap[k][j]` = X^Δ_δ,k(t_j)
    pub lap: Vec<Vec<f64>>,
}

impl LocalMeasurementSet {
    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn dimension(&self) -> usize {
        self.locations[0].len()
    }

    pub fn series_len(&self) -> usize {
        self.x[0].len()
    }

    /// Debug CSV export: t, k, X, X_grad_1..d, X_lap.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.dimension();
        write!(w, "t,k,x")?;
        for i in 1..=d {
            write!(w, ",x_grad_{i}")?;
        }
        writeln!(w, ",x_lap")?;
        for k in 0..self.n_locations() {
            for j in 0..self.series_len() {
                write!(w, "{:.12e},{k},{:.17e}", j as f64 * self.dt, self.x[k][j])?;
                for i in 0..d {
                    write!(w, ",{:.17e}", self.grad[k][i][j])?;
                }
                writeln!(w, ",{:.17e}", self.lap[k][j])?;
            }
        }
        Ok(())
    }
}

fn empty_set(config: &MeasurementConfig, grid: &Grid) -> LocalMeasurementSet {
    let n = config.locations.len();
    let d = grid.d;
    let cap = grid.n_t + 1;
    LocalMeasurementSet {
        delta: config.delta,
        locations: config.locations.clone(),
        dt: grid.dt(),
        x: vec![Vec::with_capacity(cap); n],
        grad: vec![vec![Vec::with_capacity(cap); d]; n],
        lap: vec![Vec::with_capacity(cap); n],
    }
}

fn push_row(set: &mut LocalMeasurementSet, stencils: &[LocationStencils], row: &[f64]) {
    for (k, st) in stencils.iter().enumerate() {
        set.x[k].push(st.value.apply(row));
        for (i, g) in st.grad.iter().enumerate() {
            set.grad[k][i].push(g.apply(row));
        }
        set.lap[k].push(st.lap.apply(row));
    }
}

/// Extract local measurements from a stored solution path.
pub fn measure(path: &SolutionPath, config: &MeasurementConfig) -> Result<LocalMeasurementSet> {
    let stencils = kernel_stencils(&path.grid, config)?;
    let mut set = empty_set(config, &path.grid);
    for j in 0..=path.grid.n_t {
        push_row(&mut set, &stencils, path.row(j));
    }
    Ok(set)
}

/// Simulate and measure in one pass without storing the space-time field.
/// Produces bit-identical series to `measure(simulate(..), ..)`.
pub fn measure_streamed(
    model: &ModelSpec,
    grid: &Grid,
    seed: u64,
    opts: &SimOptions,
    config: &MeasurementConfig,
) -> Result<LocalMeasurementSet> {
    let stencils = kernel_stencils(grid, config)?;
    let mut set = empty_set(config, grid);
    simulate_streamed(model, grid, seed, opts, |_, row| {
        push_row(&mut set, &stencils, row);
    })?;
    Ok(set)
}

/// Time series of ⟨X(t_j), g⟩ for an arbitrary stencil.
pub fn project_series(path: &SolutionPath, stencil: &Stencil) -> Vec<f64> {
    (0..=path.grid.n_t)
        .map(|j| stencil.apply(path.row(j)))
        .collect()
}

/// Left-endpoint Riemann-Itô sum `Σ_j f[j]·(x[j+1] - x[j])`.
pub fn ito_sum(f: &[f64], x: &[f64]) -> Result<f64> {
    if f.len() != x.len() {
        return Err(Error::Contract(format!(
            "ito_sum length mismatch: {} vs {}",
            f.len(),
            x.len()
        )));
    }
    if f.len() < 2 {
        return Err(Error::Contract("ito_sum needs at least two samples".into()));
    }
    let mut acc = 0.0;
    for j in 0..f.len() - 1 {
        acc += f[j] * (x[j + 1] - x[j]);
    }
    Ok(acc)
}

/// Left-endpoint time integral `Σ_{j < n} f[j]·Δt`, matching the Itô-sum
/// filtration convention (the final sample is excluded).
pub fn time_integral(f: &[f64], dt: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    f[..f.len() - 1].iter().sum::<f64>() * dt
}
