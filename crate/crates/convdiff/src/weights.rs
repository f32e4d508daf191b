//! Local-linear reproducing weights.
//!
//! Given a bandwidth h and a compactly supported smoothing kernel V, the
//! weight of location x_k at evaluation point x is
//!
//! ```text
//! w_k(x) = (N h^d)^{-1} U(0)ᵀ B_Nx^{-1} U(z_k) V(z_k),   z_k = (x_k - x)/h,
//! B_Nx  = (N h^d)^{-1} Σ_k U(z_k) U(z_k)ᵀ V(z_k),        U(u) = (1, u₁, …, u_d)ᵀ.
//! ```
//!
//! By construction Σ w_k = 1 and Σ (x_k - x) w_k = 0 (first-order
//! reproducing property), and w_k = 0 outside the V-support window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Smoothing kernels with compact support in [-1,1]^d (product form
/// across coordinates in d > 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingKernel {
    /// V(y) = 1(-1/2 ≤ y ≤ 1/2), closed at the boundary.
    Rectangular,
    /// V(y) = 0.75(1 - y²)·1(|y| ≤ 1).
    Epanechnikov,
}

impl SmoothingKernel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rectangular" => Ok(SmoothingKernel::Rectangular),
            "epanechnikov" => Ok(SmoothingKernel::Epanechnikov),
            other => Err(Error::Config(format!("unknown smoothing kernel '{other}'"))),
        }
    }

    fn eval_1d(&self, u: f64) -> f64 {
        match self {
            SmoothingKernel::Rectangular => {
                if (-0.5..=0.5).contains(&u) {
                    1.0
                } else {
                    0.0
                }
            }
            SmoothingKernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Product-form evaluation across coordinates.
    pub fn eval(&self, u: &[f64]) -> f64 {
        u.iter().map(|&ui| self.eval_1d(ui)).product()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightConfig {
    pub h: f64,
    pub v: SmoothingKernel,
    /// Ridge added to B_Nx when it is numerically singular. Zero (the
    /// default) turns singularity into a hard error; a positive value
    /// regularizes and flags the result as non-reproducing unless the
    /// residuals still pass.
    #[serde(default)]
    pub ridge: f64,
}

impl WeightConfig {
    pub fn new(h: f64, v: SmoothingKernel) -> Result<Self> {
        if h <= 0.0 {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        Ok(WeightConfig { h, v, ridge: 0.0 })
    }
}

/// Weights at one evaluation point together with design diagnostics.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    pub h: f64,
    /// Smallest eigenvalue of B_Nx.
    pub min_eig: f64,
    /// Number of locations with V((x_k-x)/h) ≠ 0.
    pub active: usize,
    /// Whether the order-1 reproducing property holds to tolerance.
    pub reproducing: bool,
}

const SINGULAR_EIG: f64 = 1e-12;
const REPRO_TOL: f64 = 1e-10;

/// Local-linear weights per the B_Nx formula.
pub fn compute_weights(
    x: &[f64],
    locations: &[Vec<f64>],
    config: &WeightConfig,
) -> Result<WeightSet> {
    let d = x.len();
    let n = locations.len();
    if n == 0 {
        return Err(Error::Config("no locations supplied".into()));
    }
    let h = config.h;
    let nhd = n as f64 * h.powi(d as i32);
    let p = d + 1;

    let mut b = vec![0.0; p * p];
    let mut v_vals = vec![0.0; n];
    let mut active = 0usize;
    let mut z_all = vec![0.0; n * d];
    for (k, xk) in locations.iter().enumerate() {
        debug_assert_eq!(xk.len(), d);
        for i in 0..d {
            z_all[k * d + i] = (xk[i] - x[i]) / h;
        }
        let z = &z_all[k * d..(k + 1) * d];
        let v = config.v.eval(z);
        v_vals[k] = v;
        if v != 0.0 {
            active += 1;
            let mut u = vec![1.0; p];
            u[1..].copy_from_slice(z);
            for r in 0..p {
                for c in 0..p {
                    b[r * p + c] += u[r] * u[c] * v / nhd;
                }
            }
        }
    }

    let min_eig = linalg::sym_eigenvalues(&b, p)[0];
    let mut ridged = false;
    if min_eig < SINGULAR_EIG {
        if config.ridge == 0.0 {
            return Err(Error::DegenerateDesign {
                x: x.to_vec(),
                active,
                min_eig,
            });
        }
        for r in 0..p {
            b[r * p + r] += config.ridge;
        }
        ridged = true;
    }

    // g = B^{-1} e₁, then w_k = (N h^d)^{-1} gᵀU(z_k) V(z_k).
    let mut e1 = vec![0.0; p];
    e1[0] = 1.0;
    let g = linalg::solve(&b, &e1, p).ok_or_else(|| Error::DegenerateDesign {
        x: x.to_vec(),
        active,
        min_eig,
    })?;

    let mut weights = vec![0.0; n];
    for k in 0..n {
        if v_vals[k] == 0.0 {
            continue;
        }
        let z = &z_all[k * d..(k + 1) * d];
        let mut gu = g[0];
        for i in 0..d {
            gu += g[1 + i] * z[i];
        }
        weights[k] = gu * v_vals[k] / nhd;
    }

    let mut ws = WeightSet {
        x: x.to_vec(),
        weights,
        h,
        min_eig,
        active,
        reproducing: true,
    };
    if ridged {
        let (sum_res, lin_res) = reproducing_residuals(&ws, locations);
        ws.reproducing = sum_res < REPRO_TOL && lin_res.iter().all(|r| r.abs() < REPRO_TOL * h);
    }
    Ok(ws)
}

/// (|Σw - 1|, Σ(x_k - x)_i w_k per coordinate).
fn reproducing_residuals(ws: &WeightSet, locations: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let d = ws.x.len();
    let sum: f64 = ws.weights.iter().sum();
    let mut lin = vec![0.0; d];
    for (k, xk) in locations.iter().enumerate() {
        for i in 0..d {
            lin[i] += (xk[i] - ws.x[i]) * ws.weights[k];
        }
    }
    ((sum - 1.0).abs(), lin)
}

/// Diagnostic report against the weight-function conditions.
#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    /// max_k |w_k| · N h^d  (condition (1) scaled)
    pub max_scaled_weight: f64,
    /// Σ_k |w_k|  (condition (2))
    pub abs_sum: f64,
    /// Locations with w_k ≠ 0 outside the bandwidth window (condition (3),
    /// componentwise support).
    pub support_violations: usize,
    /// |Σ w_k - 1|
    pub sum_residual: f64,
    /// Σ (x_k - x)_i w_k per coordinate (condition (4))
    pub linear_residuals: Vec<f64>,
    pub c_star: f64,
    pub pass: bool,
}

pub const DEFAULT_C_STAR: f64 = 10.0;

pub fn validate_weights(ws: &WeightSet, locations: &[Vec<f64>], c_star: f64) -> WeightReport {
    let d = ws.x.len();
    let n = locations.len() as f64;
    let nhd = n * ws.h.powi(d as i32);
    let max_scaled = ws
        .weights
        .iter()
        .map(|w| w.abs())
        .fold(0.0f64, f64::max)
        * nhd;
    let abs_sum: f64 = ws.weights.iter().map(|w| w.abs()).sum();
    let mut violations = 0usize;
    for (k, xk) in locations.iter().enumerate() {
        if ws.weights[k] != 0.0 {
            let outside = xk
                .iter()
                .zip(ws.x.iter())
                .any(|(a, b)| (a - b).abs() > ws.h);
            if outside {
                violations += 1;
            }
        }
    }
    let (sum_res, lin_res) = reproducing_residuals(ws, locations);
    let pass = max_scaled <= c_star
        && abs_sum <= c_star
        && violations == 0
        && sum_res < REPRO_TOL
        && lin_res.iter().all(|r| r.abs() < REPRO_TOL * ws.h);
    WeightReport {
        max_scaled_weight: max_scaled,
        abs_sum,
        support_violations: violations,
        sum_residual: sum_res,
        linear_residuals: lin_res,
        c_star,
        pass,
    }
}
