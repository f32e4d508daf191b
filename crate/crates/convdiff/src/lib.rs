//! Numerical laboratory for a linear stochastic convection-diffusion equation
//!
//! ```text
//! dX(t) = (a ΔX + θ·∇X + c X) dt + dW(t),   X(t)|_∂Λ = 0,   Λ = (0,1)^d,
//! ```
//!
//! observed through localized point-spread measurements
//! `X_δ,k(t) = ⟨X(t), K_δ,x_k⟩` with `K_δ,x(u) = δ^{-d/2} K((u-x)/δ)`.
//!
//! The crate provides, in dependency order:
//!
//! * [`kernel`] — compactly supported point-spread functions `K = -ΔK̄`,
//!   their exact derivatives, L² norms and the asymptotic Fisher matrix;
//! * [`model`] / [`grid`] — coefficient families, grids, initial conditions;
//! * [`sim`] — a semi-implicit finite-difference solver driven by
//!   discretized space-time white noise;
//! * [`measure`] — extraction of the local observation processes and the
//!   Itô-sum / time-integral primitives;
//! * [`weights`] — local-linear reproducing weights `w_k(x)`;
//! * [`estimator`] — the weighted augmented MLE `θ̂_δ(x)`, plug-in
//!   diffusivity estimation, domain extension and integrated risk.

pub mod banded;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod sim;
pub mod weights;

pub use error::{Error, Result};
pub use grid::Grid;
pub use kernel::BaseKernel;
pub use model::{ModelSpec, ReactionSpec, ThetaSpec, X0Mode};
pub use sim::SolutionPath;
