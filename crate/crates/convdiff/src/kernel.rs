//! Compactly supported point-spread functions.
//!
//! A base kernel is a four-times weakly differentiable function K̄ with
//! compact support, either even or odd. The kernel actually entering the
//! observation model is `K = -ΔK̄`; the measurements additionally use `∇K`
//! and `ΔK`, so K̄ must carry exact derivatives up to order four.
//!
//! Two representations are supported:
//!
//! * `d = 1`: piecewise polynomials in `y` (default: `K̄(y) = (1-y²)⁵` on
//!   `[-1,1]`, optionally rescaled to another support radius);
//! * `d = 2`: radial polynomials `K̄(y) = P(|y|²)` on a disk (default
//!   profile `P(s) = (1-s)⁵`).
//!
//! All evaluations and L² norms are exact polynomial algebra; only the
//! Fourier-side Fisher matrix uses quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Polynomial helpers (monomial basis, dense coefficient vector)
// ---------------------------------------------------------------------------

pub(crate) fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub(crate) fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * k as f64)
        .collect()
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Exact ∫_lo^hi p(x) dx.
pub(crate) fn poly_integral(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let p = (k + 1) as f64;
        acc += c / p * (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1));
    }
    acc
}

// ---------------------------------------------------------------------------
// Kernel representation
// ---------------------------------------------------------------------------

/// One polynomial piece of a one-dimensional kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients in the monomial basis of `y`, ascending degree.
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, y: f64) -> f64 {
        poly_eval(&self.coeffs, y)
    }

    fn derivative(&self) -> Piece {
        Piece {
            lo: self.lo,
            hi: self.hi,
            coeffs: poly_derivative(&self.coeffs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Shape {
    /// d = 1 piecewise polynomial in y.
    Piecewise1d(Vec<Piece>),
    /// d = 2 radial polynomial: K̄(y) = P(|y|²) for |y| ≤ radius,
    /// coefficients of P in the monomial basis of s = |y|².
    RadialPoly(Vec<f64>),
}

/// A base point-spread function K̄ together with the derived kernel
/// `K = -ΔK̄` and its exact derivatives.
#[derive(Debug, Clone)]
pub struct BaseKernel {
    d: usize,
    radius: f64,
    parity: Parity,
    shape: Shape,
    /// d = 1: pieces of K̄⁽ᵐ⁾ for m = 0..=4.
    kbar_derivs: Vec<Vec<Piece>>,
    /// d = 2: s-profiles of Q = -ΔK̄ and its derivatives.
    q_derivs: Vec<Vec<f64>>,
}

/// Serializable description of a kernel (support, pieces, coefficients),
/// written into experiment outputs for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelDescription {
    pub dimension: usize,
    pub support_radius: f64,
    pub parity: Parity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<Piece>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial_profile: Option<Vec<f64>>,
}

impl BaseKernel {
    // -- constructors -------------------------------------------------------

    /// `K̄(y) = (1 - (y/r)²)⁵` on `[-r, r]`.
    pub fn default_1d() -> Self {
        Self::scaled_default_1d(1.0).unwrap()
    }

    pub fn scaled_default_1d(radius: f64) -> Result<Self> {
        let coeffs = bump_coeffs_1d(radius, 5);
        Self::from_pieces(vec![Piece {
            lo: -radius,
            hi: radius,
            coeffs,
        }])
    }

    /// Odd variant `K̄(y) = (y/r)·(1 - (y/r)²)⁵` on `[-r, r]`.
    pub fn odd_1d(radius: f64) -> Result<Self> {
        let even = bump_coeffs_1d(radius, 5);
        let mut coeffs = vec![0.0];
        coeffs.extend(even.iter().map(|c| c / radius));
        Self::from_pieces(vec![Piece {
            lo: -radius,
            hi: radius,
            coeffs,
        }])
    }

    /// `K̄(y) = (1 - |y/r|²)⁵` on the disk of the given radius (d = 2).
    pub fn default_2d() -> Self {
        Self::scaled_default_2d(1.0).unwrap()
    }

    pub fn scaled_default_2d(radius: f64) -> Result<Self> {
        // P(s) = (1 - s/r²)⁵, s = |y|².
        let r2 = radius * radius;
        let base = binomial_expansion(5);
        let profile: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(k, c)| c / r2.powi(k as i32))
            .collect();
        Self::from_radial_profile(profile, radius)
    }

    /// Kernel selection by name, as used in experiment configuration files.
    pub fn from_name(name: &str, radius: f64) -> Result<Self> {
        match name {
            "poly_bump" => Self::scaled_default_1d(radius),
            "poly_bump_odd" => Self::odd_1d(radius),
            "poly_bump_2d" => Self::scaled_default_2d(radius),
            other => Err(Error::Config(format!("unknown kernel name '{other}'"))),
        }
    }

    /// General d = 1 kernel from explicit pieces. Validates support,
    /// boundary decay (H⁴ membership) and parity.
    pub fn from_pieces(mut pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config("kernel needs at least one piece".into()));
        }
        pieces.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        for p in &pieces {
            if !(p.lo < p.hi) {
                return Err(Error::Config("kernel piece with empty interval".into()));
            }
        }
        for w in pieces.windows(2) {
            if w[0].hi > w[1].lo + 1e-14 {
                return Err(Error::Config("kernel pieces overlap".into()));
            }
        }
        let radius = pieces
            .iter()
            .flat_map(|p| [p.lo.abs(), p.hi.abs()])
            .fold(0.0f64, f64::max);

        let mut kbar_derivs = vec![pieces.clone()];
        for _ in 0..4 {
            let next: Vec<Piece> = kbar_derivs
                .last()
                .unwrap()
                .iter()
                .map(Piece::derivative)
                .collect();
            kbar_derivs.push(next);
        }

        let kernel = BaseKernel {
            d: 1,
            radius,
            parity: detect_parity_1d(&pieces, radius)?,
            shape: Shape::Piecewise1d(pieces),
            kbar_derivs,
            q_derivs: Vec::new(),
        };
        kernel.validate_smoothness_1d()?;
        Ok(kernel)
    }

    /// d = 2 radial kernel from an s-profile on `[0, radius²]`.
    pub fn from_radial_profile(profile: Vec<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Config("kernel radius must be positive".into()));
        }
        let mut profile_derivs = vec![profile.clone()];
        for _ in 0..3 {
            profile_derivs.push(poly_derivative(profile_derivs.last().unwrap()));
        }
        // ΔK̄ in d = 2 for K̄ = P(s): Δ = 4sP'' + 4P'. K = -ΔK̄ =: Q(s).
        let q = {
            let p1 = &profile_derivs[1];
            let p2 = &profile_derivs[2];
            let mut q = poly_mul(&[0.0, 4.0], p2);
            for (k, c) in p1.iter().enumerate() {
                if k >= q.len() {
                    q.resize(k + 1, 0.0);
                }
                q[k] += 4.0 * c;
            }
            q.iter_mut().for_each(|c| *c = -*c);
            q
        };
        let mut q_derivs = vec![q];
        for _ in 0..2 {
            q_derivs.push(poly_derivative(q_derivs.last().unwrap()));
        }
        let r2 = radius * radius;
        // H⁴ membership: P and its first three derivatives vanish at s = r².
        for (m, p) in profile_derivs.iter().take(4).enumerate() {
            let scale = p.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
            if poly_eval(p, r2).abs() > 1e-9 * scale {
                return Err(Error::Config(format!(
                    "radial profile derivative {m} does not vanish at the support boundary"
                )));
            }
        }
        Ok(BaseKernel {
            d: 2,
            radius,
            parity: Parity::Even,
            shape: Shape::RadialPoly(profile),
            kbar_derivs: Vec::new(),
            q_derivs,
        })
    }

    fn validate_smoothness_1d(&self) -> Result<()> {
        // Value and first three derivatives must vanish at the support
        // boundary and be continuous at interior piece boundaries.
        for m in 0..4 {
            let pieces = &self.kbar_derivs[m];
            let scale = pieces
                .iter()
                .flat_map(|p| p.coeffs.iter().map(|c| c.abs()))
                .fold(1.0f64, f64::max);
            let first = pieces.first().unwrap();
            let last = pieces.last().unwrap();
            if first.eval(first.lo).abs() > 1e-9 * scale
                || last.eval(last.hi).abs() > 1e-9 * scale
            {
                return Err(Error::Config(format!(
                    "kernel derivative {m} does not vanish at the support boundary"
                )));
            }
            for w in pieces.windows(2) {
                if (w[0].hi - w[1].lo).abs() < 1e-14
                    && (w[0].eval(w[0].hi) - w[1].eval(w[1].lo)).abs() > 1e-9 * scale
                {
                    return Err(Error::Config(format!(
                        "kernel derivative {m} is discontinuous at an interior piece boundary"
                    )));
                }
            }
        }
        Ok(())
    }

    // -- accessors ----------------------------------------------------------

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Support radius r_K of K̄ (and of K).
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn description(&self) -> KernelDescription {
        match &self.shape {
            Shape::Piecewise1d(pieces) => KernelDescription {
                dimension: self.d,
                support_radius: self.radius,
                parity: self.parity,
                pieces: Some(pieces.clone()),
                radial_profile: None,
            },
            Shape::RadialPoly(profile) => KernelDescription {
                dimension: self.d,
                support_radius: self.radius,
                parity: self.parity,
                pieces: None,
                radial_profile: Some(profile.clone()),
            },
        }
    }

    fn in_support(&self, y: &[f64]) -> bool {
        match self.d {
            1 => y[0].abs() <= self.radius,
            _ => y.iter().map(|v| v * v).sum::<f64>() <= self.radius * self.radius,
        }
    }

    // -- evaluation ---------------------------------------------------------

    fn eval_kbar_deriv_1d(&self, m: usize, y: f64) -> f64 {
        if y.abs() > self.radius {
            return 0.0;
        }
        for p in &self.kbar_derivs[m] {
            if y >= p.lo && y <= p.hi {
                return p.eval(y);
            }
        }
        0.0
    }

    /// K̄ itself (mostly used by tests and diagnostics).
    pub fn eval_kbar(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.d);
        if !self.in_support(y) {
            return 0.0;
        }
        match &self.shape {
            Shape::Piecewise1d(_) => self.eval_kbar_deriv_1d(0, y[0]),
            Shape::RadialPoly(profile) => {
                let s = y.iter().map(|v| v * v).sum::<f64>();
                poly_eval(profile, s)
            }
        }
    }

    /// `K(y) = -(ΔK̄)(y)`; exactly zero outside the support.
    pub fn eval_k(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.d);
        if !self.in_support(y) {
            return 0.0;
        }
        match self.d {
            1 => -self.eval_kbar_deriv_1d(2, y[0]),
            _ => {
                let s = y.iter().map(|v| v * v).sum::<f64>();
                poly_eval(&self.q_derivs[0], s)
            }
        }
    }

    /// `∇K(y)`.
    pub fn eval_grad_k(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.d);
        if !self.in_support(y) {
            return vec![0.0; self.d];
        }
        match self.d {
            1 => vec![-self.eval_kbar_deriv_1d(3, y[0])],
            _ => {
                let s = y.iter().map(|v| v * v).sum::<f64>();
                let q1 = poly_eval(&self.q_derivs[1], s);
                y.iter().map(|v| 2.0 * v * q1).collect()
            }
        }
    }

    /// `ΔK(y)`.
    pub fn eval_lap_k(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.d);
        if !self.in_support(y) {
            return 0.0;
        }
        match self.d {
            1 => -self.eval_kbar_deriv_1d(4, y[0]),
            _ => {
                let s = y.iter().map(|v| v * v).sum::<f64>();
                4.0 * s * poly_eval(&self.q_derivs[2], s) + 4.0 * poly_eval(&self.q_derivs[1], s)
            }
        }
    }

    // -- L² norms (exact) ----------------------------------------------------

    /// `‖D^α K‖_{L²(R^d)}` for a multi-index with |α| ≤ 2.
    pub fn l2_norm(&self, alpha: &[usize]) -> Result<f64> {
        if alpha.len() != self.d {
            return Err(Error::Contract(format!(
                "multi-index length {} does not match dimension {}",
                alpha.len(),
                self.d
            )));
        }
        let order: usize = alpha.iter().sum();
        if order > 2 {
            return Err(Error::Contract("|alpha| must be at most 2".into()));
        }
        match self.d {
            1 => {
                // K^{(m)} = -K̄^{(2+m)}
                let pieces = &self.kbar_derivs[2 + alpha[0]];
                let mut acc = 0.0;
                for p in pieces {
                    acc += poly_integral(&poly_mul(&p.coeffs, &p.coeffs), p.lo, p.hi);
                }
                Ok(acc.sqrt())
            }
            _ => Ok(self.l2_norm_sq_radial(alpha[0], alpha[1]).sqrt()),
        }
    }

    /// Shorthand for `‖K‖_{L²}`.
    pub fn l2_norm_k(&self) -> f64 {
        self.l2_norm(&vec![0; self.d]).unwrap()
    }

    fn l2_norm_sq_radial(&self, a1: usize, a2: usize) -> f64 {
        use std::f64::consts::PI;
        let q = &self.q_derivs[0];
        let q1 = &self.q_derivs[1];
        let q2 = &self.q_derivs[2];
        let r2 = self.radius * self.radius;
        let int = |p: &[f64]| poly_integral(p, 0.0, r2);
        match (a1, a2) {
            // ∫ Q(s)² dy = π ∫₀^{r²} Q² ds
            (0, 0) => PI * int(&poly_mul(q, q)),
            // ∂_i K = 2 y_i Q'(s): ∫ = 2π ∫ s Q'² ds
            (1, 0) | (0, 1) => 2.0 * PI * int(&poly_mul(&[0.0, 1.0], &poly_mul(q1, q1))),
            // ∂_i² K = 2Q' + 4 y_i² Q''
            (2, 0) | (0, 2) => {
                let t1 = 4.0 * PI * int(&poly_mul(q1, q1));
                let t2 = 8.0 * PI * int(&poly_mul(&[0.0, 1.0], &poly_mul(q1, q2)));
                let t3 = 6.0 * PI * int(&poly_mul(&[0.0, 0.0, 1.0], &poly_mul(q2, q2)));
                t1 + t2 + t3
            }
            // ∂₁∂₂ K = 4 y₁ y₂ Q''
            (1, 1) => 2.0 * PI * int(&poly_mul(&[0.0, 0.0, 1.0], &poly_mul(q2, q2))),
            _ => unreachable!(),
        }
    }

    // -- Fourier transform and Fisher matrix ---------------------------------

    /// `K̂(ξ) = ∫ K(y) e^{-i ξ·y} dy`, evaluated as (re, im). d = 1 only.
    fn khat_1d(&self, xi: f64) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        let pieces = &self.kbar_derivs[2];
        for p in pieces {
            let len = p.hi - p.lo;
            let n = ((xi.abs() * len / 2.0).ceil() as usize + 24).min(6000);
            let (nodes, weights) = gauss_legendre(n, p.lo, p.hi);
            for (y, w) in nodes.iter().zip(weights.iter()) {
                let k = -p.eval(*y);
                let phase = xi * y;
                re += w * k * phase.cos();
                im -= w * k * phase.sin();
            }
        }
        (re, im)
    }

    /// Radial K̂ at |ξ| = q for d = 2 kernels.
    fn khat_radial_2d(&self, q: f64) -> f64 {
        // K̂(q e₁) = ∫ κ(y₁) cos(q y₁) dy₁ with κ(y₁) = ∫ K(y₁, y₂) dy₂.
        let r = self.radius;
        let n1 = ((q * r).ceil() as usize + 24).min(6000);
        let (nodes1, weights1) = gauss_legendre(n1, -r, r);
        let (gl_y2, gl_w2) = gauss_legendre(32, -1.0, 1.0);
        let mut acc = 0.0;
        for (y1, w1) in nodes1.iter().zip(weights1.iter()) {
            let half = (r * r - y1 * y1).max(0.0).sqrt();
            if half == 0.0 {
                continue;
            }
            let mut kappa = 0.0;
            for (t, w2) in gl_y2.iter().zip(gl_w2.iter()) {
                let y2 = half * t;
                let s = y1 * y1 + y2 * y2;
                kappa += w2 * half * poly_eval(&self.q_derivs[0], s);
            }
            acc += w1 * kappa * (q * y1).cos();
        }
        acc
    }

    /// Asymptotic Fisher matrix
    /// `Σ_ij = T/(2a) ⟨(-Δ)^{-1} ∂_i K, ∂_j K⟩`, computed by Fourier-side
    /// quadrature of `(2π)^{-d} ∫ ξ_i ξ_j |ξ|^{-2} |K̂(ξ)|² dξ`.
    pub fn fisher_sigma(&self, t_horizon: f64, a: f64) -> Result<Vec<f64>> {
        if t_horizon <= 0.0 || a <= 0.0 {
            return Err(Error::Contract("fisher_sigma requires T > 0 and a > 0".into()));
        }
        let pref = t_horizon / (2.0 * a);
        match self.d {
            1 => {
                let integral = self.fourier_integral(|xi| {
                    let (re, im) = self.khat_1d(xi);
                    re * re + im * im
                })?;
                // (2π)^{-1} · 2∫₀^∞ |K̂|² dξ
                Ok(vec![pref * integral / std::f64::consts::PI])
            }
            _ => {
                let integral = self.fourier_integral(|q| {
                    let phi = self.khat_radial_2d(q);
                    q * phi * phi
                })?;
                // Σ_ii = T/(2a) (2π)^{-2} π ∫₀^∞ q φ(q)² dq, off-diagonal 0.
                let diag = pref * integral / (4.0 * std::f64::consts::PI);
                Ok(vec![diag, 0.0, 0.0, diag])
            }
        }
    }

    /// Composite Gauss-Legendre integration of `g` over ξ ∈ (0, ∞) with a
    /// decay-based stopping rule.
    fn fourier_integral<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        let panel_width = 1.0 / self.radius;
        let (gl_x, gl_w) = gauss_legendre(24, 0.0, 1.0);
        let mut total = 0.0;
        let mut xi_lo = 0.0;
        let mut panels_since_peak = 0usize;
        let mut peak: f64 = 0.0;
        loop {
            let mut panel = 0.0;
            for (x, w) in gl_x.iter().zip(gl_w.iter()) {
                panel += w * panel_width * g(xi_lo + x * panel_width);
            }
            total += panel;
            peak = peak.max(panel.abs());
            if panel.abs() < 1e-12 * peak.max(1e-300) {
                panels_since_peak += 1;
                if panels_since_peak >= 3 {
                    return Ok(total);
                }
            } else {
                panels_since_peak = 0;
            }
            xi_lo += panel_width;
            if xi_lo * self.radius > 4000.0 {
                return Err(Error::Quadrature(format!(
                    "Fourier integral did not decay below tolerance by xi = {xi_lo:.1}"
                )));
            }
        }
    }
}

/// Coefficients of `(1 - (y/r)²)^p` in the monomial basis of y.
fn bump_coeffs_1d(radius: f64, p: usize) -> Vec<f64> {
    let base = binomial_expansion(p);
    let mut coeffs = vec![0.0; 2 * p + 1];
    let r2 = radius * radius;
    for (k, c) in base.iter().enumerate() {
        coeffs[2 * k] = c / r2.powi(k as i32);
    }
    coeffs
}

/// Coefficients of `(1 - s)^p` in the monomial basis of s.
fn binomial_expansion(p: usize) -> Vec<f64> {
    let mut c = vec![0.0; p + 1];
    let mut binom = 1.0f64;
    for (k, slot) in c.iter_mut().enumerate() {
        *slot = if k % 2 == 0 { binom } else { -binom };
        binom = binom * (p - k) as f64 / (k + 1) as f64;
    }
    c
}

fn detect_parity_1d(pieces: &[Piece], radius: f64) -> Result<Parity> {
    let eval = |y: f64| -> f64 {
        for p in pieces {
            if y >= p.lo && y <= p.hi {
                return p.eval(y);
            }
        }
        0.0
    };
    let mut even_dev = 0.0f64;
    let mut odd_dev = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..=32 {
        let y = radius * i as f64 / 33.0;
        let (a, b) = (eval(y), eval(-y));
        even_dev = even_dev.max((a - b).abs());
        odd_dev = odd_dev.max((a + b).abs());
        scale = scale.max(a.abs()).max(b.abs());
    }
    let tol = 1e-9 * scale.max(1e-12);
    if even_dev <= tol {
        Ok(Parity::Even)
    } else if odd_dev <= tol {
        Ok(Parity::Odd)
    } else {
        Err(Error::Config(
            "base kernel must be either even or odd".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

/// `K_{δ,x}` and its derivatives: evaluation follows the scaling
/// `D^α K_{δ,x}(u) = δ^{-d/2-|α|} (D^α K)(δ^{-1}(u-x))`.
#[derive(Debug, Clone)]
pub struct LocalizedKernel<'a> {
    pub base: &'a BaseKernel,
    pub delta: f64,
    pub center: Vec<f64>,
}

impl<'a> LocalizedKernel<'a> {
    pub fn new(base: &'a BaseKernel, delta: f64, center: Vec<f64>) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::Config("localization requires delta > 0".into()));
        }
        if center.len() != base.dimension() {
            return Err(Error::Contract(
                "localization center has wrong dimension".into(),
            ));
        }
        Ok(LocalizedKernel {
            base,
            delta,
            center,
        })
    }

    /// Support radius of the localized function: δ·r_K.
    pub fn support_radius(&self) -> f64 {
        self.delta * self.base.support_radius()
    }

    fn rescale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.center.iter())
            .map(|(ui, xi)| (ui - xi) / self.delta)
            .collect()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let d = self.base.dimension() as f64;
        self.delta.powf(-d / 2.0) * self.base.eval_k(&self.rescale(u))
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        let d = self.base.dimension() as f64;
        let f = self.delta.powf(-d / 2.0 - 1.0);
        self.base
            .eval_grad_k(&self.rescale(u))
            .into_iter()
            .map(|g| f * g)
            .collect()
    }

    pub fn lap(&self, u: &[f64]) -> f64 {
        let d = self.base.dimension() as f64;
        self.delta.powf(-d / 2.0 - 2.0) * self.base.eval_lap_k(&self.rescale(u))
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes (Newton on Legendre polynomials)
// ---------------------------------------------------------------------------

/// Nodes and weights for n-point Gauss-Legendre quadrature on [lo, hi].
pub(crate) fn gauss_legendre(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        loop {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    for i in 0..n {
        nodes[i] = mid + half * nodes[i];
        weights[i] *= half;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_k() -> BaseKernel {
        BaseKernel::default_1d()
    }

    #[test]
    fn k_vanishes_at_support_boundary() {
        let k = default_k();
        assert_eq!(k.eval_k(&[1.0]), 0.0);
        assert_eq!(k.eval_k(&[-1.0]), 0.0);
        assert_eq!(k.eval_k(&[1.0 + 1e-12]), 0.0);
        assert_eq!(k.eval_k(&[7.3]), 0.0);
    }

    #[test]
    fn k_at_origin_matches_symbolic_second_derivative() {
        // K̄ = (1-y²)⁵ ⇒ K̄'' = -10(1-y²)⁴ + 80y²(1-y²)³ ⇒ K(0) = -K̄''(0) = 10.
        let k = default_k();
        assert!((k.eval_k(&[0.0]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn k_integrates_to_zero() {
        let k = default_k();
        let n = 200_001usize;
        let dx = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let y = -1.0 + (i as f64 + 0.5) * dx;
            acc += k.eval_k(&[y]) * dx;
        }
        assert!(acc.abs() < 1e-9, "∫K = {acc}");
    }

    #[test]
    fn gradient_zero_at_origin_for_even_kernel() {
        let k = default_k();
        assert_eq!(k.eval_grad_k(&[0.0])[0], 0.0);
        let k2 = BaseKernel::default_2d();
        let g = k2.eval_grad_k(&[0.0, 0.0]);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn parity_of_k_and_derivatives() {
        let k = default_k();
        assert_eq!(k.parity(), Parity::Even);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let y: f64 = rng.gen_range(-1.1..1.1);
            assert!((k.eval_k(&[y]) - k.eval_k(&[-y])).abs() < 1e-12);
            assert!((k.eval_grad_k(&[y])[0] + k.eval_grad_k(&[-y])[0]).abs() < 1e-12);
            assert!((k.eval_lap_k(&[y]) - k.eval_lap_k(&[-y])).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_kernel_detected_and_valid() {
        let k = BaseKernel::odd_1d(1.0).unwrap();
        assert_eq!(k.parity(), Parity::Odd);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let y: f64 = rng.gen_range(-1.0..1.0);
            assert!((k.eval_k(&[y]) + k.eval_k(&[-y])).abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let k = default_k();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-5;
        for _ in 0..100 {
            let y: f64 = rng.gen_range(-0.9..0.9);
            let fd_grad = (k.eval_k(&[y + eps]) - k.eval_k(&[y - eps])) / (2.0 * eps);
            let grad = k.eval_grad_k(&[y])[0];
            let scale = grad.abs().max(1.0);
            assert!(
                (fd_grad - grad).abs() / scale < 1e-5,
                "grad mismatch at {y}: {fd_grad} vs {grad}"
            );
            let fd_lap =
                (k.eval_k(&[y + eps]) - 2.0 * k.eval_k(&[y]) + k.eval_k(&[y - eps])) / (eps * eps);
            let lap = k.eval_lap_k(&[y]);
            let scale = lap.abs().max(1.0);
            assert!(
                (fd_lap - lap).abs() / scale < 1e-4,
                "lap mismatch at {y}: {fd_lap} vs {lap}"
            );
        }
    }

    #[test]
    fn lap_at_half_matches_central_differences() {
        let k = default_k();
        let y = 0.5;
        let eps = 1e-5;
        let fd =
            (k.eval_k(&[y + eps]) - 2.0 * k.eval_k(&[y]) + k.eval_k(&[y - eps])) / (eps * eps);
        let exact = k.eval_lap_k(&[y]);
        assert!((fd - exact).abs() / exact.abs() < 1e-5);
    }

    #[test]
    fn l2_norm_matches_riemann_sum() {
        let k = default_k();
        let n = 1_000_000usize;
        let dx = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let y = -1.0 + (i as f64 + 0.5) * dx;
            let v = k.eval_k(&[y]);
            acc += v * v * dx;
        }
        let exact = k.l2_norm(&[0]).unwrap();
        assert!(
            (acc.sqrt() - exact).abs() / exact < 1e-6,
            "riemann {} vs exact {}",
            acc.sqrt(),
            exact
        );
    }

    #[test]
    fn l2_norm_scales_homogeneously() {
        // ‖c·K‖ = |c|·‖K‖: scale all coefficients of a copy.
        let k = default_k();
        let desc = k.description();
        let mut pieces = desc.pieces.unwrap();
        for p in &mut pieces {
            for c in &mut p.coeffs {
                *c *= -3.5;
            }
        }
        let k2 = BaseKernel::from_pieces(pieces).unwrap();
        let ratio = k2.l2_norm(&[0]).unwrap() / k.l2_norm(&[0]).unwrap();
        assert!((ratio - 3.5).abs() < 1e-12);
    }

    #[test]
    fn localization_preserves_l2_norm() {
        // ∫ K_{δ,x}² du = ‖K‖² for any δ, x (midpoint quadrature check).
        let k = default_k();
        for &(delta, x) in &[(0.05f64, 0.3f64), (0.2, 0.6)] {
            let loc = LocalizedKernel::new(&k, delta, vec![x]).unwrap();
            let n = 400_000usize;
            let (lo, hi) = (x - delta, x + delta);
            let dx = (hi - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let u = lo + (i as f64 + 0.5) * dx;
                let v = loc.value(&[u]);
                acc += v * v * dx;
            }
            let exact = k.l2_norm(&[0]).unwrap();
            assert!(
                (acc.sqrt() - exact).abs() / exact < 1e-6,
                "delta={delta}: {} vs {exact}",
                acc.sqrt()
            );
        }
    }

    #[test]
    fn radial_2d_norms_match_riemann_sums() {
        let k = BaseKernel::default_2d();
        let n = 2000usize;
        let dx = 2.0 / n as f64;
        let mut norm_k = 0.0;
        let mut norm_d1 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-1.0 + (i as f64 + 0.5) * dx, -1.0 + (j as f64 + 0.5) * dx];
                let v = k.eval_k(&y);
                norm_k += v * v * dx * dx;
                let g = k.eval_grad_k(&y)[0];
                norm_d1 += g * g * dx * dx;
            }
        }
        let exact_k = k.l2_norm(&[0, 0]).unwrap();
        let exact_d1 = k.l2_norm(&[1, 0]).unwrap();
        assert!((norm_k.sqrt() - exact_k).abs() / exact_k < 1e-4);
        assert!((norm_d1.sqrt() - exact_d1).abs() / exact_d1 < 1e-4);
    }

    #[test]
    fn fisher_sigma_matches_parseval_in_1d() {
        // In d = 1 the Fourier factor ξ²/ξ² cancels and Σ = T/(2a)·‖K‖².
        let k = default_k();
        let (t, a) = (1.0, 1.0);
        let sigma = k.fisher_sigma(t, a).unwrap();
        let parseval = t / (2.0 * a) * k.l2_norm(&[0]).unwrap().powi(2);
        assert!(
            (sigma[0] - parseval).abs() / parseval < 1e-6,
            "sigma {} vs parseval {}",
            sigma[0],
            parseval
        );
    }

    #[test]
    fn fisher_sigma_scales_in_t_and_a() {
        let k = default_k();
        let base = k.fisher_sigma(1.0, 1.0).unwrap()[0];
        let half_a = k.fisher_sigma(1.0, 2.0).unwrap()[0];
        let double_t = k.fisher_sigma(2.0, 1.0).unwrap()[0];
        assert!((half_a - base / 2.0).abs() / base < 1e-12);
        assert!((double_t - 2.0 * base).abs() / base < 1e-12);
    }

    #[test]
    fn fisher_sigma_2d_is_spd_and_matches_parseval() {
        // For radial kernels Σ = T/(2ad)·‖K‖²·I in d dimensions.
        let k = BaseKernel::default_2d();
        let sigma = k.fisher_sigma(1.0, 1.0).unwrap();
        assert_eq!(sigma[1], 0.0);
        assert_eq!(sigma[2], 0.0);
        assert!(sigma[0] > 0.0);
        assert!((sigma[0] - sigma[3]).abs() < 1e-15);
        let parseval = 0.5 * k.l2_norm(&[0, 0]).unwrap().powi(2) / 2.0;
        assert!(
            (sigma[0] - parseval).abs() / parseval < 1e-6,
            "{} vs {}",
            sigma[0],
            parseval
        );
    }

    #[test]
    fn kernel_description_roundtrips_through_json() {
        let k = default_k();
        let json = serde_json::to_string(&k.description()).unwrap();
        let desc: KernelDescription = serde_json::from_str(&json).unwrap();
        let k2 = BaseKernel::from_pieces(desc.pieces.unwrap()).unwrap();
        assert!((k.eval_k(&[0.37]) - k2.eval_k(&[0.37])).abs() < 1e-15);
    }

    #[test]
    fn from_name_selects_kernels() {
        assert_eq!(BaseKernel::from_name("poly_bump", 1.0).unwrap().dimension(), 1);
        assert_eq!(
            BaseKernel::from_name("poly_bump_2d", 0.5).unwrap().dimension(),
            2
        );
        assert!(BaseKernel::from_name("gaussian", 1.0).is_err());
    }

    #[test]
    fn insufficiently_smooth_kernel_rejected() {
        // (1-y²)² has only a second-order zero at the boundary: K̄''' does
        // not vanish there, so H⁴ membership fails.
        let coeffs = bump_coeffs_1d(1.0, 2);
        let r = BaseKernel::from_pieces(vec![Piece {
            lo: -1.0,
            hi: 1.0,
            coeffs,
        }]);
        assert!(r.is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8, 0.0, 2.0);
        let val: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x.powi(9)).sum();
        assert!((val - 2.0f64.powi(10) / 10.0).abs() < 1e-10);
    }
}
