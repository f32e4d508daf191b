//! Banded matrix storage, matvec and LU factorization.
//!
//! The semi-implicit stepper factors `I - Δt·A_h` once and reuses the
//! factorization across all time steps. The matrix is tridiagonal in
//! d = 1 and has bandwidth m (the 5-point stencil) in d = 2; both cases
//! are handled by one dense-band layout.
//!
//! Factorization is LU without pivoting. The stepping matrices here are
//! strictly diagonally dominant for any resolved configuration (mesh
//! Péclet number below one), which makes this stable; a vanishing pivot
//! is still reported as a solve error.

use crate::error::{Error, Result};

/// Row-major dense band: entry (i, j) is stored at `data[i][bw + j - i]`
/// for |i - j| ≤ bw.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let bw = self.bw as isize;
        let off = j as isize - i as isize;
        if off.abs() > bw {
            0.0
        } else {
            self.data[i * (2 * self.bw + 1) + (bw + off) as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let bw = self.bw as isize;
        let off = j as isize - i as isize;
        debug_assert!(off.abs() <= bw, "entry ({i},{j}) outside band");
        self.data[i * (2 * self.bw + 1) + (bw + off) as usize] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let bw = self.bw as isize;
        let off = j as isize - i as isize;
        debug_assert!(off.abs() <= bw, "entry ({i},{j}) outside band");
        self.data[i * (2 * self.bw + 1) + (bw + off) as usize] += v;
    }

    /// y = s·I·x + c·A·x (used to form rows of I - Δt·A on the fly).
    pub fn matvec_scaled(&self, x: &[f64], s: f64, c: f64, y: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            let row = &self.data[i * (2 * bw + 1)..(i + 1) * (2 * bw + 1)];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[bw + j - i] * x[j];
            }
            y[i] = s * x[i] + c * acc;
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_scaled(x, 0.0, 1.0, y);
    }

    /// yᵀ = xᵀ A, i.e. y = Aᵀ x.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            let row = &self.data[i * (2 * bw + 1)..(i + 1) * (2 * bw + 1)];
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in lo..=hi {
                y[j] += row[bw + j - i] * xi;
            }
        }
    }

    /// `I·s + c·self` as a new banded matrix.
    pub fn scaled_shift(&self, s: f64, c: f64) -> BandedMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= c;
        }
        for i in 0..out.n {
            let idx = i * (2 * out.bw + 1) + out.bw;
            out.data[idx] += s;
        }
        out
    }

    /// In-place LU factorization without pivoting.
    pub fn factor(self) -> Result<BandedLu> {
        let n = self.n;
        let bw = self.bw;
        let w = 2 * bw + 1;
        let mut data = self.data;
        for k in 0..n {
            let pivot = data[k * w + bw];
            if pivot.abs() < 1e-300 {
                return Err(Error::Solve(format!(
                    "zero pivot at row {k} during banded LU factorization"
                )));
            }
            let i_hi = (k + bw).min(n - 1);
            for i in k + 1..=i_hi {
                // entry (i, k)
                let off_ik = bw + k - i; // k - i ∈ [-bw, 0)
                let l = data[i * w + off_ik] / pivot;
                data[i * w + off_ik] = l;
                if l != 0.0 {
                    let j_hi = (k + bw).min(n - 1);
                    for j in k + 1..=j_hi {
                        let off_ij = bw + j - i;
                        let off_kj = bw + j - k;
                        data[i * w + off_ij] -= l * data[k * w + off_kj];
                    }
                }
            }
        }
        Ok(BandedLu { n, bw, data })
    }
}

/// LU factors stored in band layout; solves are two band sweeps.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedLu {
    /// Solve in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        let w = 2 * bw + 1;
        // forward: L y = b (unit diagonal)
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = x[i];
            for j in lo..i {
                acc -= row[bw + j - i] * x[j];
            }
            x[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = x[i];
            for j in i + 1..=hi {
                acc -= row[bw + j - i] * x[j];
            }
            x[i] = acc / row[bw];
        }
    }
}
