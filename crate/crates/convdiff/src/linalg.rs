//! Dense helpers for the tiny symmetric systems appearing in the weights
//! (B_Nx is (d+1)×(d+1)) and the estimator (Fisher matrix is d×d).
//!
//! Matrices are row-major `&[f64]` of length n². Only n ≤ 3 is needed; the
//! routines are written for general small n with partial pivoting.

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` if a pivot is exactly zero after pivoting.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if m[piv * n + col] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[row * n + k] -= f * m[col * n + k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

/// Eigenvalues of a symmetric matrix, ascending. Closed forms for n ≤ 3.
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![a[0]],
        2 => {
            let (p, q, r) = (a[0], a[1], a[3]);
            let mean = 0.5 * (p + r);
            let disc = (0.25 * (p - r) * (p - r) + q * q).max(0.0).sqrt();
            vec![mean - disc, mean + disc]
        }
        3 => sym_eigenvalues_3x3(a),
        _ => unreachable!("only n <= 3 supported"),
    }
}

// Trigonometric closed form for real symmetric 3x3 eigenvalues.
fn sym_eigenvalues_3x3(a: &[f64]) -> Vec<f64> {
    let (a11, a12, a13) = (a[0], a[1], a[2]);
    let (a22, a23, a33) = (a[4], a[5], a[8]);
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    if p1 == 0.0 {
        let mut eig = vec![a11, a22, a33];
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        return eig;
    }
    let q = (a11 + a22 + a33) / 3.0;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    // B = (A - qI) / p, r = det(B) / 2
    let b11 = (a11 - q) * inv_p;
    let b22 = (a22 - q) * inv_p;
    let b33 = (a33 - q) * inv_p;
    let b12 = a12 * inv_p;
    let b13 = a13 * inv_p;
    let b23 = a23 * inv_p;
    let det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let eig1 = q + 2.0 * p * phi.cos();
    let eig3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let eig2 = 3.0 * q - eig1 - eig3;
    let mut eig = vec![eig3, eig2, eig1];
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Condition number of a symmetric positive semi-definite matrix
/// (|λ|_max / |λ|_min; infinite when λ_min = 0).
pub fn sym_condition(a: &[f64], n: usize) -> f64 {
    let eig = sym_eigenvalues(a, n);
    let max = eig.iter().map(|e| e.abs()).fold(0.0f64, f64::max);
    let min = eig.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0];
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[i * 3 + j] * x_true[j];
            }
        }
        let x = solve(&a, &b, 3).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let cases: Vec<Vec<f64>> = vec![
            vec![2.0, 0.3, 0.3, 1.0],
            vec![3.0, -0.5, 0.2, -0.5, 2.0, 0.1, 0.2, 0.1, 1.5],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        for a in cases {
            let n = (a.len() as f64).sqrt() as usize;
            let mine = sym_eigenvalues(&a, n);
            let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
            let mut theirs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (u, v) in mine.iter().zip(theirs.iter()) {
                assert!((u - v).abs() < 1e-10, "{u} vs {v}");
            }
        }
    }
}
