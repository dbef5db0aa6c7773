//! Dense real/complex matrix helpers.
//!
//! `Matrix` is a plain `nalgebra::DMatrix<f64>`. The Kronecker product and the
//! symmetric eigen-solver are implemented here directly; LU solves and the
//! general (non-symmetric) eigenvalue problem go through nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type CMatrix = DMatrix<Complex<f64>>;
pub type Vector = DVector<f64>;

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-10;

/// Kronecker product: the (i,j) block of the result is `a[(i,j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut out = Matrix::zeros(p * r, q * s);
    for i in 0..p {
        for j in 0..q {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..r {
                for l in 0..s {
                    out[(i * r + k, j * s + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, sorted ascending.
///
/// Only the upper triangle is trusted; the input is symmetrised first.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    assert!(m.is_square(), "symmetric_eigenvalues needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut a = (m + m.transpose()) * 0.5;
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale * 1e-3 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Eigenvalues of a Hermitian matrix, sorted ascending.
///
/// Uses the real embedding `[[X, -Y], [Y, X]]` of `H = X + jY`, whose spectrum is
/// that of `H` with every eigenvalue doubled; every second entry is kept.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    let n = h.nrows();
    let herm = (h + h.adjoint()).map(|z| z * 0.5);
    let mut emb = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = herm[(i, j)];
            emb[(i, j)] = z.re;
            emb[(i + n, j + n)] = z.re;
            emb[(i, j + n)] = -z.im;
            emb[(i + n, j)] = z.im;
        }
    }
    symmetric_eigenvalues(&emb).into_iter().step_by(2).collect()
}

/// Eigenvalues of a general real square matrix (real Schur form via nalgebra).
pub fn general_eigenvalues(m: &Matrix) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|v| v.abs() <= tol)
}

/// Induced infinity norm (largest absolute row sum).
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// Numerical rank from singular values, relative to the largest one.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}
