//! Small dense decompositions used by the rank and subspace checks.

use alloc::vec::Vec;

use super::matrix::Matrix;

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`, values descending.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `m x n`; columns for zero singular values are zero.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// `n x n`, orthogonal.
    pub v: Matrix,
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    let mut b = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (b[(i, p)], b[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (b[(i, p)], b[(i, q)]);
                    b[(i, p)] = c * x - s * y;
                    b[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| libm::sqrt((0..m).map(|i| b[(i, j)] * b[(i, j)]).sum())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms.iter().fold(0.0, |acc: f64, &x| acc.max(x));
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        if norms[j] > top * 1e-300 && norms[j] > 0.0 {
            for i in 0..m {
                u[(i, k)] = b[(i, j)] / norms[j];
            }
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    Svd { u, s, v: vs }
}

/// Number of singular values above `rel_tol · σ_max` (0 for a zero matrix).
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let s = svd(a).s;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Orthonormal basis (as rows) of the row space of `a`.
pub fn row_space_basis(a: &Matrix, rel_tol: f64) -> Matrix {
    let dec = svd(a);
    let top = dec.s.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..dec.s.len()).filter(|&k| top > 0.0 && dec.s[k] > rel_tol * top).collect();
    Matrix::from_fn(keep.len(), a.cols(), |r, c| dec.v[(c, keep[r])])
}

/// Orthonormal basis (as rows) of `{δ : δ·a = 0}`, the left null space of `a`.
pub fn left_null_basis(a: &Matrix, rel_tol: f64) -> Matrix {
    // Left null space of `a` is the null space of `aᵀ`, i.e. the orthogonal
    // complement of the row space of `aᵀ`.
    let at = a.transpose();
    let dec = svd(&at);
    let top = dec.s.first().copied().unwrap_or(0.0);
    let null: Vec<usize> = (0..dec.s.len()).filter(|&k| top == 0.0 || dec.s[k] <= rel_tol * top).collect();
    Matrix::from_fn(null.len(), at.cols(), |r, c| dec.v[(c, null[r])])
}

/// Component of each row of `x` orthogonal to the span of orthonormal `basis` rows.
pub fn project_out(x: &Matrix, basis: &Matrix) -> Matrix {
    let coeff = x.matmul_nt(basis).expect("projection shapes");
    x.sub(&coeff.matmul(basis).expect("projection shapes")).expect("projection shapes")
}
