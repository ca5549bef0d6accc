//! Primitive operations shared by eager evaluation and the gradient tape.
//!
//! Model code is written once against [`Backend`]. Running it on [`Eager`]
//! computes plain values; running it on [`Tape`](super::tape::Tape) records
//! the same primitives for reverse-mode differentiation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Sentinel in a [`GatherMap`] meaning "write zero".
pub const ZERO: usize = usize::MAX;

/// Output entry `k` copies source entry `idx[k]` (flat row-major), or zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherMap {
    pub rows: usize,
    pub cols: usize,
    pub src_len: usize,
    pub idx: Vec<usize>,
}

impl GatherMap {
    pub fn new(rows: usize, cols: usize, src_len: usize, idx: Vec<usize>) -> Self {
        assert_eq!(idx.len(), rows * cols);
        debug_assert!(idx.iter().all(|&i| i == ZERO || i < src_len));
        Self { rows, cols, src_len, idx }
    }

    /// Selects rows of a `src_rows x cols` source; `ZERO` rows are zero-filled.
    pub fn rows_of(src_rows: usize, cols: usize, sel: &[usize]) -> Self {
        let mut idx = Vec::with_capacity(sel.len() * cols);
        for &r in sel {
            for c in 0..cols {
                idx.push(if r == ZERO { ZERO } else { r * cols + c });
            }
        }
        Self::new(sel.len(), cols, src_rows * cols, idx)
    }

    /// Selects columns of a `rows x src_cols` source.
    pub fn cols_of(rows: usize, src_cols: usize, sel: &[usize]) -> Self {
        let mut idx = Vec::with_capacity(rows * sel.len());
        for r in 0..rows {
            for &c in sel {
                idx.push(if c == ZERO { ZERO } else { r * src_cols + c });
            }
        }
        Self::new(rows, sel.len(), rows * src_cols, idx)
    }

    pub fn apply(&self, src: &Matrix) -> Matrix {
        assert_eq!(src.len(), self.src_len, "gather source size");
        let s = src.as_slice();
        let data = self.idx.iter().map(|&i| if i == ZERO { 0.0 } else { s[i] }).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("gather shape")
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    f64::max(x, 0.0) + libm::log1p(libm::exp(-x.abs()))
}

pub trait Backend {
    type V: Clone;

    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Matrix;
    fn constant(&mut self, m: Matrix) -> Self::V;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// `a · bᵀ`
    fn matmul_nt(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&mut self, a: &Self::V, s: f64) -> Self::V;
    fn add_scalar(&mut self, a: &Self::V, s: f64) -> Self::V;
    /// `a[i,j] * row[0,j]`
    fn mul_row(&mut self, a: &Self::V, row: &Self::V) -> Result<Self::V>;
    /// `a[i,j] * col[i,0]`
    fn mul_col(&mut self, a: &Self::V, col: &Self::V) -> Result<Self::V>;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn softplus(&mut self, a: &Self::V) -> Self::V;
    fn relu(&mut self, a: &Self::V) -> Self::V;
    /// Each row divided by `sqrt(‖row‖² + eps)`.
    fn row_l2norm(&mut self, a: &Self::V, eps: f64) -> Self::V;
    /// Row-wise softmax over entries where `mask` is true; masked entries are 0.
    fn masked_softmax(&mut self, a: &Self::V, mask: &Arc<[bool]>) -> Result<Self::V>;
    fn gather(&mut self, a: &Self::V, map: &Arc<GatherMap>) -> Result<Self::V>;
    fn vstack(&mut self, parts: &[Self::V]) -> Result<Self::V>;
    /// Weighted mean token cross-entropy; returns a 1x1 value.
    fn cross_entropy(&mut self, logits: &Self::V, targets: &Arc<[usize]>, weights: &Arc<[f64]>) -> Result<Self::V>;
    /// Sum of all entries as 1x1.
    fn sum(&mut self, a: &Self::V) -> Self::V;
}

pub(crate) fn mul_row(a: &Matrix, row: &Matrix) -> Result<Matrix> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(Error::Dimension { op: "mul_row", left: a.shape(), right: row.shape() });
    }
    let r = row.as_slice();
    let mut out = a.clone();
    for i in 0..a.rows() {
        for (o, &s) in out.row_mut(i).iter_mut().zip(r) {
            *o *= s;
        }
    }
    Ok(out)
}

pub(crate) fn mul_col(a: &Matrix, col: &Matrix) -> Result<Matrix> {
    if col.cols() != 1 || col.rows() != a.rows() {
        return Err(Error::Dimension { op: "mul_col", left: a.shape(), right: col.shape() });
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        let s = col.as_slice()[i];
        for o in out.row_mut(i) {
            *o *= s;
        }
    }
    Ok(out)
}

pub(crate) fn row_l2norm(a: &Matrix, eps: f64) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let rho = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>() + eps);
        for v in row {
            *v /= rho;
        }
    }
    out
}

pub(crate) fn masked_softmax(a: &Matrix, mask: &[bool]) -> Result<Matrix> {
    if mask.len() != a.len() {
        return Err(Error::Dimension { op: "masked_softmax", left: a.shape(), right: (mask.len(), 1) });
    }
    let cols = a.cols();
    let mut out = Matrix::zeros(a.rows(), cols);
    for i in 0..a.rows() {
        let m = &mask[i * cols..(i + 1) * cols];
        let row = a.row(i);
        let mx = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .fold(f64::NEG_INFINITY, |acc, (&v, _)| f64::max(acc, v));
        if mx == f64::NEG_INFINITY {
            continue;
        }
        let o = out.row_mut(i);
        let mut total = 0.0;
        for j in 0..cols {
            if m[j] {
                o[j] = libm::exp(row[j] - mx);
                total += o[j];
            }
        }
        for v in o.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

pub(crate) fn cross_entropy(logits: &Matrix, targets: &[usize], weights: &[f64]) -> Result<(f64, Matrix)> {
    if targets.len() != logits.rows() || weights.len() != logits.rows() {
        return Err(Error::Dimension { op: "cross_entropy", left: logits.shape(), right: (targets.len(), 1) });
    }
    let total_w: f64 = weights.iter().sum();
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, &v| f64::max(m, v));
        let z: f64 = row.iter().map(|&v| libm::exp(v - mx)).sum();
        let p = probs.row_mut(i);
        for (pj, &v) in p.iter_mut().zip(row) {
            *pj = libm::exp(v - mx) / z;
        }
        if weights[i] != 0.0 {
            if targets[i] >= logits.cols() {
                return Err(Error::Range { what: "target token", value: targets[i], limit: logits.cols() });
            }
            loss += weights[i] * (mx + libm::log(z) - row[targets[i]]);
        }
    }
    let loss = if total_w > 0.0 { loss / total_w } else { 0.0 };
    Ok((loss, probs))
}

/// Plain evaluation; values are owned matrices.
#[derive(Default, Debug, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type V = Matrix;

    fn value<'a>(&'a self, v: &'a Matrix) -> &'a Matrix {
        v
    }
    fn constant(&mut self, m: Matrix) -> Matrix {
        m
    }
    fn matmul(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.matmul(b)
    }
    fn matmul_nt(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.matmul_nt(b)
    }
    fn add(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.add(b)
    }
    fn sub(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.sub(b)
    }
    fn mul(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.hadamard(b)
    }
    fn scale(&mut self, a: &Matrix, s: f64) -> Matrix {
        a.scale(s)
    }
    fn add_scalar(&mut self, a: &Matrix, s: f64) -> Matrix {
        a.map(|v| v + s)
    }
    fn mul_row(&mut self, a: &Matrix, row: &Matrix) -> Result<Matrix> {
        mul_row(a, row)
    }
    fn mul_col(&mut self, a: &Matrix, col: &Matrix) -> Result<Matrix> {
        mul_col(a, col)
    }
    fn sigmoid(&mut self, a: &Matrix) -> Matrix {
        a.map(sigmoid_scalar)
    }
    fn softplus(&mut self, a: &Matrix) -> Matrix {
        a.map(softplus_scalar)
    }
    fn relu(&mut self, a: &Matrix) -> Matrix {
        a.map(|v| if v > 0.0 { v } else { 0.0 })
    }
    fn row_l2norm(&mut self, a: &Matrix, eps: f64) -> Matrix {
        row_l2norm(a, eps)
    }
    fn masked_softmax(&mut self, a: &Matrix, mask: &Arc<[bool]>) -> Result<Matrix> {
        masked_softmax(a, mask)
    }
    fn gather(&mut self, a: &Matrix, map: &Arc<GatherMap>) -> Result<Matrix> {
        if a.len() != map.src_len {
            return Err(Error::Dimension { op: "gather", left: a.shape(), right: (map.src_len, 1) });
        }
        Ok(map.apply(a))
    }
    fn vstack(&mut self, parts: &[Matrix]) -> Result<Matrix> {
        let refs: Vec<&Matrix> = parts.iter().collect();
        Matrix::vstack(&refs)
    }
    fn cross_entropy(&mut self, logits: &Matrix, targets: &Arc<[usize]>, weights: &Arc<[f64]>) -> Result<Matrix> {
        let (loss, _) = cross_entropy(logits, targets, weights)?;
        Ok(Matrix::filled(1, 1, loss))
    }
    fn sum(&mut self, a: &Matrix) -> Matrix {
        Matrix::filled(1, 1, a.sum())
    }
}

/// Causal mask over a `rows x cols` left-layout plane: entry `(m, c)` is kept
/// when `c <= row_start + m`.
pub fn causal_mask(rows: usize, cols: usize, row_start: usize) -> Vec<bool> {
    let mut mask = vec![false; rows * cols];
    for m in 0..rows {
        for c in 0..cols.min(row_start + m + 1) {
            mask[m * cols + c] = true;
        }
    }
    mask
}

pub fn mask_to_matrix(rows: usize, cols: usize, mask: &[bool]) -> Matrix {
    Matrix::from_vec(rows, cols, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .expect("mask shape")
}
