//! Lag-ordered contexts: row 0 is the newest token, row `t-1` the oldest.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LagContext {
    rows: Matrix,
}

impl LagContext {
    /// A context holding no tokens yet. Heads reject it; it only seeds appends.
    pub fn empty(d: usize) -> Self {
        Self { rows: Matrix::zeros(0, d) }
    }

    /// Wraps rows that are already newest-first.
    pub fn from_lag_rows(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::EmptyContext);
        }
        Ok(Self { rows })
    }

    pub fn from_forward(seq: &Matrix) -> Result<Self> {
        if seq.rows() == 0 {
            return Err(Error::EmptyContext);
        }
        Ok(Self { rows: reverse_rows(seq) })
    }

    pub fn to_forward(&self) -> Matrix {
        reverse_rows(&self.rows)
    }

    pub fn t(&self) -> usize {
        self.rows.rows()
    }

    pub fn d(&self) -> usize {
        self.rows.cols()
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn newest(&self) -> Result<&[f64]> {
        if self.t() == 0 {
            return Err(Error::EmptyContext);
        }
        Ok(self.rows.row(0))
    }

    /// Keeps the `t_new` most recent tokens.
    pub fn truncate(&self, t_new: usize) -> Result<Self> {
        if t_new == 0 {
            return Err(Error::EmptyContext);
        }
        if t_new > self.t() {
            return Err(Error::Range { what: "truncation length", value: t_new, limit: self.t() });
        }
        Ok(Self { rows: self.rows.slice_rows(0, t_new)? })
    }

    pub fn append_newest(&self, x: &[f64]) -> Result<Self> {
        if x.len() != self.d() {
            return Err(Error::Dimension { op: "append_newest", left: (1, x.len()), right: self.rows.shape() });
        }
        let mut data = Vec::with_capacity((self.t() + 1) * self.d());
        data.extend_from_slice(x);
        data.extend_from_slice(self.rows.as_slice());
        Ok(Self { rows: Matrix::from_vec(self.t() + 1, self.d(), data)? })
    }

    /// Appends `extra` rows at the old end (they become the oldest slots).
    pub fn append_oldest(&self, extra: &Matrix) -> Result<Self> {
        if extra.cols() != self.d() {
            return Err(Error::Dimension { op: "append_oldest", left: extra.shape(), right: self.rows.shape() });
        }
        Ok(Self { rows: Matrix::vstack(&[&self.rows, extra])? })
    }
}

fn reverse_rows(m: &Matrix) -> Matrix {
    let t = m.rows();
    Matrix::from_fn(t, m.cols(), |i, j| m[(t - 1 - i, j)])
}
