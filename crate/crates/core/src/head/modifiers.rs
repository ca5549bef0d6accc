//! Core modifiers: rotary position rotation and depthwise causal convolution.
//!
//! Concrete versions work on lag-ordered contexts; the `*_seq` versions act on
//! chronological sequences through a [`Backend`] so they can be differentiated.

use alloc::sync::Arc;
use alloc::vec::Vec;

use super::CONV_TAPS;
use crate::error::{Error, Result};
use crate::numerics::ops::{Backend, GatherMap, ZERO};
use crate::numerics::Matrix;

const ROPE_BASE: f64 = 10000.0;

/// Cosine table and signed sine table so that
/// `rot(X) = X ⊙ cos + swap(X) ⊙ sin`, where `swap` exchanges each pair.
pub fn rope_tables(positions: &[usize], width: usize) -> Result<(Matrix, Matrix)> {
    if width % 2 != 0 {
        return Err(Error::Config(alloc::format!("rotary width {width} is odd")));
    }
    let mut cos = Matrix::zeros(positions.len(), width);
    let mut sin = Matrix::zeros(positions.len(), width);
    for (r, &pos) in positions.iter().enumerate() {
        for i in 0..width / 2 {
            let theta = libm::pow(ROPE_BASE, -2.0 * i as f64 / width as f64);
            let ang = theta * pos as f64;
            let (s, c) = (libm::sin(ang), libm::cos(ang));
            cos[(r, 2 * i)] = c;
            cos[(r, 2 * i + 1)] = c;
            sin[(r, 2 * i)] = -s;
            sin[(r, 2 * i + 1)] = s;
        }
    }
    Ok((cos, sin))
}

/// Row `r` rotated by angle `θ_i · positions[r]` in each pair `(2i, 2i+1)`.
pub fn rope_rotate(core: &Matrix, positions: &[usize]) -> Result<Matrix> {
    if positions.len() != core.rows() {
        return Err(Error::Dimension { op: "rope_rotate", left: core.shape(), right: (positions.len(), 1) });
    }
    let (cos, sin) = rope_tables(positions, core.cols())?;
    let swapped = swap_map(core.rows(), core.cols()).apply(core);
    core.hadamard(&cos)?.add(&swapped.hadamard(&sin)?)
}

fn swap_map(rows: usize, width: usize) -> GatherMap {
    let sel: Vec<usize> = (0..width).map(|j| j ^ 1).collect();
    GatherMap::cols_of(rows, width, &sel)
}

/// Differentiable rotation of `x` (`rows x width`).
pub fn rope_seq<B: Backend>(b: &mut B, x: &B::V, positions: &[usize]) -> Result<B::V> {
    let (rows, width) = b.value(x).shape();
    if positions.len() != rows {
        return Err(Error::Dimension { op: "rope_seq", left: (rows, width), right: (positions.len(), 1) });
    }
    let (cos, sin) = rope_tables(positions, width)?;
    let cos = b.constant(cos);
    let sin = b.constant(sin);
    let swapped = b.gather(x, &Arc::new(swap_map(rows, width)))?;
    let a = b.mul(x, &cos)?;
    let s = b.mul(&swapped, &sin)?;
    b.add(&a, &s)
}

/// Lag row `i` mixes lag rows `i..i+3` (same or older tokens), zero beyond the oldest.
pub fn depthwise_causal_conv(core: &Matrix, kernels: &Matrix) -> Result<Matrix> {
    if kernels.shape() != (CONV_TAPS, core.cols()) {
        return Err(Error::Dimension { op: "depthwise_causal_conv", left: core.shape(), right: kernels.shape() });
    }
    let t = core.rows();
    Ok(Matrix::from_fn(t, core.cols(), |i, c| {
        (0..CONV_TAPS).filter(|j| i + j < t).map(|j| kernels[(j, c)] * core[(i + j, c)]).sum()
    }))
}

/// Same filter over a chronological `T x c` sequence: row `r` mixes rows `r, r-1, r-2, r-3`.
pub fn causal_conv_seq<B: Backend>(b: &mut B, x: &B::V, kernels: &B::V) -> Result<B::V> {
    let (t, c) = b.value(x).shape();
    if b.value(kernels).shape() != (CONV_TAPS, c) {
        return Err(Error::Dimension { op: "causal_conv_seq", left: (t, c), right: b.value(kernels).shape() });
    }
    let mut acc: Option<B::V> = None;
    for j in 0..CONV_TAPS.min(t) {
        let sel: Vec<usize> = (0..t).map(|r| if r >= j { r - j } else { ZERO }).collect();
        let shifted = if j == 0 { x.clone() } else { b.gather(x, &Arc::new(GatherMap::rows_of(t, c, &sel)))? };
        let tap = b.gather(kernels, &Arc::new(GatherMap::rows_of(CONV_TAPS, c, &[j])))?;
        let term = b.mul_row(&shifted, &tap)?;
        acc = Some(match acc {
            None => term,
            Some(a) => b.add(&a, &term)?,
        });
    }
    Ok(acc.expect("at least one tap"))
}
