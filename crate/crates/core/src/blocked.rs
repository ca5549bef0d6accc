//! Offset (skew) layout and row-blocked teacher forcing.
//!
//! For a block of query rows starting at global row `row_start`, the offset
//! layout stores left-layout entry `(m, c)` at `τ = c + (T-1) - r`, where
//! `r = row_start + m`. Every row's causal prefix then ends at `τ = T-1`, and
//! lag index `i = r - c` equals `T-1-τ` for all rows at once, so lag-indexed
//! mixing factors become a single reversed panel shared by the block.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::forward::MixerParams;
use crate::head::modifiers::{causal_conv_seq, rope_seq};
use crate::head::{Base, DplrWeights, HeadConfig, HeadWeights};
use crate::numerics::ops::{causal_mask, mask_to_matrix, Backend, GatherMap, ZERO};
use crate::numerics::{Eager, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetBlock {
    pub row_start: usize,
    pub t: usize,
    /// `M x T`, offset layout.
    pub data: Matrix,
}

fn check_block(m_rows: usize, row_start: usize, t: usize) -> Result<()> {
    if row_start + m_rows > t {
        return Err(Error::Range { what: "block end", value: row_start + m_rows, limit: t });
    }
    Ok(())
}

/// Gather from a left-layout `M x T` block into offset layout.
pub fn to_offset_map(m_rows: usize, row_start: usize, t: usize) -> GatherMap {
    let mut idx = Vec::with_capacity(m_rows * t);
    for m in 0..m_rows {
        let r = row_start + m;
        for tau in 0..t {
            idx.push(if tau + r >= t - 1 { m * t + tau + r - (t - 1) } else { ZERO });
        }
    }
    GatherMap::new(m_rows, t, m_rows * t, idx)
}

/// Inverse of [`to_offset_map`] on the causal region; zero elsewhere.
pub fn from_offset_map(m_rows: usize, row_start: usize, t: usize) -> GatherMap {
    let mut idx = Vec::with_capacity(m_rows * t);
    for m in 0..m_rows {
        let r = row_start + m;
        for c in 0..t {
            idx.push(if c <= r { m * t + c + (t - 1) - r } else { ZERO });
        }
    }
    GatherMap::new(m_rows, t, m_rows * t, idx)
}

/// Causal predicate in offset layout: keep `τ >= T-1-r`.
pub fn offset_mask(m_rows: usize, row_start: usize, t: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(m_rows * t);
    for m in 0..m_rows {
        let r = row_start + m;
        mask.extend((0..t).map(|tau| tau + r >= t - 1));
    }
    mask
}

pub fn to_offset(block_left: &Matrix, row_start: usize, t: usize) -> Result<OffsetBlock> {
    check_block(block_left.rows(), row_start, t)?;
    if block_left.cols() != t {
        return Err(Error::Dimension { op: "to_offset", left: block_left.shape(), right: (block_left.rows(), t) });
    }
    let data = to_offset_map(block_left.rows(), row_start, t).apply(block_left);
    Ok(OffsetBlock { row_start, t, data })
}

pub fn from_offset(block: &OffsetBlock) -> Matrix {
    from_offset_map(block.data.rows(), block.row_start, block.t).apply(&block.data)
}

/// Mixing factors reindexed to the block's column layout.
struct Panel<V> {
    one_plus_p: V,
    a: V,
    b: V,
    w_s: V,
}

fn panel<B: Backend>(b: &mut B, w: &DplrWeights<B::V>, t: usize, lag_layout: bool) -> Result<Panel<B::V>> {
    let (l, r) = b.value(&w.a).shape();
    if t > l {
        return Err(Error::Range { what: "sequence length", value: t, limit: l });
    }
    let order: Vec<usize> = if lag_layout { (0..t).rev().collect() } else { (0..t).collect() };
    let rows = Arc::new(GatherMap::rows_of(l, r, &order));
    let a = b.gather(&w.a, &rows)?;
    let bb = b.gather(&w.b, &rows)?;
    let p = b.gather(&w.p, &Arc::new(GatherMap::cols_of(1, l, &order)))?;
    let one_plus_p = b.add_scalar(&p, 1.0);
    Ok(Panel { one_plus_p, a, b: bb, w_s: w.w_s.clone() })
}

/// `Y ⊙ (1+p) + ((Y·U) ⊙ G)·Wᵀ` with per-row gates `G`.
fn mix_block<B: Backend>(b: &mut B, y: &B::V, dp: &B::V, u: &B::V, w: &B::V, g: &B::V) -> Result<B::V> {
    let diag = b.mul_row(y, dp)?;
    let yu = b.matmul(y, u)?;
    let gated = b.mul(&yu, g)?;
    let low = b.matmul_nt(&gated, w)?;
    b.add(&diag, &low)
}

struct Shared<V> {
    keys: Vec<V>,
    values: V,
    r1: Option<Panel<V>>,
    r2: Option<Panel<V>>,
}

fn shared<B: Backend>(b: &mut B, w: &HeadWeights<B::V>, cfg: &HeadConfig, x: &B::V) -> Result<Shared<B::V>> {
    let t = b.value(x).rows();
    let xk = match &w.conv_k {
        Some(k) => causal_conv_seq(b, x, k)?,
        None => x.clone(),
    };
    let xv = match &w.conv_v {
        Some(k) => causal_conv_seq(b, x, k)?,
        None => x.clone(),
    };
    let positions: Vec<usize> = (0..t).collect();
    let mut keys = Vec::with_capacity(w.w_k.len());
    for wk in &w.w_k {
        let k = b.matmul(&xk, wk)?;
        keys.push(if cfg.use_rope { rope_seq(b, &k, &positions)? } else { k });
    }
    let values = b.matmul(&xv, &w.w_v)?;
    let r1 = w.tmix1.as_ref().map(|p| panel(b, p, t, cfg.lag_layout)).transpose()?;
    let r2 = w.tmix2.as_ref().map(|p| panel(b, p, t, cfg.lag_layout)).transpose()?;
    Ok(Shared { keys, values, r1, r2 })
}

fn head_block<B: Backend>(
    b: &mut B,
    w: &HeadWeights<B::V>,
    cfg: &HeadConfig,
    sh: &Shared<B::V>,
    xb: &B::V,
    row_start: usize,
    t: usize,
) -> Result<B::V> {
    let m_rows = b.value(xb).rows();
    let offset = cfg.lag_layout && cfg.any_tmix();
    let mask: Arc<[bool]> =
        Arc::from(if offset { offset_mask(m_rows, row_start, t) } else { causal_mask(m_rows, t, row_start) });
    let mask_m = b.constant(mask_to_matrix(m_rows, t, &mask));
    let to_off = offset.then(|| Arc::new(to_offset_map(m_rows, row_start, t)));
    let positions: Vec<usize> = (row_start..row_start + m_rows).collect();
    let gates1 = match &sh.r1 {
        Some(p) => {
            let z = b.matmul(xb, &p.w_s)?;
            Some(b.sigmoid(&z))
        }
        None => None,
    };

    let mut h = Vec::with_capacity(w.w_q.len());
    for br in 0..w.w_q.len() {
        let mut q = b.matmul(xb, &w.w_q[br])?;
        if let Some(m1) = w.w_m1.get(br) {
            let z = b.matmul(xb, m1)?;
            let g = b.sigmoid(&z);
            q = b.mul(&q, &g)?;
        }
        if cfg.use_rope {
            q = rope_seq(b, &q, &positions)?;
        }
        let s = b.matmul_nt(&q, &sh.keys[br])?;
        let mut s = match &to_off {
            Some(map) => b.gather(&s, map)?,
            None => b.mul(&s, &mask_m)?,
        };
        if let (Some(p), Some(g)) = (&sh.r1, &gates1) {
            let mixed = mix_block(b, &s, &p.one_plus_p, &p.a, &p.b, g)?;
            s = b.mul(&mixed, &mask_m)?;
        }
        h.push(s);
    }

    let a = match cfg.base {
        Base::Softmax => b.masked_softmax(&h[0], &mask)?,
        Base::ReluL2 => {
            let n = b.row_l2norm(&h[0], cfg.eps);
            b.relu(&n)
        }
        Base::Glu => {
            let n = b.row_l2norm(&h[0], cfg.eps);
            let gate = b.relu(&n);
            let scale = b.softplus(&h[1]);
            b.mul(&scale, &gate)?
        }
    };
    let mut wts = match &sh.r2 {
        Some(p) => {
            let z = b.matmul(xb, &p.w_s)?;
            let g = b.sigmoid(&z);
            // a · R²ᵀ swaps the roles of A and B.
            let mixed = mix_block(b, &a, &p.one_plus_p, &p.b, &p.a, &g)?;
            b.mul(&mixed, &mask_m)?
        }
        None => a,
    };
    if offset {
        wts = b.gather(&wts, &Arc::new(from_offset_map(m_rows, row_start, t)))?;
    }
    let mut z = b.matmul(&wts, &sh.values)?;
    if let Some(m2) = &w.w_m2 {
        let zg = b.matmul(xb, m2)?;
        let g = b.sigmoid(&zg);
        z = b.mul(&z, &g)?;
    }
    b.matmul_nt(&z, &w.w_o)
}

/// Full-sequence mixing layer over a chronological `T x d` input, processed
/// in row blocks of height `m`. Sums all heads.
pub fn blocked_forward<B: Backend>(
    b: &mut B,
    heads: &[HeadWeights<B::V>],
    cfg: &HeadConfig,
    x: &B::V,
    m: usize,
) -> Result<B::V> {
    cfg.validate()?;
    let (t, d) = b.value(x).shape();
    if t == 0 {
        return Err(Error::EmptyContext);
    }
    if d != cfg.d {
        return Err(Error::Dimension { op: "blocked_forward", left: (t, d), right: (t, cfg.d) });
    }
    if m == 0 || m > t {
        return Err(Error::Range { what: "block height", value: m, limit: t });
    }
    let shared: Vec<Shared<B::V>> = heads.iter().map(|w| shared(b, w, cfg, x)).collect::<Result<_>>()?;
    let mut blocks = Vec::with_capacity(t.div_ceil(m));
    let mut start = 0;
    while start < t {
        let rows = m.min(t - start);
        let sel: Vec<usize> = (start..start + rows).collect();
        let xb = b.gather(x, &Arc::new(GatherMap::rows_of(t, d, &sel)))?;
        let mut acc: Option<B::V> = None;
        for (w, sh) in heads.iter().zip(&shared) {
            let o = head_block(b, w, cfg, sh, &xb, start, t)?;
            acc = Some(match acc {
                None => o,
                Some(a) => b.add(&a, &o)?,
            });
        }
        blocks.push(acc.expect("at least one head"));
        start += rows;
    }
    if blocks.len() == 1 {
        return Ok(blocks.pop().expect("one block"));
    }
    b.vstack(&blocks)
}

pub fn blocked_seq_forward(seq: &Matrix, mixer: &MixerParams, cfg: &HeadConfig, m: usize) -> Result<Matrix> {
    blocked_forward(&mut Eager, &mixer.heads, cfg, seq, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::seq_forward;
    use crate::numerics::{seeded_normal, Rng};

    #[test]
    fn to_offset_examples() {
        let (a, b) = (2.0, 3.0);
        let row = Matrix::from_rows(&[&[a, b, 9.0]]);
        assert_eq!(to_offset(&row, 1, 3).unwrap().data, Matrix::from_rows(&[&[0.0, a, b]]));
        let last = Matrix::from_rows(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(to_offset(&last, 2, 3).unwrap().data, last);
        let first = Matrix::from_rows(&[&[4.0, 5.0, 6.0]]);
        assert_eq!(to_offset(&first, 0, 3).unwrap().data, Matrix::from_rows(&[&[0.0, 0.0, 4.0]]));
        assert!(to_offset(&Matrix::zeros(2, 3), 2, 3).is_err());
    }

    #[test]
    fn from_offset_examples() {
        let (a, b) = (2.0, 3.0);
        let off = OffsetBlock { row_start: 1, t: 3, data: Matrix::from_rows(&[&[0.0, a, b]]) };
        assert_eq!(from_offset(&off), Matrix::from_rows(&[&[a, b, 0.0]]));
        let zero = OffsetBlock { row_start: 0, t: 4, data: Matrix::zeros(2, 4) };
        assert_eq!(from_offset(&zero), Matrix::zeros(2, 4));
    }

    #[test]
    fn roundtrip_on_causal_block() {
        let t = 9;
        let mut rng = Rng::new(1);
        for row_start in 0..t {
            for m_rows in 1..=t - row_start {
                let raw = rng.normal_matrix(m_rows, t, 1.0);
                let mask = mask_to_matrix(m_rows, t, &causal_mask(m_rows, t, row_start));
                let left = raw.hadamard(&mask).unwrap();
                let off = to_offset(&left, row_start, t).unwrap();
                assert_eq!(from_offset(&off), left);
                let om = mask_to_matrix(m_rows, t, &offset_mask(m_rows, row_start, t));
                assert_eq!(off.data.hadamard(&om).unwrap(), off.data);
                assert_eq!(from_offset(&off), from_offset(&OffsetBlock { data: off.data.hadamard(&om).unwrap(), ..off.clone() }));
            }
        }
    }

    fn full_glu(t: usize) -> HeadConfig {
        let mut c = HeadConfig::plain(Base::Glu, 16, 2);
        c.use_rope = true;
        c.use_conv = true;
        c.use_core_gates = true;
        c.tmix_1 = true;
        c.tmix_2 = true;
        c.lag_layout = true;
        c.r_s = 4;
        c.l_max = t;
        c
    }

    #[test]
    fn blocked_equals_naive() {
        let t = 20;
        for lag in [true, false] {
            let mut c = full_glu(t);
            c.lag_layout = lag;
            let mixer = MixerParams::random(&c, &mut Rng::new(2), 0.3).unwrap();
            let seq = seeded_normal(3, t, 16, 1.0);
            let naive = seq_forward(&seq, &mixer, &c).unwrap();
            for m in [1, 3, 7, t] {
                let blocked = blocked_seq_forward(&seq, &mixer, &c, m).unwrap();
                let err = blocked.max_abs_diff(&naive) / naive.max_abs().max(1e-300);
                assert!(err < 1e-12, "lag={lag} m={m} err={err}");
            }
        }
    }

    #[test]
    fn rejects_bad_block_height() {
        let c = full_glu(5);
        let mixer = MixerParams::random(&c, &mut Rng::new(4), 0.3).unwrap();
        let seq = seeded_normal(5, 5, 16, 1.0);
        assert!(blocked_seq_forward(&seq, &mixer, &c, 0).is_err());
        assert!(blocked_seq_forward(&seq, &mixer, &c, 6).is_err());
    }
}
