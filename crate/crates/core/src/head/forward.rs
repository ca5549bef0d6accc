//! Per-step head evaluation straight from the definitions.
//!
//! This is the naive path: every step rebuilds the lag context of its prefix
//! and applies mixing through [`DplrParams`]. The blocked path in
//! [`crate::blocked`] must agree with it.

use alloc::vec;
use alloc::vec::Vec;

use super::act::{act_hyperglu, act_relu_l2, softmax};
use super::modifiers::{depthwise_causal_conv, rope_rotate};
use super::{Base, HeadConfig, HeadParams};
use crate::dplr::DplrParams;
use crate::error::{Error, Result};
use crate::lagctx::LagContext;
use crate::numerics::ops::sigmoid_scalar;
use crate::numerics::{Matrix, Rng};

/// All heads of one mixing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MixerParams {
    pub heads: Vec<HeadParams>,
}

impl MixerParams {
    pub fn init(cfg: &HeadConfig, rng: &mut Rng, std: f64) -> Result<Self> {
        let heads = (0..cfg.n_head).map(|_| HeadParams::init(cfg, rng, std)).collect::<Result<_>>()?;
        Ok(Self { heads })
    }

    pub fn random(cfg: &HeadConfig, rng: &mut Rng, std: f64) -> Result<Self> {
        let heads = (0..cfg.n_head).map(|_| HeadParams::random(cfg, rng, std)).collect::<Result<_>>()?;
        Ok(Self { heads })
    }
}

/// Intermediate values of one head at one step. Vectors over slots are in lag order.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub t: usize,
    /// Key and value cores after convolution (`t x d`).
    pub xk: Matrix,
    pub xv: Matrix,
    /// Per branch: projected (and rotated) keys `t x r` and the query `1 x r`.
    pub keys: Vec<Matrix>,
    pub queries: Vec<Matrix>,
    pub r1: Option<(DplrParams, Vec<f64>)>,
    pub r2: Option<(DplrParams, Vec<f64>)>,
    /// Per branch scores after first-layer mixing.
    pub h: Vec<Vec<f64>>,
    /// Activated scores.
    pub a: Vec<f64>,
    /// Second-layer mixed weights `a · R²ᵀ`.
    pub w: Vec<f64>,
    /// Readout gate `sigmoid(x W_M2)`, if core gates are on.
    pub m2: Option<Vec<f64>>,
    pub out: Vec<f64>,
}

fn row_times(x: &[f64], m: &Matrix) -> Result<Matrix> {
    Matrix::row_vector(x).matmul(m)
}

fn reversed(v: &[f64]) -> Vec<f64> {
    v.iter().rev().copied().collect()
}

/// `y · R` for a lag-ordered `y`; in forward layout `R` indexes chronologically.
pub fn mix_scores(y: &[f64], r: &DplrParams, s: &[f64], lag_layout: bool, transpose: bool) -> Result<Vec<f64>> {
    let f = |v: &[f64]| if transpose { r.mix_right_transpose(v, s) } else { r.mix_right(v, s) };
    if lag_layout {
        f(y)
    } else {
        Ok(reversed(&f(&reversed(y))?))
    }
}

/// Dense `t x t` mixing operator in lag indexing for either layout.
pub fn dense_lag_operator(r: &DplrParams, s: &[f64], t: usize, lag_layout: bool) -> Result<Matrix> {
    let m = r.materialize(s, t)?;
    if lag_layout {
        Ok(m)
    } else {
        Ok(Matrix::from_fn(t, t, |i, j| m[(t - 1 - i, t - 1 - j)]))
    }
}

fn check_inputs(x: &[f64], ctx: &LagContext, cfg: &HeadConfig) -> Result<()> {
    cfg.validate()?;
    if ctx.t() == 0 {
        return Err(Error::EmptyContext);
    }
    if x.len() != cfg.d || ctx.d() != cfg.d {
        return Err(Error::Dimension { op: "head input", left: (1, x.len()), right: (ctx.t(), ctx.d()) });
    }
    if cfg.any_tmix() && ctx.t() > cfg.l_max {
        return Err(Error::Range { what: "context length", value: ctx.t(), limit: cfg.l_max });
    }
    Ok(())
}

/// Evaluates one head for query token `x` over `ctx`, keeping intermediates.
pub fn step_trace(x: &[f64], ctx: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<StepTrace> {
    check_inputs(x, ctx, cfg)?;
    let t = ctx.t();
    let xk = match &p.conv_k {
        Some(k) => depthwise_causal_conv(ctx.rows(), k)?,
        None => ctx.rows().clone(),
    };
    let xv = match &p.conv_v {
        Some(k) => depthwise_causal_conv(ctx.rows(), k)?,
        None => ctx.rows().clone(),
    };
    let key_pos: Vec<usize> = (0..t).map(|i| t - 1 - i).collect();
    let gate = |w: &Matrix| -> Result<Vec<f64>> {
        Ok(row_times(x, w)?.as_slice().iter().map(|&v| sigmoid_scalar(v)).collect())
    };
    let r1 = match &p.tmix1 {
        Some(w) => {
            let d = w.to_dplr()?;
            let s = d.gate_vector(x)?;
            Some((d, s))
        }
        None => None,
    };
    let r2 = match &p.tmix2 {
        Some(w) => {
            let d = w.to_dplr()?;
            let s = d.gate_vector(x)?;
            Some((d, s))
        }
        None => None,
    };

    let mut keys = Vec::new();
    let mut queries = Vec::new();
    let mut h = Vec::new();
    for br in 0..cfg.branches() {
        let mut q = row_times(x, &p.w_q[br])?;
        if let Some(m1) = p.w_m1.get(br) {
            let g = gate(m1)?;
            q.as_mut_slice().iter_mut().zip(&g).for_each(|(v, gv)| *v *= gv);
        }
        let mut k = xk.matmul(&p.w_k[br])?;
        if cfg.use_rope {
            q = rope_rotate(&q, &[t - 1])?;
            k = rope_rotate(&k, &key_pos)?;
        }
        let y = q.matmul_nt(&k)?.into_vec();
        let hb = match &r1 {
            Some((d, s)) => mix_scores(&y, d, s, cfg.lag_layout, false)?,
            None => y,
        };
        keys.push(k);
        queries.push(q);
        h.push(hb);
    }

    let a = match cfg.base {
        Base::Softmax => softmax(&h[0]),
        Base::ReluL2 => act_relu_l2(&h[0], cfg.eps),
        Base::Glu => act_hyperglu(&h[1], &h[0], cfg.eps),
    };
    let w = match &r2 {
        Some((d, s)) => mix_scores(&a, d, s, cfg.lag_layout, true)?,
        None => a.clone(),
    };
    let m2 = p.w_m2.as_ref().map(gate).transpose()?;
    let out = readout(&w, &xv, p, m2.as_deref())?;
    Ok(StepTrace { t, xk, xv, keys, queries, r1, r2, h, a, w, m2, out })
}

/// `((w · X_v) W_v ⊙ m2) W_oᵀ`.
pub fn readout(w: &[f64], xv: &Matrix, p: &HeadParams, m2: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut z = row_times(w, xv)?.matmul(&p.w_v)?;
    if let Some(g) = m2 {
        z.as_mut_slice().iter_mut().zip(g).for_each(|(v, gv)| *v *= gv);
    }
    Ok(z.matmul_nt(&p.w_o)?.into_vec())
}

/// Gate-branch scores `h_t` over the lag slots.
pub fn score(x: &[f64], ctx: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    Ok(step_trace(x, ctx, p, cfg)?.h.swap_remove(0))
}

pub fn head_forward(x: &[f64], ctx: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    Ok(step_trace(x, ctx, p, cfg)?.out)
}

pub fn multihead_forward(x: &[f64], ctx: &LagContext, m: &MixerParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; cfg.d];
    for head in &m.heads {
        for (a, v) in acc.iter_mut().zip(head_forward(x, ctx, head, cfg)?) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Teacher forcing by explicit decoding: row `t` sees exactly tokens `1..=t`.
pub fn seq_forward(seq: &Matrix, m: &MixerParams, cfg: &HeadConfig) -> Result<Matrix> {
    if seq.rows() == 0 {
        return Err(Error::EmptyContext);
    }
    let mut ctx = LagContext::empty(seq.cols());
    let mut out = Matrix::zeros(seq.rows(), cfg.d);
    for t in 0..seq.rows() {
        ctx = ctx.append_newest(seq.row(t))?;
        let o = multihead_forward(seq.row(t), &ctx, m, cfg)?;
        out.row_mut(t).copy_from_slice(&o);
    }
    Ok(out)
}
