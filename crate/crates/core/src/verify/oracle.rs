//! Single-instance property checks. Each takes a seed, builds one random
//! instance and returns a residual (or a violation count) against an
//! independent reference.

use alloc::vec;
use alloc::vec::Vec;

use crate::blocked::{blocked_seq_forward, from_offset_map, offset_mask, to_offset_map};
use crate::dplr::{DplrParams, MulCount};
use crate::error::Result;
use crate::head::act::{act_relu_l2, active_set};
use crate::head::forward::{dense_lag_operator, step_trace};
use crate::head::modifiers::depthwise_causal_conv;
use crate::head::{head_forward, multihead_forward, seq_forward, Base, HeadConfig, HeadParams, MixerParams};
use crate::labels::{parse_label, to_config, TABLE_LABELS};
use crate::lagctx::LagContext;
use crate::memory::{append_registers, extension_check, instantiate_pool, readout_via_pool, tv_mass, ExtensionReport, Measure};
use crate::numerics::ops::{causal_mask, mask_to_matrix, sigmoid_scalar, ZERO};
use crate::numerics::{Matrix, Rng};

/// `max |a - b| / max |b|`, or the absolute difference when `b` is zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = max_abs_diff(a, b);
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn vector(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Dense-random mixing parameters (`p` included).
pub fn random_dplr(rng: &mut Rng, l_max: usize, r_s: usize, d: usize) -> Result<DplrParams> {
    let p = (0..l_max).map(|_| 0.5 * rng.normal()).collect();
    let a = rng.normal_matrix(l_max, r_s, 0.5);
    let b = rng.normal_matrix(l_max, r_s, 0.5);
    let w_s = rng.normal_matrix(d, r_s, 0.5);
    DplrParams::new(p, a, b, w_s)
}

/// Options for [`random_head_config`]; `None` leaves a flag to the RNG.
#[derive(Clone, Copy, Debug, Default)]
pub struct Shape {
    pub lag_layout: Option<bool>,
    pub rope: Option<bool>,
    pub conv: Option<bool>,
    pub tmix: Option<bool>,
}

/// One random single-head configuration with `l_max = t`.
pub fn random_head_config(rng: &mut Rng, base: Base, t: usize, shape: Shape) -> HeadConfig {
    let mut pick = |o: Option<bool>| o.unwrap_or_else(|| rng.coin());
    let rope = pick(shape.rope);
    let conv = pick(shape.conv);
    let gates = pick(None);
    let (tmix_1, tmix_2) = match shape.tmix {
        Some(on) => (on, on),
        None => (pick(None), pick(None)),
    };
    let lag = pick(shape.lag_layout);
    let d = 2 * rng.range_inclusive(2, 6);
    // Rotation needs an even rank per branch; HyperGLU halves `d_qk`.
    let step = if rope { if base == Base::Glu { 4 } else { 2 } } else { 1 };
    let d_qk = step * rng.range_inclusive(1, d / step);
    let mut c = HeadConfig::plain(base, d, 1);
    c.d_qk = d_qk;
    c.d_vo = rng.range_inclusive(1, d);
    c.r_s = rng.range_inclusive(1, 4);
    c.l_max = t;
    c.use_rope = rope;
    c.use_conv = conv;
    c.use_core_gates = gates;
    c.tmix_1 = tmix_1;
    c.tmix_2 = tmix_2;
    c.lag_layout = lag;
    c
}

fn random_ctx(rng: &mut Rng, t: usize, d: usize) -> Result<LagContext> {
    LagContext::from_forward(&rng.normal_matrix(t, d, 1.0))
}

fn any_base(rng: &mut Rng) -> Base {
    [Base::Softmax, Base::ReluL2, Base::Glu][rng.below(3)]
}

// ---- dplr ----

/// Worst relative error of the four fast mixes against the dense operator.
pub fn dplr_fast_dense(seed: u64, t_max: usize, r_max: usize) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, t_max);
    let r = rng.range_inclusive(1, r_max);
    let d = rng.range_inclusive(1, 8);
    let l_max = t + rng.below(4);
    let dp = random_dplr(&mut rng, l_max, r, d)?;
    let s = dp.gate_vector(&vector(&mut rng, d))?;
    let dense = dp.materialize(&s, t)?;
    let y = vector(&mut rng, t);
    let cols = rng.range_inclusive(1, 5);
    let x = rng.normal_matrix(t, cols, 1.0);
    let yr = Matrix::row_vector(&y).matmul(&dense)?;
    let yrt = Matrix::row_vector(&y).matmul_nt(&dense)?;
    let errs = [
        rel_err(&dp.mix_right(&y, &s)?, yr.as_slice()),
        rel_err(&dp.mix_right_transpose(&y, &s)?, yrt.as_slice()),
        rel_err(dp.mix_rows(&x, &s, false)?.as_slice(), dense.matmul(&x)?.as_slice()),
        rel_err(dp.mix_rows(&x, &s, true)?.as_slice(), dense.matmul_tn(&x)?.as_slice()),
    ];
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Largest deviation of the extended dense operator from the embedded
/// original padded with zeros. Exact arithmetic gives zero.
pub fn dplr_extension(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 16);
    let big = t + rng.range_inclusive(0, 16);
    let r = rng.range_inclusive(1, 6);
    let d = rng.range_inclusive(1, 6);
    let dp = random_dplr(&mut rng, t, r, d)?;
    let s = dp.gate_vector(&vector(&mut rng, d))?;
    let small = dp.materialize(&s, t)?;
    let ext = dp.extend(big)?.materialize(&s, big)?;
    let expect = Matrix::from_fn(big, big, |i, j| if i < t && j < t { small[(i, j)] } else { 0.0 });
    Ok(ext.max_abs_diff(&expect))
}

/// Multiplies counted beyond `2·t·r + t + r` for either mixing direction.
pub fn dplr_op_count(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 256);
    let r = rng.range_inclusive(1, 32);
    let d = rng.range_inclusive(1, 4);
    let mut dp = random_dplr(&mut rng, t, r, d)?;
    match rng.below(4) {
        0 => dp.p.iter_mut().for_each(|v| *v = 0.0),
        1 => dp.a = dp.a.scale(0.0),
        _ => {}
    }
    let s = dp.gate_vector(&vector(&mut rng, d))?;
    let y = vector(&mut rng, t);
    let bound = (2 * t * r + t + r) as f64;
    let mut worst = f64::NEG_INFINITY;
    for transpose in [false, true] {
        let mut c = MulCount::default();
        if transpose {
            dp.mix_right_transpose_counted(&y, &s, &mut c)?;
        } else {
            dp.mix_right_counted(&y, &s, &mut c)?;
        }
        worst = worst.max(c.0 as f64 - bound);
    }
    Ok(worst.max(0.0))
}

// ---- head ----

/// Active-set mismatches under positive rescaling, both on a raw score
/// vector and on a head whose query projection is rescaled.
pub fn gate_invariance_violations(seed: u64) -> Result<usize> {
    let mut rng = Rng::new(seed);
    let n = rng.range_inclusive(1, 64);
    let z: Vec<f64> = (0..n).map(|_| if rng.below(8) == 0 { 0.0 } else { rng.normal() }).collect();
    let lambda = libm::exp(rng.uniform_in(-20.0, 20.0));
    let zl: Vec<f64> = z.iter().map(|v| lambda * v).collect();
    let mut bad = usize::from(active_set(&act_relu_l2(&z, 1e-12)) != active_set(&act_relu_l2(&zl, 1e-12)));

    let t = rng.range_inclusive(1, 12);
    let cfg = random_head_config(&mut rng, Base::ReluL2, t, Shape { rope: Some(false), ..Shape::default() });
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let x = vector(&mut rng, cfg.d);
    let mut scaled = p.clone();
    let k = libm::exp(rng.uniform_in(-5.0, 5.0));
    scaled.w_q[0] = scaled.w_q[0].scale(k);
    let before = step_trace(&x, &ctx, &p, &cfg)?.a;
    let after = step_trace(&x, &ctx, &scaled, &cfg)?.a;
    bad += usize::from(active_set(&before) != active_set(&after));
    Ok(bad)
}

/// Active-set changes of a HyperGLU head when every scale-branch weight is
/// redrawn. Instances without a positive gate margin are skipped.
pub fn glu_decoupling_violations(seed: u64) -> Result<usize> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 12);
    let cfg = random_head_config(&mut rng, Base::Glu, t, Shape::default());
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let x = vector(&mut rng, cfg.d);
    let tr = step_trace(&x, &ctx, &p, &cfg)?;
    if tr.h[0].iter().any(|&h| h == 0.0) {
        return Ok(0);
    }
    let mut q = p.clone();
    let std = rng.uniform_in(0.1, 2.0);
    q.w_q[1] = rng.normal_matrix(cfg.d, cfg.branch_rank(), std);
    q.w_k[1] = rng.normal_matrix(cfg.d, cfg.branch_rank(), std);
    if let Some(m) = q.w_m1.get_mut(1) {
        *m = rng.normal_matrix(cfg.d, cfg.branch_rank(), std);
    }
    let after = step_trace(&x, &ctx, &q, &cfg)?;
    Ok(usize::from(active_set(&tr.a) != active_set(&after.a)))
}

fn diag(v: &[f64]) -> Matrix {
    Matrix::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
}

fn gate_of(x: &[f64], w: Option<&Matrix>, n: usize) -> Result<Vec<f64>> {
    Ok(match w {
        Some(w) => Matrix::row_vector(x).matmul(w)?.as_slice().iter().map(|&v| sigmoid_scalar(v)).collect(),
        None => vec![1.0; n],
    })
}

/// One head evaluated as `σ(x W¹) W²` with both layers materialized:
/// `W¹ = W_q M¹ W_kᵀ X_kᵀ R¹` and `W² = R²ᵀ X_v W_v M² W_oᵀ`.
pub fn explicit_dynamic_mlp(x: &[f64], ctx: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    let t = ctx.t();
    let conv = |k: &Option<Matrix>| match k {
        Some(k) => depthwise_causal_conv(ctx.rows(), k),
        None => Ok(ctx.rows().clone()),
    };
    let (xk, xv) = (conv(&p.conv_k)?, conv(&p.conv_v)?);
    let lag_op = |w: Option<DplrParams>| -> Result<Matrix> {
        match w {
            Some(d) => {
                let s = d.gate_vector(x)?;
                dense_lag_operator(&d, &s, t, cfg.lag_layout)
            }
            None => Ok(Matrix::identity(t)),
        }
    };
    let r1 = lag_op(p.tmix1_params()?)?;
    let r2 = lag_op(p.tmix2_params()?)?;
    let m1 = gate_of(x, p.w_m1.first(), cfg.branch_rank())?;
    let m2 = gate_of(x, p.w_m2.as_ref(), cfg.d_vo)?;
    let w1 = p.w_q[0].matmul(&diag(&m1))?.matmul_nt(&p.w_k[0])?.matmul_nt(&xk)?.matmul(&r1)?;
    let w2 = r2.matmul_tn(&xv)?.matmul(&p.w_v)?.matmul(&diag(&m2))?.matmul_nt(&p.w_o)?;
    let h = Matrix::row_vector(x).matmul(&w1)?.into_vec();
    let a = match cfg.base {
        Base::Softmax => straight_softmax(&h),
        _ => straight_relu_l2(&h, cfg.eps),
    };
    Ok(Matrix::row_vector(&a).matmul(&w2)?.into_vec())
}

fn straight_softmax(h: &[f64]) -> Vec<f64> {
    let mx = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = h.iter().map(|v| libm::exp(v - mx)).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn straight_relu_l2(h: &[f64], eps: f64) -> Vec<f64> {
    let n = libm::sqrt(h.iter().map(|v| v * v).sum::<f64>() + eps);
    h.iter().map(|v| if *v > 0.0 { v / n } else { 0.0 }).collect()
}

/// Relative error of the head against the explicit two-layer form (no rotation).
pub fn head_dynamic_mlp(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let base = if rng.coin() { Base::Softmax } else { Base::ReluL2 };
    let t = rng.range_inclusive(1, 16);
    let cfg = random_head_config(&mut rng, base, t, Shape { rope: Some(false), ..Shape::default() });
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let x = vector(&mut rng, cfg.d);
    Ok(rel_err(&head_forward(&x, &ctx, &p, &cfg)?, &explicit_dynamic_mlp(&x, &ctx, &p, &cfg)?))
}

/// Relative error of a plain head against scalar-loop attention
/// `σ(x W_q (X W_k)ᵀ) X W_v W_oᵀ`.
pub fn head_baseline(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let base = if rng.coin() { Base::Softmax } else { Base::ReluL2 };
    let d = rng.range_inclusive(2, 12);
    let t = rng.range_inclusive(1, 20);
    let mut cfg = HeadConfig::plain(base, d, 1);
    cfg.d_qk = rng.range_inclusive(1, d);
    cfg.d_vo = rng.range_inclusive(1, d);
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, d)?;
    let x = vector(&mut rng, d);
    let proj = |v: &[f64], w: &Matrix| -> Vec<f64> {
        (0..w.cols()).map(|j| (0..v.len()).map(|k| v[k] * w[(k, j)]).sum()).collect()
    };
    let q = proj(&x, &p.w_q[0]);
    let scores: Vec<f64> = (0..t)
        .map(|i| {
            let k = proj(ctx.rows().row(i), &p.w_k[0]);
            q.iter().zip(&k).map(|(a, b)| a * b).sum()
        })
        .collect();
    let a = match base {
        Base::Softmax => straight_softmax(&scores),
        _ => straight_relu_l2(&scores, cfg.eps),
    };
    let mut out = vec![0.0; d];
    for i in 0..t {
        let v = proj(ctx.rows().row(i), &p.w_v);
        for (o, row) in out.iter_mut().enumerate() {
            *row += a[i] * (0..cfg.d_vo).map(|j| v[j] * p.w_o[(o, j)]).sum::<f64>();
        }
    }
    Ok(rel_err(&head_forward(&x, &ctx, &p, &cfg)?, &out))
}

/// A random table label at `d = 32` with `l_max = t` and two heads.
pub fn random_label_mixer(rng: &mut Rng, t: usize) -> Result<(&'static str, HeadConfig, MixerParams)> {
    let label = TABLE_LABELS[rng.below(TABLE_LABELS.len())];
    let (cfg, mixer) = label_mixer(label, rng, t)?;
    Ok((label, cfg, mixer))
}

/// Configuration and random weights for `label` at `d = 32`, two heads, `r_s = 4`.
pub fn label_mixer(label: &str, rng: &mut Rng, t: usize) -> Result<(HeadConfig, MixerParams)> {
    let mut cfg = to_config(&parse_label(label)?, 32, 2, 4)?;
    cfg.l_max = t;
    let mixer = MixerParams::random(&cfg, rng, 0.3)?;
    Ok((cfg, mixer))
}

/// Change in the outputs of rows `..=cut` after editing every later token,
/// for both the naive and the blocked path. Exact causality gives zero.
pub fn head_causality(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(2, 12);
    let (_, cfg, mixer) = random_label_mixer(&mut rng, t)?;
    let seq = rng.normal_matrix(t, cfg.d, 1.0);
    let cut = rng.below(t - 1);
    let mut edited = seq.clone();
    for r in cut + 1..t {
        edited.row_mut(r).iter_mut().for_each(|v| *v += 2.0 * rng.normal());
    }
    let m = rng.range_inclusive(1, t);
    let mut worst = 0.0f64;
    for (a, b) in [
        (seq_forward(&seq, &mixer, &cfg)?, seq_forward(&edited, &mixer, &cfg)?),
        (blocked_seq_forward(&seq, &mixer, &cfg, m)?, blocked_seq_forward(&edited, &mixer, &cfg, m)?),
    ] {
        for r in 0..=cut {
            worst = worst.max(max_abs_diff(a.row(r), b.row(r)));
        }
    }
    Ok(worst)
}

/// Single-block teacher forcing against decoding one token at a time.
pub fn head_incremental(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 16);
    let (_, cfg, mixer) = random_label_mixer(&mut rng, t)?;
    let seq = rng.normal_matrix(t, cfg.d, 1.0);
    let batch = blocked_seq_forward(&seq, &mixer, &cfg, t)?;
    let mut ctx = LagContext::empty(cfg.d);
    let mut worst = 0.0f64;
    for r in 0..t {
        ctx = ctx.append_newest(seq.row(r))?;
        let o = multihead_forward(seq.row(r), &ctx, &mixer, &cfg)?;
        worst = worst.max(rel_err(batch.row(r), &o));
    }
    Ok(worst)
}

// ---- memory ----

/// Relative error of the slot-sum readout against the head, any base.
pub fn pool_readout(seed: u64, base: Option<Base>) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let base = base.unwrap_or_else(|| any_base(&mut rng));
    let t = rng.range_inclusive(1, 16);
    let cfg = random_head_config(&mut rng, base, t, Shape::default());
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let x = vector(&mut rng, cfg.d);
    let view = instantiate_pool(&x, &ctx, &p, &cfg)?;
    Ok(rel_err(&readout_via_pool(&view, &x, &p, &cfg)?, &head_forward(&x, &ctx, &p, &cfg)?))
}

/// `1` when the activated mass exceeds the pool mass or disagrees with the gates.
pub fn tv_violation(seed: u64) -> Result<usize> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 16);
    let base = any_base(&mut rng);
    let cfg = random_head_config(&mut rng, base, t, Shape::default());
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let view = instantiate_pool(&vector(&mut rng, cfg.d), &ctx, &p, &cfg)?;
    let act = tv_mass(&view, Measure::Activated);
    let counted = view.alpha[0].iter().filter(|&&a| a > 0.0).count();
    Ok(usize::from(act > tv_mass(&view, Measure::Pool) || act != counted || tv_mass(&view, Measure::Pool) != t))
}

/// Extension from `t` to `2t` for a head with mixing on both layers.
/// `lag_layout` selects the layout; bases are ReLU-L2 or HyperGLU without
/// convolution so that zero slots carry zero weight.
pub fn extension_instance(seed: u64, lag_layout: bool) -> Result<(usize, ExtensionReport)> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 12);
    let base = if rng.coin() { Base::ReluL2 } else { Base::Glu };
    let rope = lag_layout.then_some(rng.coin()).or(Some(false));
    let shape = Shape { lag_layout: Some(lag_layout), rope, conv: Some(false), tmix: Some(true) };
    let cfg = random_head_config(&mut rng, base, t, shape);
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let history = random_ctx(&mut rng, 2 * t, cfg.d)?;
    let x = vector(&mut rng, cfg.d);
    Ok((t, extension_check(&x, &history, &p, &cfg)?))
}

/// Residual of the lag-layout truncation property: the readout difference
/// against the newest tokens, or infinity if the dummy-slot count is wrong.
pub fn truncation_residual(seed: u64) -> Result<f64> {
    let (t, rep) = extension_instance(seed, true)?;
    Ok(if rep.zero_slots == t { rep.diff_newest } else { f64::INFINITY })
}

/// Pool growth under `k` registers with identity mixing. Returns the worst
/// deviation across: pool size, untouched token slots, register slots
/// equal to the registers, and slot-sum readout against the head.
pub fn register_residual(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 10);
    let k = rng.range_inclusive(0, 4);
    let shape = Shape { conv: Some(false), tmix: Some(false), ..Shape::default() };
    let base = any_base(&mut rng);
    let mut cfg = random_head_config(&mut rng, base, t, shape);
    cfg.l_max = t + k;
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let ctx = random_ctx(&mut rng, t, cfg.d)?;
    let regs = rng.normal_matrix(k, cfg.d, 1.0);
    let x = vector(&mut rng, cfg.d);
    let aug = append_registers(&ctx, &regs)?;
    let before = instantiate_pool(&x, &ctx, &p, &cfg)?;
    let after = instantiate_pool(&x, &aug, &p, &cfg)?;
    if after.t != t + k {
        return Ok(f64::INFINITY);
    }
    let slots = |m: &Matrix, a: usize, b: usize| m.slice_rows(a, b);
    let mut worst = slots(&after.u, 0, t)?.max_abs_diff(&before.u);
    worst = worst.max(slots(&after.v, 0, t)?.max_abs_diff(&before.v));
    if k > 0 {
        worst = worst.max(slots(&after.u, t, t + k)?.max_abs_diff(&regs));
        worst = worst.max(slots(&after.v, t, t + k)?.max_abs_diff(&regs));
    }
    let pool = readout_via_pool(&after, &x, &p, &cfg)?;
    Ok(worst.max(rel_err(&pool, &head_forward(&x, &aug, &p, &cfg)?)))
}

// ---- blocked ----

/// Faults found in the offset-layout gather map of one block: causal
/// sources covered other than exactly once, targets reading non-causal
/// sources, and round-trip mismatches. `skew` redirects one live entry
/// before checking.
pub fn bijectivity_violations(m_rows: usize, row_start: usize, t: usize, skew: bool, rng: &mut Rng) -> usize {
    let mut map = to_offset_map(m_rows, row_start, t);
    if skew {
        let live: Vec<usize> = (0..map.idx.len()).filter(|&k| map.idx[k] != ZERO).collect();
        if let [first, .., last] = live[..] {
            map.idx[last] = map.idx[first];
        } else if let [only] = live[..] {
            map.idx[only] = ZERO;
        }
    }
    let mut hits = vec![0usize; m_rows * t];
    let mut bad = 0;
    for &i in map.idx.iter().filter(|&&i| i != ZERO) {
        let (m, c) = (i / t, i % t);
        if c > row_start + m {
            bad += 1;
        }
        hits[i] += 1;
    }
    let causal = causal_mask(m_rows, t, row_start);
    bad += (0..m_rows * t).filter(|&i| causal[i] && hits[i] != 1).count();
    let left = rng.normal_matrix(m_rows, t, 1.0).hadamard(&mask_to_matrix(m_rows, t, &causal)).expect("same shape");
    let back = from_offset_map(m_rows, row_start, t).apply(&map.apply(&left));
    bad + back.as_slice().iter().zip(left.as_slice()).filter(|(a, b)| a != b).count()
}

/// Blocked path against the naive path for one label and block height.
pub fn blocked_naive(label: &str, t: usize, m: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let (cfg, mixer) = label_mixer(label, &mut rng, t)?;
    let seq = rng.normal_matrix(t, cfg.d, 1.0);
    let naive = seq_forward(&seq, &mixer, &cfg)?;
    let blocked = blocked_seq_forward(&seq, &mixer, &cfg, m)?;
    Ok(rel_err(blocked.as_slice(), naive.as_slice()))
}

/// `mask(mask(Y))` against `mask(Y)` in both layouts, also after a dense
/// row mixing in between. Exact idempotence gives zero.
pub fn remask_residual(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let t = rng.range_inclusive(1, 32);
    let row_start = rng.below(t);
    let m_rows = rng.range_inclusive(1, t - row_start);
    let y = rng.normal_matrix(m_rows, t, 1.0);
    let mix = rng.normal_matrix(t, t, 1.0);
    let mut worst = 0.0f64;
    for mask in [offset_mask(m_rows, row_start, t), causal_mask(m_rows, t, row_start)] {
        let mm = mask_to_matrix(m_rows, t, &mask);
        let once = y.hadamard(&mm)?.matmul(&mix)?.hadamard(&mm)?;
        let twice = once.hadamard(&mm)?;
        worst = worst.max(twice.max_abs_diff(&once));
        let planar = y.hadamard(&mm)?;
        worst = worst.max(planar.hadamard(&mm)?.max_abs_diff(&planar));
    }
    Ok(worst)
}

