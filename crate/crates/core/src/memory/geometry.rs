//! Gate-boundary geometry: margin stability and boundary scans on 2-D slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::dplr::DplrParams;
use crate::error::Result;
use crate::head::forward::score;
use crate::head::{Base, DplrWeights, HeadConfig, HeadParams};
use crate::lagctx::LagContext;
use crate::numerics::{Matrix, Rng};

/// `true` when `|h0| > δ` and `|h1 - h0| < |h0| - δ`. A `true` answer
/// guarantees that `h1` keeps the sign of `h0`.
pub fn margin_stable(h0: f64, h1: f64, delta: f64) -> bool {
    let stable = h0.abs() > delta && (h1 - h0).abs() < h0.abs() - delta;
    if stable {
        assert_eq!(h0 > 0.0, h1 > 0.0, "margin bound violated");
    }
    stable
}

/// Locates sign changes of `gate` on a square grid over `[lo, hi]²` and
/// refines each with bisection along the grid edge.
pub fn boundary_points(gate: impl Fn(f64, f64) -> bool, lo: f64, hi: f64, n: usize, bisect: usize) -> Vec<(f64, f64)> {
    let step = (hi - lo) / n as f64;
    let at = |i: usize| lo + step * i as f64;
    let refine = |mut a: (f64, f64), mut b: (f64, f64)| {
        let ga = gate(a.0, a.1);
        for _ in 0..bisect {
            let m = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            if gate(m.0, m.1) == ga {
                a = m;
            } else {
                b = m;
            }
        }
        ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
    };
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let p = (at(i), at(j));
            let g = gate(p.0, p.1);
            if i < n && gate(at(i + 1), p.1) != g {
                out.push(refine(p, (at(i + 1), p.1)));
            }
            if j < n && gate(p.0, at(j + 1)) != g {
                out.push(refine(p, (p.0, at(j + 1))));
            }
        }
    }
    out
}

/// Largest distance from a point to the line through the two points that are
/// farthest apart (0 for fewer than three points).
pub fn collinearity_residual(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut best = (0, 0, -1.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            let d = dx * dx + dy * dy;
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (a, b) = (pts[best.0], pts[best.1]);
    let len = libm::sqrt(best.2);
    if len == 0.0 {
        return 0.0;
    }
    pts.iter()
        .map(|p| ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)).abs() / len)
        .fold(0.0, f64::max)
}

/// Two-slot head with a warped gate boundary for slot 1:
/// `h_1(x) = x_2 + σ(c x_1) x_1`. With `c = 0` the mixers are constant.
pub struct WarpedExample {
    pub cfg: HeadConfig,
    pub params: HeadParams,
    pub ctx: LagContext,
}

pub fn warped_boundary_example(c: f64) -> Result<WarpedExample> {
    let mut cfg = HeadConfig::plain(Base::ReluL2, 2, 1);
    cfg.r_s = 1;
    cfg.l_max = 2;
    cfg.tmix_1 = true;
    cfg.lag_layout = true;
    let mut params = HeadParams::init(&cfg, &mut Rng::new(0), 0.0)?;
    params.w_q[0] = Matrix::identity(2);
    params.w_k[0] = Matrix::identity(2);
    params.w_v = Matrix::identity(2);
    params.w_o = Matrix::identity(2);
    let a = Matrix::from_rows(&[&[1.0], &[0.0]]);
    let b = Matrix::from_rows(&[&[0.0], &[1.0]]);
    let w_s = Matrix::from_rows(&[&[c], &[0.0]]);
    params.tmix1 = Some(DplrWeights::from_dplr(&DplrParams::new(vec![0.0, 0.0], a, b, w_s)?));
    let ctx = LagContext::from_lag_rows(Matrix::identity(2))?;
    Ok(WarpedExample { cfg, params, ctx })
}

impl WarpedExample {
    pub fn gate(&self, x: &[f64], slot: usize) -> Result<bool> {
        Ok(score(x, &self.ctx, &self.params, &self.cfg)?[slot] > 0.0)
    }

    /// Closed form of the slot-1 gate.
    pub fn predicate(&self, x: &[f64]) -> bool {
        let c = self.params.tmix1.as_ref().map_or(0.0, |t| t.w_s[(0, 0)]);
        x[1] + crate::numerics::ops::sigmoid_scalar(c * x[0]) * x[0] > 0.0
    }

    pub fn boundary(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        boundary_points(|a, b| self.gate(&[a, b], 1).expect("valid example"), lo, hi, n, 10)
    }
}

/// Boundary residual of one slot of a head whose mixers are constant in `x`
/// (no core gates, zero gate projections), restricted to a random 2-D slice.
pub fn static_slice_residual(seed: u64, base: Base) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let d = 6;
    let mut cfg = HeadConfig::plain(base, d, 1);
    cfg.r_s = 2;
    cfg.l_max = 8;
    cfg.tmix_1 = true;
    cfg.tmix_2 = true;
    let mut p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    for t in [&mut p.tmix1, &mut p.tmix2].into_iter().flatten() {
        t.w_s = Matrix::zeros(d, cfg.r_s);
    }
    let ctx = LagContext::from_forward(&rng.normal_matrix(4, d, 1.0))?;
    let x0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let e: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let f: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let point = |a: f64, b: f64| -> Vec<f64> { (0..d).map(|k| x0[k] + a * e[k] + b * f[k]).collect() };
    let mut worst = 0.0f64;
    for slot in 0..ctx.t() {
        let pts = boundary_points(
            |a, b| score(&point(a, b), &ctx, &p, &cfg).expect("valid head")[slot] > 0.0,
            -3.0,
            3.0,
            24,
            10,
        );
        worst = worst.max(collinearity_residual(&pts));
    }
    Ok(worst)
}
