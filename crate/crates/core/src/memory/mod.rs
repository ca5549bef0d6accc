//! Slot-level view of a head: instantiated pool, address values and readouts.
//!
//! Slots are `u_i = (R¹ᵀ X_k)_i` and `v_i = (R²ᵀ X_v)_i`. Address values are
//! computed in key space, `α_i = q · (R¹ᵀ K)_i`, which equals `x L¹ u_iᵀ`
//! whenever no rotation is applied and stays valid when it is.

pub mod budget;
pub mod extension;
pub mod geometry;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::act::{rho, softmax};
use crate::head::forward::{dense_lag_operator, step_trace, StepTrace};
use crate::head::{Base, HeadConfig, HeadParams};
use crate::lagctx::LagContext;
use crate::numerics::ops::softplus_scalar;
use crate::numerics::Matrix;

pub use budget::{budget_asymmetry_check, lora_update_span_check, BudgetReport};
pub use extension::{extend_head, extension_check, ExtensionReport};
pub use geometry::{margin_stable, warped_boundary_example, WarpedExample};

#[derive(Clone, Debug)]
pub struct MemoryPoolView {
    pub t: usize,
    /// `t x d` address slots.
    pub u: Matrix,
    /// `t x d` content slots.
    pub v: Matrix,
    /// Per score branch, the `t x r` key-space address atoms.
    pub address_keys: Vec<Matrix>,
    /// Per score branch, the address values over the slots (gate branch first).
    pub alpha: Vec<Vec<f64>>,
    /// `alpha[0][i] > 0`.
    pub gates: Vec<bool>,
    /// `sqrt(‖alpha[0]‖² + eps)`.
    pub rho: f64,
    trace: StepTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    Pool,
    Activated,
}

fn lag_operator(r: &Option<(crate::dplr::DplrParams, Vec<f64>)>, t: usize, lag: bool) -> Result<Matrix> {
    match r {
        Some((d, s)) => dense_lag_operator(d, s, t, lag),
        None => Ok(Matrix::identity(t)),
    }
}

pub fn instantiate_pool(x: &[f64], ctx: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<MemoryPoolView> {
    let trace = step_trace(x, ctx, p, cfg)?;
    let t = trace.t;
    let r1 = lag_operator(&trace.r1, t, cfg.lag_layout)?;
    let r2 = lag_operator(&trace.r2, t, cfg.lag_layout)?;
    let u = r1.matmul_tn(&trace.xk)?;
    let v = r2.matmul_tn(&trace.xv)?;
    let mut address_keys = Vec::new();
    let mut alpha = Vec::new();
    for (k, q) in trace.keys.iter().zip(&trace.queries) {
        let atoms = r1.matmul_tn(k)?;
        alpha.push(q.matmul_nt(&atoms)?.into_vec());
        address_keys.push(atoms);
    }
    let gates = alpha[0].iter().map(|&a| a > 0.0).collect();
    let rho = rho(&alpha[0], cfg.eps);
    Ok(MemoryPoolView { t, u, v, address_keys, alpha, gates, rho, trace })
}

impl MemoryPoolView {
    /// Readout gate of the step the view was built from.
    pub fn readout_gate(&self) -> Option<&[f64]> {
        self.trace.m2.as_deref()
    }

    /// `β(x; v_i) = ((v_i W_v) ⊙ m²) W_oᵀ` for every slot, as rows.
    pub fn betas(&self, p: &HeadParams) -> Result<Matrix> {
        let mut z = self.v.matmul(&p.w_v)?;
        if let Some(g) = self.readout_gate() {
            for i in 0..z.rows() {
                z.row_mut(i).iter_mut().zip(g).for_each(|(v, gv)| *v *= gv);
            }
        }
        z.matmul_nt(&p.w_o)
    }

    /// Slot weights the base activation assigns from the address values.
    pub fn slot_weights(&self, cfg: &HeadConfig) -> Vec<f64> {
        match cfg.base {
            Base::Softmax => softmax(&self.alpha[0]),
            Base::ReluL2 => self.alpha[0].iter().map(|&a| a.max(0.0) / self.rho).collect(),
            Base::Glu => self.alpha[0]
                .iter()
                .zip(&self.alpha[1])
                .map(|(&g, &s)| softplus_scalar(s) * g.max(0.0) / self.rho)
                .collect(),
        }
    }
}

fn weighted_sum(weights: &[f64], betas: &Matrix) -> Vec<f64> {
    let mut out = alloc::vec![0.0; betas.cols()];
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            out.iter_mut().zip(betas.row(i)).for_each(|(o, &b)| *o += w * b);
        }
    }
    out
}

fn check_view(view: &MemoryPoolView, x: &[f64]) -> Result<()> {
    if x.len() != view.u.cols() {
        return Err(Error::Dimension { op: "readout", left: (1, x.len()), right: view.u.shape() });
    }
    Ok(())
}

/// Slot-sum readout `Σ_i σ(α)_i β(x; v_i)`.
pub fn readout_via_pool(view: &MemoryPoolView, x: &[f64], p: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    check_view(view, x)?;
    Ok(weighted_sum(&view.slot_weights(cfg), &view.betas(p)?))
}

/// Ungated readout `(1/ρ) Σ_i α_i β(x; v_i)`: every slot contributes.
pub fn linear_readout(view: &MemoryPoolView, x: &[f64], p: &HeadParams) -> Result<Vec<f64>> {
    check_view(view, x)?;
    let w: Vec<f64> = view.alpha[0].iter().map(|a| a / view.rho).collect();
    Ok(weighted_sum(&w, &view.betas(p)?))
}

/// Slots contributing to [`linear_readout`]: always the full pool.
pub fn linear_contributors(view: &MemoryPoolView) -> usize {
    view.t
}

pub fn tv_mass(view: &MemoryPoolView, which: Measure) -> usize {
    match which {
        Measure::Pool => view.t,
        Measure::Activated => view.gates.iter().filter(|&&g| g).count(),
    }
}

/// Registers join the pool as the oldest slots.
pub fn append_registers(ctx: &LagContext, registers: &Matrix) -> Result<LagContext> {
    if registers.rows() == 0 {
        if registers.cols() != ctx.d() {
            return Err(Error::Dimension { op: "append_registers", left: registers.shape(), right: ctx.rows().shape() });
        }
        return Ok(ctx.clone());
    }
    ctx.append_oldest(registers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::head_forward;
    use crate::numerics::{seeded_normal, Rng};

    fn relu_cfg(d: usize) -> HeadConfig {
        let mut c = HeadConfig::plain(Base::ReluL2, d, 1);
        c.r_s = 2;
        c.l_max = 16;
        c
    }

    fn full(base: Base, lag: bool) -> HeadConfig {
        let mut c = relu_cfg(8);
        c.base = base;
        c.use_conv = true;
        c.use_core_gates = true;
        c.use_rope = true;
        c.d_qk = 4;
        c.tmix_1 = true;
        c.tmix_2 = true;
        c.lag_layout = lag;
        c
    }

    fn ctx(seed: u64, t: usize, d: usize) -> LagContext {
        LagContext::from_forward(&seeded_normal(seed, t, d, 1.0)).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn identity_mixers_give_token_slots() {
        let c = relu_cfg(6);
        let p = HeadParams::random(&c, &mut Rng::new(1), 0.5).unwrap();
        let cx = ctx(2, 5, 6);
        let view = instantiate_pool(cx.rows().row(0), &cx, &p, &c).unwrap();
        assert_eq!(&view.u, cx.rows());
        assert_eq!(&view.v, cx.rows());
        let one = ctx(3, 1, 6);
        assert_eq!(instantiate_pool(one.rows().row(0), &one, &p, &c).unwrap().t, 1);
    }

    #[test]
    fn alpha_is_score_coordinate() {
        for lag in [true, false] {
            let c = full(Base::ReluL2, lag);
            let p = HeadParams::random(&c, &mut Rng::new(4), 0.5).unwrap();
            let cx = ctx(5, 7, 8);
            let x = cx.rows().row(0);
            let view = instantiate_pool(x, &cx, &p, &c).unwrap();
            let h = crate::head::score(x, &cx, &p, &c).unwrap();
            assert!(max_diff(&view.alpha[0], &h) < 1e-12);
        }
    }

    #[test]
    fn pool_readout_matches_head() {
        for base in [Base::ReluL2, Base::Softmax, Base::Glu] {
            for lag in [true, false] {
                let c = full(base, lag);
                let p = HeadParams::random(&c, &mut Rng::new(6), 0.5).unwrap();
                let cx = ctx(7, 9, 8);
                let x = cx.rows().row(0);
                let view = instantiate_pool(x, &cx, &p, &c).unwrap();
                let o = head_forward(x, &cx, &p, &c).unwrap();
                let scale = o.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                assert!(max_diff(&readout_via_pool(&view, x, &p, &c).unwrap(), &o) < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn readout_small_cases() {
        let c = relu_cfg(4);
        let mut p = HeadParams::random(&c, &mut Rng::new(8), 0.5).unwrap();
        let cx = ctx(9, 1, 4);
        let x = cx.rows().row(0);
        let mut view = instantiate_pool(x, &cx, &p, &c).unwrap();
        if view.alpha[0][0] <= 0.0 {
            p.w_q[0] = p.w_q[0].scale(-1.0);
            view = instantiate_pool(x, &cx, &p, &c).unwrap();
        }
        let beta = Matrix::row_vector(view.v.row(0)).matmul(&p.w_v).unwrap().matmul_nt(&p.w_o).unwrap();
        let expect: Vec<f64> = beta.as_slice().iter().map(|b| view.alpha[0][0] / view.rho * b).collect();
        assert!(max_diff(&readout_via_pool(&view, x, &p, &c).unwrap(), &expect) < 1e-15);

        p.w_q[0] = p.w_q[0].scale(-1.0);
        let neg = instantiate_pool(x, &cx, &p, &c).unwrap();
        assert!(readout_via_pool(&neg, x, &p, &c).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(tv_mass(&neg, Measure::Activated), 0);
    }

    #[test]
    fn tv_masses() {
        let c = relu_cfg(4);
        let p = HeadParams::random(&c, &mut Rng::new(10), 0.5).unwrap();
        let mut rng = Rng::new(11);
        let (mut active, mut pool) = (0usize, 0usize);
        for _ in 0..2000 {
            let cx = LagContext::from_forward(&rng.normal_matrix(5, 4, 1.0)).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let view = instantiate_pool(&x, &cx, &p, &c).unwrap();
            assert!(tv_mass(&view, Measure::Activated) <= tv_mass(&view, Measure::Pool));
            active += tv_mass(&view, Measure::Activated);
            pool += tv_mass(&view, Measure::Pool);
        }
        let ratio = active as f64 / pool as f64;
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn registers_extend_the_pool() {
        let c = relu_cfg(4);
        let p = HeadParams::random(&c, &mut Rng::new(12), 0.5).unwrap();
        let cx = ctx(13, 4, 4);
        let x = cx.rows().row(0);
        assert_eq!(append_registers(&cx, &Matrix::zeros(0, 4)).unwrap(), cx);
        let regs = seeded_normal(14, 2, 4, 1.0);
        let aug = append_registers(&cx, &regs).unwrap();
        let before = instantiate_pool(x, &cx, &p, &c).unwrap();
        let after = instantiate_pool(x, &aug, &p, &c).unwrap();
        assert_eq!(tv_mass(&after, Measure::Pool), 6);
        assert_eq!(after.u.slice_rows(0, 4).unwrap(), before.u);
        assert_eq!(after.v.slice_rows(0, 4).unwrap(), before.v);
        assert_eq!(after.u.slice_rows(4, 6).unwrap(), regs);
        assert_eq!(after.v.slice_rows(4, 6).unwrap(), regs);

        let mut mixed = c.clone();
        mixed.tmix_1 = true;
        mixed.tmix_2 = true;
        mixed.lag_layout = false;
        let pm = HeadParams::random(&mixed, &mut Rng::new(15), 0.5).unwrap();
        let b = instantiate_pool(x, &cx, &pm, &mixed).unwrap();
        let a = instantiate_pool(x, &aug, &pm, &mixed).unwrap();
        assert!(a.u.slice_rows(0, 4).unwrap().max_abs_diff(&b.u) > 1e-6);
    }

    #[test]
    fn linear_readout_cases() {
        let c = full(Base::ReluL2, true);
        let p = HeadParams::random(&c, &mut Rng::new(16), 0.5).unwrap();
        let cx = ctx(17, 6, 8);
        let x = cx.rows().row(0);
        let view = instantiate_pool(x, &cx, &p, &c).unwrap();
        assert_eq!(linear_contributors(&view), 6);
        // Chain oracle: L2Norm(h) · W² with the explicit second layer.
        let tr = &view.trace;
        let (d2, s2) = tr.r2.as_ref().unwrap();
        let r2 = dense_lag_operator(d2, s2, 6, true).unwrap();
        let n: Vec<f64> = tr.h[0].iter().map(|v| v / view.rho).collect();
        let w2 = r2.matmul_tn(&tr.xv).unwrap().matmul(&p.w_v).unwrap();
        let mut z = Matrix::row_vector(&n).matmul(&w2).unwrap();
        z.as_mut_slice().iter_mut().zip(tr.m2.as_ref().unwrap()).for_each(|(v, g)| *v *= g);
        let expect = z.matmul_nt(&p.w_o).unwrap().into_vec();
        assert!(max_diff(&linear_readout(&view, x, &p).unwrap(), &expect) < 1e-12);

        let mut all_pos = view.clone();
        all_pos.alpha[0] = all_pos.alpha[0].iter().map(|a| a.abs() + 0.1).collect();
        all_pos.rho = rho(&all_pos.alpha[0], c.eps);
        assert!(
            max_diff(&linear_readout(&all_pos, x, &p).unwrap(), &readout_via_pool(&all_pos, x, &p, &c).unwrap()) < 1e-15
        );
    }
}
