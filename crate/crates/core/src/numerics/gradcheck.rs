use alloc::string::String;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::ops::{Backend, Eager};
use super::tape::{ParamSet, Tape};
use crate::error::{Error, Result};

/// A scalar function of a parameter set, evaluable on any backend.
pub trait Objective {
    /// `params[k]` is the backend value of the k-th entry of the set.
    fn eval<B: Backend>(&self, b: &mut B, params: &[B::V]) -> Result<B::V>;
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    /// `max|analytic − numeric| / (max|numeric| + 1e-8)` over the matrix.
    pub rel_err: f64,
    pub analytic: Matrix,
    pub numeric: Matrix,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| f64::max(m, p.rel_err))
    }

    /// `max|analytic − numeric| / (max|numeric| + 1e-8)` over every parameter
    /// at once. Unlike [`Self::max_rel_err`] it stays meaningful when some
    /// matrices have an identically zero gradient.
    pub fn global_rel_err(&self) -> f64 {
        let diff = self.params.iter().fold(0.0, |m, p| f64::max(m, p.analytic.max_abs_diff(&p.numeric)));
        let scale = self.params.iter().fold(0.0, |m, p| f64::max(m, p.numeric.max_abs()));
        diff / (scale + 1e-8)
    }
}

fn eval_eager(obj: &impl Objective, values: &[Matrix]) -> Result<f64> {
    let mut eager = Eager;
    let out = obj.eval(&mut eager, values)?;
    let v = out.as_slice()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok(v)
}

/// Analytic tape gradients against central differences with step `h`.
pub fn grad_check(obj: &impl Objective, params: &ParamSet, h: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::Config(alloc::format!("finite-difference step {h} outside [1e-6, 1e-4]")));
    }
    let mut tape = Tape::new();
    let vars = tape.params(params);
    let out = obj.eval(&mut tape, &vars)?;
    if !tape.get(out).all_finite() {
        return Err(Error::NonFinite("objective"));
    }
    let analytic = tape.backward(out)?.param_grads(&tape, params)?;

    let mut values: Vec<Matrix> = params.values().to_vec();
    let mut report = Vec::with_capacity(params.len());
    for id in params.ids() {
        let (rows, cols) = params.get(id).shape();
        let mut numeric = Matrix::zeros(rows, cols);
        for k in 0..rows * cols {
            let orig = values[id.0].as_slice()[k];
            values[id.0].as_mut_slice()[k] = orig + h;
            let plus = eval_eager(obj, &values)?;
            values[id.0].as_mut_slice()[k] = orig - h;
            let minus = eval_eager(obj, &values)?;
            values[id.0].as_mut_slice()[k] = orig;
            numeric.as_mut_slice()[k] = (plus - minus) / (2.0 * h);
        }
        let a = &analytic[id.0];
        let rel_err = a.max_abs_diff(&numeric) / (numeric.max_abs() + 1e-8);
        report.push(ParamCheck { name: params.name(id).into(), rel_err, analytic: a.clone(), numeric });
    }
    Ok(GradCheckReport { params: report })
}
