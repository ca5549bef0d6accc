//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! A [`Tape`] records every primitive applied through the [`Backend`] trait
//! together with its inputs' node ids. Values are computed eagerly while
//! recording; [`Tape::backward`] walks the record in reverse and accumulates
//! adjoints, and [`Tape::replay`] re-evaluates the record from its leaves.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::ops::{self, sigmoid_scalar, Backend, GatherMap, ZERO};
use crate::error::{Error, Result};

/// Named trainable matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Zero matrices shaped like each parameter.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.values.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect()
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    MulRow(usize, usize),
    MulCol(usize, usize),
    Sigmoid(usize),
    Softplus(usize),
    Relu(usize),
    RowL2Norm(usize, f64),
    MaskedSoftmax(usize, Arc<[bool]>),
    Gather(usize, Arc<GatherMap>),
    VStack(Vec<usize>),
    CrossEntropy(usize, Arc<[usize]>, Arc<[f64]>),
    Sum(usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    // False for constants and anything computed only from constants.
    grad: bool,
}

#[derive(Default, Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, usize)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers `params[id]` as a differentiable leaf.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let v = self.push(Op::Leaf, params.get(id).clone());
        self.nodes[v.0].grad = true;
        self.params.push((id, v.0));
        v
    }

    /// Registers every parameter, returning vars indexed like the set.
    pub fn params(&mut self, params: &ParamSet) -> Vec<Var> {
        params.ids().map(|id| self.param(params, id)).collect()
    }

    pub fn get(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        let grad = match &op {
            Op::Leaf => false,
            Op::VStack(parts) => parts.iter().any(|&p| self.nodes[p].grad),
            other => op_inputs(other).any(|p| self.nodes[p].grad),
        };
        self.nodes.push(Node { op, value, grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = eval_op(&op, |i| &self.nodes[i].value)?;
        Ok(self.push(op, value))
    }

    /// Re-evaluates every recorded operation from the leaf values.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut vals: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                _ => eval_op(&node.op, |i| &vals[i])?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Adjoints of every node with respect to the 1x1 output `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.nodes[out.0].value.shape();
        if shape != (1, 1) {
            return Err(Error::Dimension { op: "backward", left: shape, right: (1, 1) });
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if self.nodes[i].grad {
                self.propagate(i, &g, &mut adj)?;
            }
            adj[i] = Some(g);
        }
        Ok(Gradients { adj })
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        let val = |k: usize| &self.nodes[k].value;
        // Binary ops skip the adjoint of an input that needs no gradient.
        let need = |k: usize| self.nodes[k].grad;
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if need(*a) {
                    accumulate(adj, *a, g.matmul_nt(val(*b))?)?;
                }
                if need(*b) {
                    accumulate(adj, *b, val(*a).matmul_tn(g)?)?;
                }
            }
            Op::MatMulNT(a, b) => {
                if need(*a) {
                    accumulate(adj, *a, g.matmul(val(*b))?)?;
                }
                if need(*b) {
                    accumulate(adj, *b, g.matmul_tn(val(*a))?)?;
                }
            }
            Op::Add(a, b) => {
                if need(*a) {
                    accumulate(adj, *a, g.clone())?;
                }
                if need(*b) {
                    accumulate(adj, *b, g.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if need(*a) {
                    accumulate(adj, *a, g.clone())?;
                }
                if need(*b) {
                    accumulate(adj, *b, g.scale(-1.0))?;
                }
            }
            Op::Mul(a, b) => {
                if need(*a) {
                    accumulate(adj, *a, g.hadamard(val(*b))?)?;
                }
                if need(*b) {
                    accumulate(adj, *b, g.hadamard(val(*a))?)?;
                }
            }
            Op::Scale(a, s) => accumulate(adj, *a, g.scale(*s))?,
            Op::AddScalar(a, _) => accumulate(adj, *a, g.clone())?,
            Op::MulRow(a, r) => {
                if need(*a) {
                    accumulate(adj, *a, ops::mul_row(g, val(*r))?)?;
                }
                if !need(*r) {
                    return Ok(());
                }
                let av = val(*a);
                let mut dr = Matrix::zeros(1, av.cols());
                for row in 0..av.rows() {
                    for ((d, &gv), &x) in dr.as_mut_slice().iter_mut().zip(g.row(row)).zip(av.row(row)) {
                        *d += gv * x;
                    }
                }
                accumulate(adj, *r, dr)?;
            }
            Op::MulCol(a, c) => {
                if need(*a) {
                    accumulate(adj, *a, ops::mul_col(g, val(*c))?)?;
                }
                if !need(*c) {
                    return Ok(());
                }
                let av = val(*a);
                let dc = Matrix::from_fn(av.rows(), 1, |row, _| {
                    g.row(row).iter().zip(av.row(row)).map(|(x, y)| x * y).sum()
                });
                accumulate(adj, *c, dc)?;
            }
            Op::Sigmoid(a) => {
                let d = Matrix::from_fn(y.rows(), y.cols(), |r, c| {
                    let s = y[(r, c)];
                    g[(r, c)] * s * (1.0 - s)
                });
                accumulate(adj, *a, d)?;
            }
            Op::Softplus(a) => {
                let x = val(*a);
                let d = Matrix::from_fn(x.rows(), x.cols(), |r, c| g[(r, c)] * sigmoid_scalar(x[(r, c)]));
                accumulate(adj, *a, d)?;
            }
            Op::Relu(a) => {
                let x = val(*a);
                let d = Matrix::from_fn(x.rows(), x.cols(), |r, c| if x[(r, c)] > 0.0 { g[(r, c)] } else { 0.0 });
                accumulate(adj, *a, d)?;
            }
            Op::RowL2Norm(a, eps) => {
                let x = val(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let rho = libm::sqrt(x.row(r).iter().map(|v| v * v).sum::<f64>() + eps);
                    let ydg: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, &gv), &yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = (gv - yv * ydg) / rho;
                    }
                }
                accumulate(adj, *a, d)?;
            }
            Op::MaskedSoftmax(a, mask) => {
                let cols = y.cols();
                let mut d = Matrix::zeros(y.rows(), cols);
                for r in 0..y.rows() {
                    let ydg: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for (j, o) in d.row_mut(r).iter_mut().enumerate() {
                        if mask[r * cols + j] {
                            *o = y[(r, j)] * (g[(r, j)] - ydg);
                        }
                    }
                }
                accumulate(adj, *a, d)?;
            }
            Op::Gather(a, map) => {
                let src = val(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                let ds = d.as_mut_slice();
                for (k, &ix) in map.idx.iter().enumerate() {
                    if ix != ZERO {
                        ds[ix] += g.as_slice()[k];
                    }
                }
                accumulate(adj, *a, d)?;
            }
            Op::VStack(parts) => {
                let mut start = 0;
                for &p in parts {
                    let n = val(p).rows();
                    accumulate(adj, p, g.slice_rows(start, start + n)?)?;
                    start += n;
                }
            }
            Op::CrossEntropy(a, targets, weights) => {
                let (_, probs) = ops::cross_entropy(val(*a), targets, weights)?;
                let total_w: f64 = weights.iter().sum();
                let scale = if total_w > 0.0 { g.as_slice()[0] / total_w } else { 0.0 };
                let mut d = probs;
                for r in 0..d.rows() {
                    let w = weights[r];
                    let row = d.row_mut(r);
                    if w == 0.0 {
                        row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    row[targets[r]] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= w * scale);
                }
                accumulate(adj, *a, d)?;
            }
            Op::Sum(a) => {
                let x = val(*a);
                accumulate(adj, *a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0]))?;
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Matrix>], k: usize, d: Matrix) -> Result<()> {
    match &mut adj[k] {
        Some(acc) => acc.add_assign(&d),
        slot @ None => {
            *slot = Some(d);
            Ok(())
        }
    }
}

/// Inputs of a fixed-arity op (everything except leaves and stacks).
fn op_inputs(op: &Op) -> impl Iterator<Item = usize> {
    let (a, b) = match *op {
        Op::Leaf | Op::VStack(_) => (None, None),
        Op::MatMul(a, b)
        | Op::MatMulNT(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::MulRow(a, b)
        | Op::MulCol(a, b) => (Some(a), Some(b)),
        Op::Scale(a, _)
        | Op::AddScalar(a, _)
        | Op::Sigmoid(a)
        | Op::Softplus(a)
        | Op::Relu(a)
        | Op::RowL2Norm(a, _)
        | Op::MaskedSoftmax(a, _)
        | Op::Gather(a, _)
        | Op::CrossEntropy(a, _, _)
        | Op::Sum(a) => (Some(a), None),
    };
    a.into_iter().chain(b)
}

fn eval_op<'a>(op: &Op, get: impl Fn(usize) -> &'a Matrix) -> Result<Matrix> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves are not evaluated"),
        Op::VStack(parts) => {
            let refs: Vec<&Matrix> = parts.iter().map(|&p| get(p)).collect();
            Matrix::vstack(&refs)?
        }
        Op::MatMul(a, b) => get(*a).matmul(get(*b))?,
        Op::MatMulNT(a, b) => get(*a).matmul_nt(get(*b))?,
        Op::Add(a, b) => get(*a).add(get(*b))?,
        Op::Sub(a, b) => get(*a).sub(get(*b))?,
        Op::Mul(a, b) => get(*a).hadamard(get(*b))?,
        Op::Scale(a, s) => get(*a).scale(*s),
        Op::AddScalar(a, s) => get(*a).map(|x| x + s),
        Op::MulRow(a, r) => ops::mul_row(get(*a), get(*r))?,
        Op::MulCol(a, c) => ops::mul_col(get(*a), get(*c))?,
        Op::Sigmoid(a) => get(*a).map(sigmoid_scalar),
        Op::Softplus(a) => get(*a).map(ops::softplus_scalar),
        Op::Relu(a) => get(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
        Op::RowL2Norm(a, eps) => ops::row_l2norm(get(*a), *eps),
        Op::MaskedSoftmax(a, mask) => ops::masked_softmax(get(*a), mask)?,
        Op::Gather(a, map) => {
            let src = get(*a);
            if src.len() != map.src_len {
                return Err(Error::Dimension { op: "gather", left: src.shape(), right: (map.src_len, 1) });
            }
            map.apply(src)
        }
        Op::CrossEntropy(a, t, w) => Matrix::filled(1, 1, ops::cross_entropy(get(*a), t, w)?.0),
        Op::Sum(a) => Matrix::filled(1, 1, get(*a).sum()),
    })
}

/// Node adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    /// Parameter gradients accumulated into `out` (shaped like the set).
    pub fn accumulate_params(&self, tape: &Tape, out: &mut [Matrix]) -> Result<()> {
        for &(id, node) in &tape.params {
            if let Some(g) = &self.adj[node] {
                out[id.0].add_assign(g)?;
            }
        }
        Ok(())
    }

    pub fn param_grads(&self, tape: &Tape, params: &ParamSet) -> Result<Vec<Matrix>> {
        let mut out = params.zeros_like();
        self.accumulate_params(tape, &mut out)?;
        Ok(out)
    }
}

impl Backend for Tape {
    type V = Var;

    fn value<'a>(&'a self, v: &'a Var) -> &'a Matrix {
        &self.nodes[v.0].value
    }
    fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Leaf, m)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::MatMul(a.0, b.0))
    }
    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::MatMulNT(a.0, b.0))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Add(a.0, b.0))
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Sub(a.0, b.0))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Mul(a.0, b.0))
    }
    fn scale(&mut self, a: &Var, s: f64) -> Var {
        self.record(Op::Scale(a.0, s)).expect("scale is total")
    }
    fn add_scalar(&mut self, a: &Var, s: f64) -> Var {
        self.record(Op::AddScalar(a.0, s)).expect("add_scalar is total")
    }
    fn mul_row(&mut self, a: &Var, row: &Var) -> Result<Var> {
        self.record(Op::MulRow(a.0, row.0))
    }
    fn mul_col(&mut self, a: &Var, col: &Var) -> Result<Var> {
        self.record(Op::MulCol(a.0, col.0))
    }
    fn sigmoid(&mut self, a: &Var) -> Var {
        self.record(Op::Sigmoid(a.0)).expect("sigmoid is total")
    }
    fn softplus(&mut self, a: &Var) -> Var {
        self.record(Op::Softplus(a.0)).expect("softplus is total")
    }
    fn relu(&mut self, a: &Var) -> Var {
        self.record(Op::Relu(a.0)).expect("relu is total")
    }
    fn row_l2norm(&mut self, a: &Var, eps: f64) -> Var {
        self.record(Op::RowL2Norm(a.0, eps)).expect("row_l2norm is total")
    }
    fn masked_softmax(&mut self, a: &Var, mask: &Arc<[bool]>) -> Result<Var> {
        self.record(Op::MaskedSoftmax(a.0, mask.clone()))
    }
    fn gather(&mut self, a: &Var, map: &Arc<GatherMap>) -> Result<Var> {
        self.record(Op::Gather(a.0, map.clone()))
    }
    fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::VStack(parts.iter().map(|v| v.0).collect()))
    }
    fn cross_entropy(&mut self, logits: &Var, targets: &Arc<[usize]>, weights: &Arc<[f64]>) -> Result<Var> {
        self.record(Op::CrossEntropy(logits.0, targets.clone(), weights.clone()))
    }
    fn sum(&mut self, a: &Var) -> Var {
        self.record(Op::Sum(a.0)).expect("sum is total")
    }
}
