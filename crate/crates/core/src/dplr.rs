//! Input-conditioned diagonal-plus-low-rank mixing `R = (I + Diag(p)) + A·Diag(s)·Bᵀ`.
//!
//! `p`, `A` and `B` are lag-indexed: entry `i` belongs to the token `i` steps
//! back. A length-`t` operator uses the first `t` entries.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::ops::sigmoid_scalar;
use crate::numerics::{Matrix, Rng};

/// Multiply tally for the instrumented fast paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MulCount(pub u64);

impl MulCount {
    fn add(&mut self, n: usize) {
        self.0 += n as u64;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DplrParams {
    pub p: Vec<f64>,
    /// `L_max x r_s`
    pub a: Matrix,
    /// `L_max x r_s`
    pub b: Matrix,
    /// `d x r_s`
    pub w_s: Matrix,
}

impl DplrParams {
    pub fn new(p: Vec<f64>, a: Matrix, b: Matrix, w_s: Matrix) -> Result<Self> {
        let l = p.len();
        if a.rows() != l || b.rows() != l {
            return Err(Error::Dimension { op: "dplr lag factors", left: a.shape(), right: b.shape() });
        }
        if a.cols() != b.cols() || w_s.cols() != a.cols() {
            return Err(Error::Dimension { op: "dplr rank", left: a.shape(), right: w_s.shape() });
        }
        if a.cols() == 0 {
            return Err(Error::Config("r_s must be at least 1".into()));
        }
        Ok(Self { p, a, b, w_s })
    }

    /// `p = 0`, `A, B, W_S ~ N(0, std²)`.
    pub fn init(l_max: usize, r_s: usize, d: usize, std: f64, rng: &mut Rng) -> Result<Self> {
        let a = rng.normal_matrix(l_max, r_s, std);
        let b = rng.normal_matrix(l_max, r_s, std);
        let w_s = rng.normal_matrix(d, r_s, std);
        Self::new(vec![0.0; l_max], a, b, w_s)
    }

    pub fn l_max(&self) -> usize {
        self.p.len()
    }

    pub fn r_s(&self) -> usize {
        self.a.cols()
    }

    pub fn d(&self) -> usize {
        self.w_s.rows()
    }

    fn check_len(&self, t: usize) -> Result<()> {
        if t > self.l_max() {
            return Err(Error::Range { what: "mixing length", value: t, limit: self.l_max() });
        }
        Ok(())
    }

    /// `s_k = sigmoid((x·W_S)_k)`.
    pub fn gate_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::Dimension { op: "gate_vector", left: (1, x.len()), right: self.w_s.shape() });
        }
        let xs = Matrix::row_vector(x).matmul(&self.w_s)?;
        Ok(xs.as_slice().iter().map(|&v| sigmoid_scalar(v)).collect())
    }

    /// Parameters restricted to the first `t` lags.
    pub fn slice_prefix(&self, t: usize) -> Result<Self> {
        self.check_len(t)?;
        Ok(Self {
            p: self.p[..t].to_vec(),
            a: self.a.slice_rows(0, t)?,
            b: self.b.slice_rows(0, t)?,
            w_s: self.w_s.clone(),
        })
    }

    /// Pads to `t_new` lags with `p = -1` and zero factors, so the extra
    /// diagonal entries of `D` vanish.
    pub fn extend(&self, t_new: usize) -> Result<Self> {
        let t = self.l_max();
        if t_new < t {
            return Err(Error::Range { what: "extension length", value: t, limit: t_new });
        }
        let mut p = self.p.clone();
        p.resize(t_new, -1.0);
        let pad = |m: &Matrix| Matrix::from_fn(t_new, m.cols(), |i, j| if i < t { m[(i, j)] } else { 0.0 });
        Ok(Self { p, a: pad(&self.a), b: pad(&self.b), w_s: self.w_s.clone() })
    }

    /// Dense `t x t` operator. Reference path only.
    pub fn materialize(&self, s: &[f64], t: usize) -> Result<Matrix> {
        self.check_len(t)?;
        self.check_gate(s)?;
        let r = self.r_s();
        Ok(Matrix::from_fn(t, t, |i, j| {
            let diag = if i == j { 1.0 + self.p[i] } else { 0.0 };
            diag + (0..r).map(|k| self.a[(i, k)] * s[k] * self.b[(j, k)]).sum::<f64>()
        }))
    }

    fn check_gate(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.r_s() {
            return Err(Error::Dimension { op: "dplr gate", left: (1, s.len()), right: (1, self.r_s()) });
        }
        Ok(())
    }

    /// `y·R` without forming `R`.
    pub fn mix_right(&self, y: &[f64], s: &[f64]) -> Result<Vec<f64>> {
        self.mix_right_counted(y, s, &mut MulCount::default())
    }

    /// `y·Rᵀ` without forming `R`.
    pub fn mix_right_transpose(&self, y: &[f64], s: &[f64]) -> Result<Vec<f64>> {
        self.mix_right_transpose_counted(y, s, &mut MulCount::default())
    }

    pub fn mix_right_counted(&self, y: &[f64], s: &[f64], count: &mut MulCount) -> Result<Vec<f64>> {
        vec_dplr(&self.p, &self.a, &self.b, y, s, self.checked(y, s)?, count)
    }

    pub fn mix_right_transpose_counted(&self, y: &[f64], s: &[f64], count: &mut MulCount) -> Result<Vec<f64>> {
        vec_dplr(&self.p, &self.b, &self.a, y, s, self.checked(y, s)?, count)
    }

    fn checked(&self, y: &[f64], s: &[f64]) -> Result<usize> {
        self.check_len(y.len())?;
        self.check_gate(s)?;
        Ok(y.len())
    }

    /// `Rᵀ·X` when `transpose`, else `R·X`, for lag rows `X` (`t x c`).
    pub fn mix_rows(&self, x: &Matrix, s: &[f64], transpose: bool) -> Result<Matrix> {
        let t = x.rows();
        self.check_len(t)?;
        self.check_gate(s)?;
        // Rᵀ X = D X + B Diag(s) Aᵀ X and R X = D X + A Diag(s) Bᵀ X.
        let (left, right) = if transpose { (&self.b, &self.a) } else { (&self.a, &self.b) };
        let left = left.slice_rows(0, t)?;
        let right = right.slice_rows(0, t)?;
        let mut inner = right.matmul_tn(x)?;
        for k in 0..inner.rows() {
            for v in inner.row_mut(k) {
                *v *= s[k];
            }
        }
        let mut out = left.matmul(&inner)?;
        for i in 0..t {
            let di = 1.0 + self.p[i];
            for (o, &xv) in out.row_mut(i).iter_mut().zip(x.row(i)) {
                *o += di * xv;
            }
        }
        Ok(out)
    }
}

/// `y ⊙ (1+p) + ((y·U) ⊙ s)·Wᵀ` over the first `t` lags.
fn vec_dplr(p: &[f64], u: &Matrix, w: &Matrix, y: &[f64], s: &[f64], t: usize, count: &mut MulCount) -> Result<Vec<f64>> {
    let r = u.cols();
    let diag_trivial = p[..t].iter().all(|&v| v == 0.0);
    let low_rank_dead = u.slice_rows(0, t)?.max_abs() == 0.0 || w.slice_rows(0, t)?.max_abs() == 0.0;
    let mut out: Vec<f64> = if diag_trivial {
        y.to_vec()
    } else {
        count.add(t);
        y.iter().zip(p).map(|(&yv, &pv)| yv * (1.0 + pv)).collect()
    };
    if low_rank_dead {
        return Ok(out);
    }
    let mut z = vec![0.0; r];
    for (i, &yv) in y.iter().enumerate() {
        for (zk, &uk) in z.iter_mut().zip(u.row(i)) {
            *zk += yv * uk;
        }
    }
    for (zk, &sk) in z.iter_mut().zip(s) {
        *zk *= sk;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o += crate::numerics::matrix::dot(&z, w.row(i));
    }
    count.add(2 * t * r + r);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_normal;

    fn e(t: usize, i: usize) -> Matrix {
        Matrix::from_fn(t, 1, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    fn random(seed: u64, t: usize, r: usize, d: usize) -> DplrParams {
        let mut rng = Rng::new(seed);
        let p = (0..t).map(|_| rng.normal()).collect();
        DplrParams::new(p, rng.normal_matrix(t, r, 1.0), rng.normal_matrix(t, r, 1.0), rng.normal_matrix(d, r, 1.0))
            .unwrap()
    }

    fn vec_matmul(y: &[f64], m: &Matrix) -> Vec<f64> {
        Matrix::row_vector(y).matmul(m).unwrap().into_vec()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn gate_vector_cases() {
        let zero = DplrParams::new(vec![0.0], Matrix::zeros(1, 3), Matrix::zeros(1, 3), Matrix::zeros(2, 3)).unwrap();
        assert_eq!(zero.gate_vector(&[1.0, -4.0]).unwrap(), vec![0.5; 3]);
        let hot = DplrParams::new(vec![0.0], Matrix::zeros(1, 2), Matrix::zeros(1, 2), Matrix::filled(1, 2, 20.0)).unwrap();
        assert!(hot.gate_vector(&[1.0]).unwrap().iter().all(|&s| (1.0 - s) < 1e-8));
        let rnd = random(4, 3, 4, 5);
        let x = seeded_normal(5, 1, 5, 1.0);
        let xs = x.matmul(&rnd.w_s).unwrap();
        let s = rnd.gate_vector(x.as_slice()).unwrap();
        // The reference form and the branch-stable form differ in the last ulp.
        for k in 0..4 {
            assert!((s[k] - 1.0 / (1.0 + libm::exp(-xs[(0, k)]))).abs() < 1e-15);
        }
    }

    #[test]
    fn materialize_cases() {
        let zero_a = DplrParams::new(vec![0.0; 3], Matrix::zeros(3, 1), seeded_normal(1, 3, 1, 1.0), Matrix::zeros(2, 1)).unwrap();
        assert_eq!(zero_a.materialize(&[0.3], 3).unwrap(), Matrix::identity(3));
        let upper = DplrParams::new(vec![0.0, 0.0], e(2, 0), e(2, 1), Matrix::zeros(1, 1)).unwrap();
        assert_eq!(upper.materialize(&[1.0], 2).unwrap(), Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
        let rnd = random(7, 3, 2, 2);
        let s = [0.2, 0.9];
        let r = rnd.materialize(&s, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let diag = if i == j { 1.0 + rnd.p[i] } else { 0.0 };
                let low_rank: f64 = (0..2).map(|k| rnd.a[(i, k)] * s[k] * rnd.b[(j, k)]).sum();
                assert_eq!(r[(i, j)], diag + low_rank);
            }
        }
        assert!(r.max_abs_diff(&r.transpose()) > 1e-6);
        assert!(matches!(rnd.materialize(&s, 4), Err(Error::Range { .. })));
    }

    #[test]
    fn mix_right_cases() {
        let m = DplrParams::new(vec![0.0; 3], e(3, 0), e(3, 1), Matrix::zeros(1, 1)).unwrap();
        assert_eq!(m.mix_right(&[1.0, 2.0, 3.0], &[1.0]).unwrap(), vec![1.0, 3.0, 3.0]);

        let mut diag = random(2, 4, 2, 1);
        diag.a = Matrix::zeros(4, 2);
        let y = [1.0, -2.0, 0.5, 3.0];
        let expect: Vec<f64> = y.iter().zip(&diag.p).map(|(a, b)| a * (1.0 + b)).collect();
        assert_eq!(diag.mix_right(&y, &[0.5, 0.5]).unwrap(), expect);
        assert_eq!(diag.mix_right_transpose(&y, &[0.5, 0.5]).unwrap(), expect);

        let big = random(3, 64, 16, 2);
        let s: Vec<f64> = (0..16).map(|k| (k as f64 + 0.5) / 16.0).collect();
        let y = seeded_normal(9, 1, 64, 1.0);
        let dense = big.materialize(&s, 64).unwrap();
        assert!(max_diff(&big.mix_right(y.as_slice(), &s).unwrap(), &vec_matmul(y.as_slice(), &dense)) < 1e-12);
        let dense_t = dense.transpose();
        assert!(max_diff(&big.mix_right_transpose(y.as_slice(), &s).unwrap(), &vec_matmul(y.as_slice(), &dense_t)) < 1e-12);
        assert!(big.mix_right(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn mix_right_after_transpose_is_not_identity() {
        let m = random(5, 6, 2, 1);
        let s = [0.4, 0.7];
        let y = seeded_normal(6, 1, 6, 1.0);
        let twice = m.mix_right(&m.mix_right_transpose(y.as_slice(), &s).unwrap(), &s).unwrap();
        let dense = m.materialize(&s, 6).unwrap();
        let rrt = dense.transpose().matmul(&dense).unwrap();
        assert!(max_diff(&twice, &vec_matmul(y.as_slice(), &rrt)) < 1e-12);
        assert!(max_diff(&twice, y.as_slice()) > 1e-6);
    }

    #[test]
    fn multiply_count_bound() {
        let m = random(8, 40, 5, 1);
        let mut c = MulCount::default();
        m.mix_right_counted(&[1.0; 40], &[0.5; 5], &mut c).unwrap();
        assert_eq!(c.0, 2 * 40 * 5 + 40 + 5);
        let dead = DplrParams::new(vec![0.0; 40], Matrix::zeros(40, 5), m.b.clone(), m.w_s.clone()).unwrap();
        let mut c = MulCount::default();
        dead.mix_right_counted(&[1.0; 40], &[0.5; 5], &mut c).unwrap();
        assert_eq!(c.0, 0);
    }

    #[test]
    fn mix_rows_cases() {
        let id = DplrParams::new(vec![0.0; 4], Matrix::zeros(4, 1), Matrix::zeros(4, 1), Matrix::zeros(1, 1)).unwrap();
        let x = seeded_normal(1, 4, 3, 1.0);
        assert_eq!(id.mix_rows(&x, &[0.9], true).unwrap(), x);
        let upper = DplrParams::new(vec![0.0, 0.0], e(2, 0), e(2, 1), Matrix::zeros(1, 1)).unwrap();
        let (a, b) = (2.0, 5.0);
        let ab = Matrix::from_rows(&[&[a], &[b]]);
        assert_eq!(upper.mix_rows(&ab, &[1.0], true).unwrap(), Matrix::from_rows(&[&[a], &[a + b]]));
        let rnd = random(11, 16, 3, 1);
        let s = [0.1, 0.5, 0.8];
        let x = seeded_normal(12, 16, 8, 1.0);
        let dense = rnd.materialize(&s, 16).unwrap();
        assert!(rnd.mix_rows(&x, &s, true).unwrap().max_abs_diff(&dense.matmul_tn(&x).unwrap()) < 1e-12);
        assert!(rnd.mix_rows(&x, &s, false).unwrap().max_abs_diff(&dense.matmul(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn extend_cases() {
        let m = random(13, 4, 2, 1);
        assert_eq!(m.extend(4).unwrap(), m);
        let one = DplrParams::new(vec![0.5], Matrix::zeros(1, 1), Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        let ext = one.extend(3).unwrap();
        assert_eq!(ext.p, vec![0.5, -1.0, -1.0]);
        let diag: Vec<f64> = (0..3).map(|i| ext.materialize(&[1.0], 3).unwrap()[(i, i)]).collect();
        assert_eq!(diag, vec![1.5, 0.0, 0.0]);

        let s = [0.3, 0.6];
        let small = m.materialize(&s, 4).unwrap();
        let big = m.extend(7).unwrap().materialize(&s, 7).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let expect = if i < 4 && j < 4 { small[(i, j)] } else { 0.0 };
                assert_eq!(big[(i, j)], expect);
            }
        }
        assert!(m.extend(3).is_err());
    }
}
