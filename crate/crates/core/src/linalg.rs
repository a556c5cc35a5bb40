//! Cholesky factorization and triangular solves for symmetric positive
//! definite systems.

use libm::{log, sqrt};

use crate::{Error, Result, Tensor};

/// Smallest and largest diagonal jitter, relative to the caller's scale.
const JITTER_START: f64 = 1e-10;
const JITTER_STOP: f64 = 1e-4;

/// Lower-triangular factor `L` with `L·Lᵀ = A + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    factor: Tensor,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a`, escalating diagonal jitter from `1e-10·scale` by
    /// factors of ten up to `1e-4·scale` if the plain factorization fails.
    pub fn new(a: &Tensor, scale: f64) -> Result<Self> {
        if let Some(factor) = cholesky(a) {
            return Ok(Self {
                factor,
                jitter: 0.0,
            });
        }
        let mut jitter = JITTER_START * scale;
        while jitter <= JITTER_STOP * scale * (1.0 + 1e-9) {
            let mut shifted = a.clone();
            for i in 0..a.rows() {
                shifted.set(i, i, a.get(i, i) + jitter);
            }
            if let Some(factor) = cholesky(&shifted) {
                return Ok(Self { factor, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Cholesky {
            condition: condition_estimate(a),
        })
    }

    pub fn factor(&self) -> &Tensor {
        &self.factor
    }

    /// Diagonal shift that was needed to factorize (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// `log det(A + jitter·I) = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim())
            .map(|i| log(self.factor.get(i, i)))
            .sum::<f64>()
            * 2.0
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        for i in 0..b.len() {
            let row = l.row(i);
            let mut acc = b[i];
            for k in 0..i {
                acc -= row[k] * b[k];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let n = b.len();
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= l.get(k, i) * b[k];
            }
            b[i] = acc / l.get(i, i);
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> alloc::vec::Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Solves `L X = B` for an `n x m` right-hand side, row by row so the
    /// inner loop runs over contiguous memory.
    pub fn solve_lower_matrix(&self, b: &mut Tensor) {
        let l = &self.factor;
        let m = b.cols();
        let data = b.as_mut_slice();
        for i in 0..l.rows() {
            let (done, rest) = data.split_at_mut(i * m);
            let target = &mut rest[..m];
            let row = l.row(i);
            for (k, &lik) in row[..i].iter().enumerate() {
                let src = &done[k * m..(k + 1) * m];
                for (t, &s) in target.iter_mut().zip(src) {
                    *t -= lik * s;
                }
            }
            let inv = 1.0 / row[i];
            target.iter_mut().for_each(|t| *t *= inv);
        }
    }

    /// `A⁻¹`, built from `L⁻¹` as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Tensor {
        let n = self.dim();
        let mut linv = Tensor::identity(n);
        self.solve_lower_matrix(&mut linv);
        let mut out = Tensor::zeros(n, n);
        // (L⁻ᵀ L⁻¹)_ij = Σ_k Linv_ki Linv_kj, with Linv lower triangular.
        for k in 0..n {
            let row = linv.row(k);
            for i in 0..=k {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    let v = out.get(i, j) + a * row[j];
                    out.set(i, j, v);
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                let v = out.get(i, j);
                out.set(j, i, v);
            }
        }
        out
    }
}

/// Plain Cholesky–Banachiewicz. `None` when a pivot is not strictly positive
/// (or not finite).
pub fn cholesky(a: &Tensor) -> Option<Tensor> {
    let n = a.rows();
    if a.cols() != n {
        return None;
    }
    let mut l = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            let (li, lj) = (l.row(i), l.row(j));
            for k in 0..j {
                acc -= li[k] * lj[k];
            }
            if i == j {
                if !(acc > 0.0) || !acc.is_finite() {
                    return None;
                }
                l.set(i, i, sqrt(acc));
            } else {
                let v = acc / l.get(j, j);
                l.set(i, j, v);
            }
        }
    }
    Some(l)
}

/// Ratio of the largest to the smallest diagonal entry; a cheap lower bound
/// on the condition number of an SPD matrix.
fn condition_estimate(a: &Tensor) -> f64 {
    let n = a.rows().min(a.cols());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = a.get(i, i).abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}
