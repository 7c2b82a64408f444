//! Dense vector primitives, cosine similarity and its gradient, stable reductions.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};

/// A finite, non-empty dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("vector"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector".into()));
        }
        Ok(Vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += scale * other`, entrywise.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Stacks `top` above `bottom`.
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
        if top.cols != bottom.cols {
            return Err(Error::DimensionMismatch { expected: top.cols, found: bottom.cols });
        }
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(Matrix { rows: top.rows + bottom.rows, cols: top.cols, data })
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    if u.is_empty() {
        return Err(Error::Empty("vector"));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(Error::ZeroNorm("first vector"));
    }
    if nv == 0.0 {
        return Err(Error::ZeroNorm("second vector"));
    }
    Ok((nu, nv))
}

/// `uᵀv / (‖u‖‖v‖)`. Zero-norm inputs are an error, never a silent 0.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = check_pair(u, v)?;
    Ok(dot(u, v) / (nu * nv))
}

/// Gradients of [`cosine_sim`] with respect to `u` and `v`.
///
/// `d/du = v/(‖u‖‖v‖) − sim·u/‖u‖²`, and symmetrically for `v`.
pub fn cosine_sim_grad(u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nu, nv) = check_pair(u, v)?;
    let s = dot(u, v) / (nu * nv);
    let inv = 1.0 / (nu * nv);
    let du = u.iter().zip(v).map(|(a, b)| b * inv - s * a / (nu * nu)).collect();
    let dv = u.iter().zip(v).map(|(a, b)| a * inv - s * b / (nv * nv)).collect();
    Ok((du, dv))
}

/// `log Σ exp(x_i)` via max shift.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("log_sum_exp input"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log_sum_exp input".into()));
    }
    if xs.len() == 1 {
        return Ok(xs[0]);
    }
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = xs.iter().map(|x| libm::exp(x - m)).sum();
    Ok(m + libm::log(s))
}

/// Softmax written into `out`; returns the log-normalizer. `xs` must be non-empty and finite.
pub(crate) fn softmax_into(xs: &[f64], out: &mut [f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, x) in out.iter_mut().zip(xs) {
        *o = libm::exp(x - m);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
    m + libm::log(s)
}

/// Unit-normalized copies of a set of rows, with their original norms, for
/// repeated cosine evaluation.
#[derive(Debug, Clone)]
pub(crate) struct UnitRows {
    pub unit: Matrix,
    pub norms: Vec<f64>,
}

impl UnitRows {
    pub fn new(m: &Matrix) -> Result<Self> {
        let mut unit = m.clone();
        let mut norms = Vec::with_capacity(m.rows());
        for i in 0..m.rows() {
            let n = norm(m.row(i));
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroNorm("embedding row"));
            }
            unit.row_mut(i).iter_mut().for_each(|x| *x /= n);
            norms.push(n);
        }
        Ok(UnitRows { unit, norms })
    }

    pub fn sim(&self, i: usize, j: usize) -> f64 {
        dot(self.unit.row(i), self.unit.row(j))
    }

    /// Cosine of row `i` of `self` and row `j` of `other`.
    pub fn cross(&self, i: usize, other: &UnitRows, j: usize) -> f64 {
        dot(self.unit.row(i), other.unit.row(j))
    }

    /// Adds `coef · ∂sim(a, b)/∂z_a` to `grad`, where `sim` is the cosine of
    /// rows `a` of `self` and `b` of `other`.
    pub fn accumulate(&self, a: usize, other: &UnitRows, b: usize, coef: f64, grad: &mut [f64]) {
        if coef == 0.0 {
            return;
        }
        let ua = self.unit.row(a);
        let ub = other.unit.row(b);
        let s = dot(ua, ub);
        let scale = coef / self.norms[a];
        for ((g, x), y) in grad.iter_mut().zip(ua).zip(ub) {
            *g += scale * (y - s * x);
        }
    }
}
