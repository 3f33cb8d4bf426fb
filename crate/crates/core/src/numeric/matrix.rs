use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: format!("matrix {rows}x{cols}"),
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Single-row matrix holding a copy of `v`.
    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Column sums, accumulated in row order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = a · wᵀ` where `a` is `b×k` and `w` is `n×k`.
pub fn matmul_a_wt(a: &Matrix, w: &Matrix, out: &mut Matrix) {
    assert_eq!(a.cols, w.cols, "matmul_a_wt inner dimension");
    assert_eq!(out.rows, a.rows, "matmul_a_wt output rows");
    assert_eq!(out.cols, w.rows, "matmul_a_wt output cols");
    let (m, k, n) = (a.rows, a.cols, w.rows);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.data.fill(0.0);
        return;
    }
    // SAFETY: strides describe buffers of exactly the asserted shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            w.data.as_ptr(),
            1,
            k as isize,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `acc += dzᵀ · x` where `dz` is `b×n` and `x` is `b×k`; `acc` is `n×k`.
pub fn accumulate_dzt_x(dz: &Matrix, x: &Matrix, acc: &mut Matrix) {
    assert_eq!(dz.rows, x.rows, "accumulate_dzt_x batch");
    assert_eq!(acc.rows, dz.cols, "accumulate_dzt_x rows");
    assert_eq!(acc.cols, x.cols, "accumulate_dzt_x cols");
    let (m, k, n) = (dz.cols, dz.rows, x.cols);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // SAFETY: as above; dzᵀ is read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            dz.data.as_ptr(),
            1,
            m as isize,
            x.data.as_ptr(),
            n as isize,
            1,
            1.0,
            acc.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out = dz · w` where `dz` is `b×n` and `w` is `n×k`.
pub fn matmul_dz_w(dz: &Matrix, w: &Matrix, out: &mut Matrix) {
    assert_eq!(dz.cols, w.rows, "matmul_dz_w inner dimension");
    assert_eq!(out.rows, dz.rows, "matmul_dz_w output rows");
    assert_eq!(out.cols, w.cols, "matmul_dz_w output cols");
    let (m, k, n) = (dz.rows, dz.cols, w.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.data.fill(0.0);
        return;
    }
    // SAFETY: plain row-major operands.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            dz.data.as_ptr(),
            k as isize,
            1,
            w.data.as_ptr(),
            n as isize,
            1,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = W x` for a single vector.
pub fn matvec(w: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols, x.len(), "matvec inner dimension");
    (0..w.rows).map(|r| dot(w.row(r), x)).collect()
}

/// `y = Wᵀ x` for a single vector.
pub fn matvec_t(w: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.rows, x.len(), "matvec_t inner dimension");
    let mut out = vec![0.0; w.cols];
    for (r, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(w.row(r)) {
            *o += xv * wv;
        }
    }
    out
}

/// `acc += u ⊗ v`.
pub fn add_outer(acc: &mut Matrix, u: &[f64], v: &[f64]) {
    assert_eq!(acc.rows, u.len());
    assert_eq!(acc.cols, v.len());
    for (r, &uv) in u.iter().enumerate() {
        if uv == 0.0 {
            continue;
        }
        for (a, vv) in acc.row_mut(r).iter_mut().zip(v) {
            *a += uv * vv;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
