//! Dense row-major `f32` tensors.
//!
//! Only the handful of operations the score network and its loss need are
//! provided. Two-dimensional helpers (`rows`, `cols`, `matmul`) assume the
//! tensor is a matrix and return a shape error otherwise.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {expected} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("from_rows", &[cols], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::NonScalarLoss(self.shape.clone()))
        }
    }

    fn matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::InvalidShape {
                shape: other.to_vec(),
                reason: format!("{op} expects a matrix"),
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f32 {
        self.sum() / self.data.len() as f32
    }

    /// `self · other` for matrices `[m, k] · [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul")?;
        let (k2, n) = other.matrix_dims("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0f32; m * n];
        gemm(m, k, n, &self.data, (k, 1), &other.data, (n, 1), &mut out);
        Self::new(vec![m, n], out)
    }

    /// `selfᵀ · other` for `[k, m]` and `[k, n]`.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Self> {
        let (k, m) = self.matrix_dims("t_matmul")?;
        let (k2, n) = other.matrix_dims("t_matmul")?;
        if k != k2 {
            return Err(Error::shape("t_matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0f32; m * n];
        gemm(m, k, n, &self.data, (1, m), &other.data, (n, 1), &mut out);
        Self::new(vec![m, n], out)
    }

    /// `self · otherᵀ` for `[m, k]` and `[n, k]`.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul_t")?;
        let (n, k2) = other.matrix_dims("matmul_t")?;
        if k != k2 {
            return Err(Error::shape("matmul_t", &self.shape, &other.shape));
        }
        let mut out = vec![0.0f32; m * n];
        gemm(m, k, n, &self.data, (k, 1), &other.data, (1, k), &mut out);
        Self::new(vec![m, n], out)
    }

    /// Adds a `[c]` bias to every row of a `[r, c]` matrix.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Self> {
        let (_, c) = self.matrix_dims("add_bias")?;
        if bias.shape != [c] {
            return Err(Error::shape("add_bias", &self.shape, &bias.shape));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Column sums of a `[r, c]` matrix, shape `[c]`.
    pub fn sum_rows(&self) -> Result<Self> {
        let (_, c) = self.matrix_dims("sum_rows")?;
        let mut out = vec![0.0f32; c];
        for row in self.data.chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Self::new(vec![c], out)
    }

    /// Row-wise softmax of a `[r, c]` matrix.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (_, c) = self.matrix_dims("softmax")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            softmax_in_place(row);
        }
        Ok(out)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe matrices that lie entirely within the
    // given slices; `c` is a dense `m x n` row-major buffer.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Vec<f32> {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data[i * k + p] * b.data[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn matmul_variants_agree_with_naive() {
        let a = Tensor::new(vec![3, 4], (0..12).map(|v| v as f32 * 0.5 - 2.0).collect()).unwrap();
        let b = Tensor::new(vec![4, 2], (0..8).map(|v| (v as f32).sin()).collect()).unwrap();
        let expected = naive(&a, &b);
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-5);
        }

        let at = transpose(&a);
        let got_t = at.t_matmul(&b).unwrap();
        assert_eq!(got_t.shape(), &[3, 2]);
        for (g, e) in got_t.data().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-5);
        }

        let bt = transpose(&b);
        let got_mt = a.matmul_t(&bt).unwrap();
        for (g, e) in got_mt.data().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-5);
        }
    }

    fn transpose(t: &Tensor) -> Tensor {
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], data).unwrap()
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn bias_and_column_sums() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2], vec![10.0, 20.0]).unwrap();
        assert_eq!(x.add_bias(&b).unwrap().data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(x.sum_rows().unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(vec![2, 3], vec![2.0, 0.1, -1.0, 1000.0, 1000.0, 0.0]).unwrap();
        let s = x.softmax_rows().unwrap();
        for i in 0..2 {
            let total: f32 = s.row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
        assert!((s.row(1)[0] - 0.5).abs() < 1e-6);
    }
}
