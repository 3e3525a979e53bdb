//! Dense 2-D tensors with deterministic sequential matmul kernels.
//!
//! The kernels stay single-threaded on purpose: individual layer matmuls are
//! too small to amortize fork-join overhead, and the training loop gets its
//! parallelism at the fold level instead.

use super::scalar::Scalar;
use crate::features::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    /// (rows, cols); scalars are (1, 1).
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![T::ZERO; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor { rows: m.rows, cols: m.cols, data: m.data.iter().map(|&v| T::from_f32(v)).collect() }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.to_f32()).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// C = A (m,k) x B (k,n). Four output rows per pass, so each B row is
    /// streamed once per block instead of once per row. The per-element
    /// accumulation order is plain ascending k either way.
    pub fn matmul(&self, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let (k, n) = (self.cols, b.cols);
        let mut out = Tensor::zeros(self.rows, n);
        let mut oblocks = out.data.chunks_exact_mut(4 * n);
        let mut ablocks = self.data.chunks_exact(4 * k);
        for (oblk, ablk) in (&mut oblocks).zip(&mut ablocks) {
            let (o01, o23) = oblk.split_at_mut(2 * n);
            let (o0, o1) = o01.split_at_mut(n);
            let (o2, o3) = o23.split_at_mut(n);
            for p in 0..k {
                let (a0, a1, a2, a3) = (ablk[p], ablk[k + p], ablk[2 * k + p], ablk[3 * k + p]);
                let brow = &b.data[p * n..(p + 1) * n];
                for j in 0..n {
                    o0[j] += a0 * brow[j];
                    o1[j] += a1 * brow[j];
                    o2[j] += a2 * brow[j];
                    o3[j] += a3 * brow[j];
                }
            }
        }
        for (orow, arow) in
            oblocks.into_remainder().chunks_exact_mut(n).zip(ablocks.remainder().chunks_exact(k))
        {
            row_axpy(orow, arow, &b.data, n);
        }
        out
    }

    pub fn transpose(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// C = A (m,k) x B^T where B is (n,k). One cheap transpose beats strided
    /// inner loops.
    pub fn matmul_nt(&self, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.cols, b.cols, "matmul_nt shape mismatch");
        self.matmul(&b.transpose())
    }

    /// C = A^T x B where A is (k,m) and B is (k,n).
    pub fn matmul_tn(&self, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.rows, b.rows, "matmul_tn shape mismatch");
        self.transpose().matmul(b)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_inplace(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Plain ascending-k accumulation for leftover rows.
#[inline]
fn row_axpy<T: Scalar>(orow: &mut [T], arow: &[T], b: &[T], n: usize) {
    for (p, &a) in arow.iter().enumerate() {
        let brow = &b[p * n..(p + 1) * n];
        for (o, &bv) in orow.iter_mut().zip(brow) {
            *o += a * bv;
        }
    }
}
