//! Row-major dense matrices and the three GEMM shapes the tape needs.

use crate::scalar::Real;

/// Row-major `rows x cols` matrix. A batch of samples is one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices of equal length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self { rows: range.len(), cols: self.cols, data: self.data[range.start * self.cols..range.end * self.cols].to_vec() }
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }
}

/// Borrowed row-major view, used for parameter blocks living in a flat vector.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a, T> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [T],
}

impl<'a, T: Real> MatRef<'a, T> {
    pub fn new(rows: usize, cols: usize, data: &'a [T]) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }
}

impl<'a, T: Real> From<&'a Mat<T>> for MatRef<'a, T> {
    fn from(m: &'a Mat<T>) -> Self {
        MatRef { rows: m.rows, cols: m.cols, data: &m.data }
    }
}

/// `out (n x m) = beta * out + x (n x k) * w^T`, with `w` stored `m x k`.
pub fn gemm_xwt<T: Real>(x: MatRef<T>, w: MatRef<T>, beta: T, out: &mut [T]) {
    assert_eq!(x.cols, w.cols);
    assert_eq!(out.len(), x.rows * w.rows);
    if x.rows == 0 || w.rows == 0 {
        return;
    }
    // SAFETY: extents checked above; `out` is a distinct mutable buffer.
    unsafe {
        T::gemm_raw(
            x.rows,
            x.cols,
            w.rows,
            T::one(),
            x.data.as_ptr(),
            x.cols as isize,
            1,
            w.data.as_ptr(),
            1,
            w.cols as isize,
            beta,
            out.as_mut_ptr(),
            w.rows as isize,
            1,
        );
    }
}

/// `out (n x k) += dy (n x m) * w (m x k)`.
pub fn gemm_add_dyw<T: Real>(dy: MatRef<T>, w: MatRef<T>, out: &mut [T]) {
    assert_eq!(dy.cols, w.rows);
    assert_eq!(out.len(), dy.rows * w.cols);
    if dy.rows == 0 || w.cols == 0 {
        return;
    }
    // SAFETY: extents checked above.
    unsafe {
        T::gemm_raw(
            dy.rows,
            dy.cols,
            w.cols,
            T::one(),
            dy.data.as_ptr(),
            dy.cols as isize,
            1,
            w.data.as_ptr(),
            w.cols as isize,
            1,
            T::one(),
            out.as_mut_ptr(),
            w.cols as isize,
            1,
        );
    }
}

/// `out (m x k) += dy^T (m x n) * x (n x k)`, the weight-gradient shape.
pub fn gemm_add_dytx<T: Real>(dy: MatRef<T>, x: MatRef<T>, out: &mut [T]) {
    assert_eq!(dy.rows, x.rows);
    assert_eq!(out.len(), dy.cols * x.cols);
    if dy.rows == 0 {
        return;
    }
    // SAFETY: extents checked above.
    unsafe {
        T::gemm_raw(
            dy.cols,
            dy.rows,
            x.cols,
            T::one(),
            dy.data.as_ptr(),
            1,
            dy.cols as isize,
            x.data.as_ptr(),
            x.cols as isize,
            1,
            T::one(),
            out.as_mut_ptr(),
            x.cols as isize,
            1,
        );
    }
}
