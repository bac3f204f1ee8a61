//! Dense row-major matrices and small vector helpers.
//!
//! Everything is `f64` and eagerly shape-checked. Shape mismatches are
//! programmer errors, so they panic; data-dependent failures (non-finite
//! entries from a file, say) are handled by the callers that own the data.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix. `rows` and `cols` must be nonzero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be nonzero");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from row slices. Panics if `rows` is empty or ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        assert!(cols > 0, "matrix needs at least one column");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            assert!(row.len() == cols, "row {i} has {} entries, expected {cols}", row.len());
            data.extend_from_slice(row);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    /// Builds from a flat row-major buffer. Panics if `data.len() != rows * cols`.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be nonzero");
        assert!(
            data.len() == rows * cols,
            "flat buffer has {} entries, expected {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row {r} out of bounds");
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x` for a column vector `x`. Panics if `x.len() != cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert!(x.len() == self.cols, "matvec: vector has {} entries, expected {}", x.len(), self.cols);
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(dot(self.row(r), x));
        }
        out
    }

    /// `selfᵀ * y`. Panics if `y.len() != rows`.
    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert!(y.len() == self.rows, "matvec_transpose: vector has {} entries, expected {}", y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            if yr != 0.0 {
                add_scaled(&mut out, self.row(r), yr);
            }
        }
        out
    }

    /// `self += scale * y ⊗ x` (outer product of column `y` and row `x`).
    pub fn add_outer(&mut self, y: &[f64], x: &[f64], scale: f64) {
        assert!(y.len() == self.rows && x.len() == self.cols, "add_outer shape mismatch");
        for r in 0..self.rows {
            let s = scale * y[r];
            if s != 0.0 {
                let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
                add_scaled(row, x, s);
            }
        }
    }

    /// `self += scale * other`.
    pub fn scaled_add(&mut self, other: &Matrix, scale: f64) {
        assert!(self.rows == other.rows && self.cols == other.cols, "scaled_add shape mismatch");
        add_scaled(&mut self.data, &other.data, scale);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Dot product. Panics on length mismatch.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert!(a.len() == b.len(), "dot: lengths {} and {} differ", a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// `acc += scale * v`. Panics on length mismatch.
#[inline]
pub fn add_scaled(acc: &mut [f64], v: &[f64], scale: f64) {
    assert!(acc.len() == v.len(), "add_scaled: lengths {} and {} differ", acc.len(), v.len());
    for i in 0..acc.len() {
        acc[i] += scale * v[i];
    }
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Index of the largest entry, ties broken toward the lowest index.
/// Panics on an empty slice.
pub fn argmax(v: &[f64]) -> usize {
    assert!(!v.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}
