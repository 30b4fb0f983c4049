//! Dense row-major `f64` matrices for the plaintext reference model.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::ring::{FixedConfig, FixedTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(alloc::format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// A `1 x n` row vector.
    pub fn row_vector(v: &[f64]) -> Self {
        Self { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_matrix(&self, i: usize) -> Matrix {
        Self::row_vector(self.row(i))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(alloc::format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, r: &Self) -> Result<Self> {
        if r.rows != 1 || r.cols != self.cols {
            return Err(shape_err(alloc::format!("row {:?} for matrix {:?}", r.shape(), self.shape())));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + r.data[j]))
    }

    /// Multiplies column `j` by `s[j]`.
    pub fn scale_cols(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.cols {
            return Err(shape_err("column scale length"));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * s[j]))
    }

    /// Multiplies row `i` by `s[i]`.
    pub fn scale_rows(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.rows {
            return Err(shape_err("row scale length"));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * s[i]))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(shape_err(alloc::format!("matmul {:?} x {:?}", self.shape(), other.shape())));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let o = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (dst, &b) in o.iter_mut().zip(other.row(k)) {
                    *dst += a * b;
                }
            }
        }
        Ok(Self { rows: self.rows, cols: other.cols, data: out })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<Self> {
        if rows.0 > rows.1 || rows.1 > self.rows || cols.0 > cols.1 || cols.1 > self.cols {
            return Err(shape_err(alloc::format!("block {rows:?} {cols:?} of {:?}", self.shape())));
        }
        Ok(Self::from_fn(rows.1 - rows.0, cols.1 - cols.0, |i, j| self.get(rows.0 + i, cols.0 + j)))
    }

    pub fn row_block(&self, start: usize, end: usize) -> Result<Self> {
        self.block((start, end), (0, self.cols))
    }

    pub fn col_block(&self, start: usize, end: usize) -> Result<Self> {
        self.block((0, self.rows), (start, end))
    }

    pub fn vstack(parts: &[&Self]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(shape_err("vstack column mismatch"));
        }
        let data: Vec<f64> = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self { rows: data.len() / cols.max(1), cols, data })
    }

    pub fn hstack(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(shape_err("hstack row mismatch"));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn push_row(&mut self, r: &[f64]) -> Result<()> {
        if r.len() != self.cols {
            return Err(shape_err("row length"));
        }
        self.data.extend_from_slice(r);
        self.rows += 1;
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_fixed(&self, cfg: FixedConfig) -> Result<FixedTensor> {
        FixedTensor::from_f64(&[self.rows, self.cols], &self.data, cfg)
    }

    pub fn from_fixed(t: &FixedTensor) -> Result<Self> {
        let (r, c) = t.dims2()?;
        Self::new(r, c, t.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Matrix::new(3, 1, vec![1., 0., -1.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[-2.0, -2.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn stacking_and_blocks() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let top = a.row_block(0, 1).unwrap();
        let rest = a.row_block(1, 3).unwrap();
        assert_eq!(Matrix::vstack(&[&top, &rest]).unwrap(), a);
        let l = a.col_block(0, 2).unwrap();
        let r = a.col_block(2, 4).unwrap();
        assert_eq!(Matrix::hstack(&[&l, &r]).unwrap(), a);
        assert_eq!(a.transpose().transpose(), a);
    }
}
