use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::norm::{vector_pnorm, vector_pnorm_pow, PNorm};
use crate::error::{Error, Result};

/// Dense row-major matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixF {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixF {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            let (row, col) = if cols == 0 { (0, 0) } else { (k / cols, k % cols) };
            return Err(Error::NonFinite { row, col });
        }
        Ok(MatrixF { rows, cols, data })
    }

    /// Builds from already-validated data. Callers guarantee finiteness.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        MatrixF { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatrixF::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = MatrixF::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        MatrixF::new(n, n, data)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        MatrixF::new(rows.len(), cols, data)
    }

    /// Empty matrix with a fixed column count.
    pub fn empty(cols: usize) -> Self {
        MatrixF::from_raw(0, cols, Vec::new())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> MatrixF {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        MatrixF::from_raw(self.cols, self.rows, out)
    }

    pub fn matmul(&self, other: &MatrixF) -> Result<MatrixF> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[t * m..(t + 1) * m];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(MatrixF::from_raw(n, m, out))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, x)).collect())
    }

    pub fn scale(&self, s: f64) -> MatrixF {
        MatrixF::from_raw(self.rows, self.cols, self.data.iter().map(|x| x * s).collect())
    }

    pub fn sub(&self, other: &MatrixF) -> Result<MatrixF> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} minus {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(MatrixF::from_raw(self.rows, self.cols, data))
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> MatrixF {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        MatrixF::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> MatrixF {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in self.row_iter() {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        MatrixF::from_raw(self.rows, idx.len(), data)
    }

    /// `[self; other]`.
    pub fn vstack(&self, other: &MatrixF) -> Result<MatrixF> {
        if self.cols != other.cols && !self.is_empty() && !other.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "stacking {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let cols = if self.is_empty() { other.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(MatrixF::from_raw(self.rows + other.rows, cols, data))
    }

    /// `[self, col]`.
    pub fn append_column(&self, col: &[f64]) -> Result<MatrixF> {
        if col.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} for {} rows",
                col.len(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (r, c) in self.row_iter().zip(col) {
            data.extend_from_slice(r);
            data.push(*c);
        }
        MatrixF::new(self.rows, self.cols + 1, data)
    }

    pub fn frobenius(&self) -> f64 {
        vector_pnorm(&self.data, PNorm::two())
    }

    pub fn max_abs(&self) -> f64 {
        vector_pnorm(&self.data, PNorm::Inf)
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_na(m: &DMatrix<f64>) -> MatrixF {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        MatrixF::from_raw(r, c, data)
    }
}

impl fmt::Debug for MatrixF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MatrixF {}x{} [", self.rows, self.cols)?;
        for r in self.row_iter().take(12) {
            writeln!(f, "  {r:?}")?;
        }
        if self.rows > 12 {
            writeln!(f, "  ... {} more rows", self.rows - 12)?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entrywise p-norm `(sum_ij |M_ij|^p)^(1/p)`; `max |M_ij|` for `p = inf`.
pub fn entrywise_pnorm(m: &MatrixF, p: PNorm) -> f64 {
    vector_pnorm(m.data(), p)
}

/// `sum_ij |M_ij|^p`.
pub fn entrywise_pnorm_pow(m: &MatrixF, p: PNorm) -> f64 {
    vector_pnorm_pow(m.data(), p)
}
