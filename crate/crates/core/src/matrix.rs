//! Dense row-major and CSR sparse matrices over f64.
//!
//! These two types carry every matrix in the crate: dense for head weights
//! and representation dumps, CSR for the large row-stochastic
//! context-probability matrices.

use crate::error::{Error, Result};

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "dense matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        let m = DenseMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(r, c, data)
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, col {}",
                pos / self.cols.max(1),
                pos % self.cols.max(1)
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self + c * other, elementwise.
    pub fn add_scaled(&self, other: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::InvalidInput("shape mismatch in add_scaled".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// C = A * B. Loop order i-k-j so the inner loop streams both rows.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// C = A * B^T.
    pub fn matmul_bt(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (a, b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    /// C = A^T * B.
    pub fn matmul_at(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "matmul_at shape mismatch");
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = DenseMatrix::zeros(m, n);
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

/// Compressed sparse row matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Length rows + 1, non-decreasing.
    pub row_offsets: Vec<usize>,
    /// Column indices, strictly increasing within each row.
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidInput("bad row offsets".into()));
        }
        if row_offsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("row offsets not non-decreasing".into()));
        }
        let nnz = *row_offsets.last().unwrap();
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::InvalidInput("nnz mismatch".into()));
        }
        for r in 0..rows {
            let idx = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if idx.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
            if idx.last().is_some_and(|&c| c >= cols) {
                return Err(Error::InvalidInput(format!(
                    "column index out of bounds in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sparse value".into()));
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from per-row (col, value) pairs; pairs must be sorted by column.
    pub fn from_row_entries(rows: usize, cols: usize, entries: &[Vec<(usize, f64)>]) -> Result<Self> {
        if entries.len() != rows {
            return Err(Error::InvalidInput("row count mismatch".into()));
        }
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in entries {
            for &(c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self::new(rows, cols, row_offsets, col_indices, values)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.values[self.row_offsets[r]..self.row_offsets[r + 1]]
            .iter()
            .sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                out.data[r * self.cols + self.col_indices[k]] = self.values[k];
            }
        }
        out
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.rows);
        for i in 0..m.rows {
            let row: Vec<(usize, f64)> = m
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
            entries.push(row);
        }
        Self::from_row_entries(m.rows, m.cols, &entries).expect("dense source is well-formed")
    }

    /// C = A * B where A is sparse (rows x cols) and B is dense (cols x k).
    pub fn mul_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, b.rows, "sparse mul shape mismatch");
        let k = b.cols;
        let mut out = DenseMatrix::zeros(self.rows, k);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * k..(r + 1) * k];
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[idx];
                let v = self.values[idx];
                let b_row = &b.data[c * k..(c + 1) * k];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += v * bv;
                }
            }
        }
        out
    }

    /// C = A^T * B where A is sparse (rows x cols) and B is dense (rows x k).
    pub fn t_mul_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, b.rows, "sparse t_mul shape mismatch");
        let k = b.cols;
        let mut out = DenseMatrix::zeros(self.cols, k);
        for r in 0..self.rows {
            let b_row = &b.data[r * k..(r + 1) * k];
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[idx];
                let v = self.values[idx];
                let out_row = &mut out.data[c * k..(c + 1) * k];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += v * bv;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_rejects_bad_length() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn dense_rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn frobenius_345() {
        let m = DenseMatrix::diag(&[3.0, 4.0]);
        assert!((m.frobenius_norm() - 5.0).abs() < 1e-12);
        assert_eq!(DenseMatrix::zeros(3, 3).frobenius_norm(), 0.0);
        let ones = DenseMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        assert!((ones.frobenius_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0], vec![11.0, 12.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
        let c2 = a.matmul_bt(&b.transpose());
        assert_eq!(c.data, c2.data);
        let c3 = a.transpose().matmul_at(&b);
        assert_eq!(c.data, c3.data);
    }

    #[test]
    fn sparse_roundtrip_and_mul() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0]])
            .unwrap();
        let s = SparseMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), d);
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = s.mul_dense(&x);
        assert_eq!(y.data, vec![7.0, 0.0, 6.0]);
        let yt = s.t_mul_dense(&DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap());
        assert_eq!(yt.data, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn sparse_rejects_unsorted_columns() {
        let r = SparseMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(r.is_err());
    }
}
