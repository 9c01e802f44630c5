//! Dense row-major matrix over f64 plus the handful of kernels the network
//! engine needs: matrix-vector products, their transposes, rank-1 updates,
//! and a small-system linear solver.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects shape/data mismatches and
    /// non-finite entries.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                context: "Matrix::from_data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("matrix contains non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out += self^T * d`, the pullback of `matvec`.
    pub fn t_matvec_acc(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &dr) in d.iter().enumerate() {
            if dr != 0.0 {
                axpy(dr, self.row(r), out);
            }
        }
    }

    /// `self += d ⊗ x` (outer product), the weight gradient of an affine layer.
    pub fn outer_acc(&mut self, d: &[f64], x: &[f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &dr) in d.iter().enumerate() {
            if dr != 0.0 {
                axpy(dr, x, self.row_mut(r));
            }
        }
    }

    /// `self * other`, used only by small control-synthesis code paths.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.get(r, k);
                if v != 0.0 {
                    axpy(v, other.row(k), out.row_mut(r));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Solves `self * X = rhs` by Gaussian elimination with partial pivoting.
    /// Intended for the small (m x m) systems in regulator synthesis.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(rhs.rows, self.rows, "solve rhs row mismatch");
        let n = self.rows;
        let k = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(Error::InvalidSpec("singular matrix in solve".into()));
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                for c in 0..k {
                    b.swap(col * k + c, piv * k + c);
                }
            }
            let d = a[col * n + col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                for c in 0..k {
                    b[r * k + c] -= f * b[col * k + c];
                }
            }
        }
        for r in 0..n {
            let d = a[r * n + r];
            for c in 0..k {
                b[r * k + c] /= d;
            }
        }
        Matrix::from_data(n, k, b)
    }
}

/// Dot product with four-way accumulators; the hot loop of every forward and
/// backward pass.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// `out += c * x`.
pub fn axpy(c: f64, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_data_validates_shape_and_finiteness() {
        assert!(Matrix::from_data(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_data(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Matrix::from_data(2, 2, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn matvec_matches_naive_triple_loop() {
        let m = Matrix::from_data(3, 2, vec![1.0, 2.0, -0.5, 4.0, 0.25, -3.0]).unwrap();
        let x = [2.0, -1.0];
        let mut out = [0.0; 3];
        m.matvec(&x, &mut out);
        for r in 0..3 {
            let mut expect = 0.0;
            for c in 0..2 {
                expect += m.get(r, c) * x[c];
            }
            assert!((out[r] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Matrix::from_data(2, 2, vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        let x = Matrix::from_data(2, 1, vec![0.5, -2.0]).unwrap();
        let rhs = a.matmul(&x);
        let sol = a.solve(&rhs).unwrap();
        for i in 0..2 {
            assert!((sol.get(i, 0) - x.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_data(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let rhs = Matrix::zeros(2, 1);
        assert!(a.solve(&rhs).is_err());
    }
}
