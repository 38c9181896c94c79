use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix of f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Uniform(-scale, scale) initialization.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// y = self * x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matvec: matrix has {} cols, vector has length {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// y = self^T * x
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::shape(format!(
                "matvec_t: matrix has {} rows, vector has length {}",
                self.rows,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (out, w) in y.iter_mut().zip(row) {
                *out += w * xr;
            }
        }
        Ok(y)
    }
}

/// Gradients produced by the affine backward pass.
pub struct AffineGrads {
    pub dw: Matrix,
    pub dx: Vec<f64>,
    pub db: Vec<f64>,
}

/// y = W x + b
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.rows {
        return Err(Error::shape(format!(
            "affine: bias length {} does not match {} rows",
            b.len(),
            w.rows
        )));
    }
    let mut y = w.matvec(x)?;
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    Ok(y)
}

/// Backward pass for y = W x + b given upstream dy.
pub fn affine_backward(w: &Matrix, x: &[f64], dy: &[f64]) -> Result<AffineGrads> {
    if dy.len() != w.rows || x.len() != w.cols {
        return Err(Error::shape(format!(
            "affine_backward: W is {}x{}, x has {}, dy has {}",
            w.rows,
            w.cols,
            x.len(),
            dy.len()
        )));
    }
    let mut dw = Matrix::zeros(w.rows, w.cols);
    for r in 0..w.rows {
        let g = dy[r];
        let row = &mut dw.data[r * w.cols..(r + 1) * w.cols];
        for (d, xi) in row.iter_mut().zip(x) {
            *d = g * xi;
        }
    }
    let dx = w.matvec_t(dy)?;
    Ok(AffineGrads {
        dw,
        dx,
        db: dy.to_vec(),
    })
}
