//! Plain row-major multidimensional arrays of f64.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(CoreError::shape(format!(
                "shape {shape:?} expects {count} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let count: usize = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; count],
        }
    }

    /// 2-D matrix helper.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn row_vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            shape: vec![1, n],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of rows when interpreted as 2-D (first axis).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of columns when interpreted as 2-D (product of trailing axes).
    pub fn cols(&self) -> usize {
        if self.shape.len() <= 1 {
            if self.shape.is_empty() {
                0
            } else {
                1
            }
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[i * c..(i + 1) * c]
    }

    /// Extract row `i` as a 1-row tensor.
    pub fn row_tensor(&self, i: usize) -> Tensor {
        Tensor::row_vector(self.row(i).to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite(format!("{context}: tensor contains NaN/Inf")))
        }
    }

    /// C = self (m x k) * other (k x n), both row-major 2-D.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(CoreError::shape(format!(
                "matmul: {m}x{k} * {k2}x{n} inner dimensions differ"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = self.row(i);
            let o = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(p);
                for (o_v, &b) in o.iter_mut().zip(b_row) {
                    *o_v += a * b;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_in_place(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::shape(format!(
                "add: shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Concatenate two feature matrices column-wise; rows must match.
pub fn hstack(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(CoreError::shape(format!(
            "hstack: row counts {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    let (ca, cb) = (a.cols(), b.cols());
    let mut values = Vec::with_capacity(a.rows() * (ca + cb));
    for i in 0..a.rows() {
        values.extend_from_slice(a.row(i));
        values.extend_from_slice(b.row(i));
    }
    Tensor::matrix(a.rows(), ca + cb, values)
}
