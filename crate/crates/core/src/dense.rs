//! Dense node-embedding matrices and per-edge value lists.

use rand::Rng;

use crate::error::{Error, Result};

/// Row-major `N x D` f32 matrix. Used for node embeddings, kernel outputs
/// and layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

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

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Uniform random entries in `[-1, 1)`.
    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Self { rows, cols, data }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0` and comparing NaN
    /// payloads.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Plain f32 product `self * rhs` with ascending-k accumulation.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.cols {
                let mut acc = 0.0f32;
                for (k, &av) in a.iter().enumerate() {
                    acc += av * rhs.data[k * rhs.cols + j];
                }
                out.data[i * rhs.cols + j] = acc;
            }
        }
        Ok(out)
    }
}

/// One f32 per edge, index-aligned with the graph's edge list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeValList {
    pub values: Vec<f32>,
}

impl EdgeValList {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f32>> for EdgeValList {
    fn from(values: Vec<f32>) -> Self {
        Self { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_shape() {
        assert!(EmbeddingMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn matmul_small() {
        let a = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = EmbeddingMatrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().to_rows(), vec![vec![19.0, 22.0], vec![43.0, 50.0]]);
        assert!(a.matmul(&EmbeddingMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn bitwise_eq_sees_signed_zero() {
        let a = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap();
        let b = EmbeddingMatrix::new(1, 1, vec![-0.0]).unwrap();
        assert_eq!(a, b);
        assert!(!a.bitwise_eq(&b));
    }
}
