//! Column standardization used by all fitting front-ends.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Per-column affine transform to zero mean, unit variance. Columns with
/// (near) zero variance are passed through unscaled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    mean: DVector<f64>,
    std: DVector<f64>,
}

impl Standardizer {
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let d = data.ncols();
        let mut mean = DVector::zeros(d);
        let mut std = DVector::zeros(d);
        for j in 0..d {
            let col = data.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    /// A transform that leaves data untouched.
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: DVector::zeros(dim),
            std: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for j in 0..data.ncols() {
            let (m, s) = (self.mean[j], self.std[j]);
            for i in 0..data.nrows() {
                out[(i, j)] = (data[(i, j)] - m) / s;
            }
        }
        out
    }

    pub fn inverse_transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for j in 0..data.ncols() {
            let (m, s) = (self.mean[j], self.std[j]);
            for i in 0..data.nrows() {
                out[(i, j)] = data[(i, j)] * s + m;
            }
        }
        out
    }

    pub fn transform_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }

    pub fn inverse_transform_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| v * self.std[j] + self.mean[j])
            .collect()
    }

    pub fn scales(&self) -> &DVector<f64> {
        &self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        let s = Standardizer::fit(&data);
        let t = s.transform(&data);
        for j in 0..2 {
            assert!(t.column(j).sum().abs() < 1e-12);
        }
        let back = s.inverse_transform(&t);
        assert!((back - &data).abs().max() < 1e-12);
    }

    #[test]
    fn constant_column_passthrough() {
        let data = DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        let s = Standardizer::fit(&data);
        let t = s.transform(&data);
        assert!(t.abs().max() < 1e-12);
    }
}
