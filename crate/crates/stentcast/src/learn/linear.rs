//! Ridge-stabilized linear least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LearnError;

/// Tiny ridge added to the normal equations purely for conditioning.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

/// Solves centered normal equations so the intercept stays unpenalized.
pub fn fit_linear(rows: &[&[f64]], y: &[f64]) -> Result<LinearModel, LearnError> {
    let n = rows.len();
    if n == 0 {
        return Err(LearnError::EmptyMatrix);
    }
    let p = rows[0].len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut x_mean = vec![0.0; p];
    for row in rows {
        for (m, v) in x_mean.iter_mut().zip(*row) {
            *m += v;
        }
    }
    for m in &mut x_mean {
        *m /= n as f64;
    }

    let xc = DMatrix::from_fn(n, p, |i, j| rows[i][j] - x_mean[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += RIDGE;
    }
    let rhs = xc.transpose() * yc;
    let chol = gram.cholesky().ok_or(LearnError::SingularDesign)?;
    let beta = chol.solve(&rhs);

    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { weights: beta.iter().copied().collect(), intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_noiseless_line() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = xs.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_linear(&rows, &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8, "weight {}", m.weights[0]);
        assert!((m.intercept - 1.0).abs() < 1e-8, "intercept {}", m.intercept);
    }

    #[test]
    fn two_features_exact_plane() {
        let xs: Vec<Vec<f64>> =
            (0..30).map(|i| vec![(i % 5) as f64, (i / 5) as f64 * 1.5]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = xs.iter().map(|r| -1.0 * r[0] + 3.0 * r[1] + 0.25).collect();
        let m = fit_linear(&rows, &y).unwrap();
        assert!((m.weights[0] + 1.0).abs() < 1e-7);
        assert!((m.weights[1] - 3.0).abs() < 1e-7);
        assert!((m.intercept - 0.25).abs() < 1e-7);
    }

    #[test]
    fn constant_column_survives_via_ridge() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 7.0]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = xs.iter().map(|r| r[0] * 0.5).collect();
        let m = fit_linear(&rows, &y).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-6);
        // The constant column carries no signal after centering.
        assert!(m.weights[1].abs() < 1e-6);
    }
}
