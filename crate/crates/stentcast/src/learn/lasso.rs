//! LASSO by cyclic coordinate descent with a warm-started lambda path.
//!
//! The objective on the standardized design is
//!
//! ```text
//! (1/2n) * ||y - X b||^2 + lambda * ||b||_1
//! ```
//!
//! whose coordinate update is the soft threshold
//! `b_j <- S((1/n) x_j' (r + x_j b_j), lambda)`. Columns are standardized to
//! zero mean and unit population SD internally and coefficients are mapped
//! back to the original scale on output, so normalized and exempt columns are
//! treated uniformly. The reported lambda is chosen by row-level k-fold cross
//! validation within the given rows, ties resolved toward the larger lambda.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::matrix::FeatureMatrix;

const DESCENT_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 10_000;
const CV_FOLDS: usize = 5;
/// Default path: lambda_max down four decades, log-spaced.
const DEFAULT_GRID_POINTS: usize = 50;
const DEFAULT_GRID_DECADES: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub active: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub lambda: f64,
    /// Per-column coefficients on the original (un-standardized) scale.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Columns with nonzero coefficients at the selected lambda.
    pub active_set: Vec<String>,
    pub path: Vec<PathPoint>,
    pub column_names: Vec<String>,
    /// Mean CV MSE per grid lambda, in grid order.
    pub cv_mse: Vec<f64>,
}

impl LassoModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum::<f64>()
    }
}

/// Column-standardized view of a row subset.
struct StdDesign {
    n: usize,
    p: usize,
    /// Standardized columns; empty when the source column is constant.
    cols: Vec<Vec<f64>>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn standardize(x: &FeatureMatrix, rows: &[usize]) -> StdDesign {
    let n = rows.len();
    let p = x.n_cols();
    let y_mean = rows.iter().map(|&i| x.target[i]).sum::<f64>() / n as f64;
    let yc: Vec<f64> = rows.iter().map(|&i| x.target[i] - y_mean).collect();

    let mut cols = Vec::with_capacity(p);
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let raw: Vec<f64> = rows.iter().map(|&i| x.row(i)[j]).collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        mean[j] = m;
        sd[j] = s;
        if s > 0.0 {
            cols.push(raw.iter().map(|v| (v - m) / s).collect());
        } else {
            cols.push(Vec::new());
        }
    }
    StdDesign { n, p, cols, mean, sd, y_mean, yc }
}

impl StdDesign {
    /// Runs the warm-started path over the decreasing grid; returns one
    /// standardized coefficient vector per lambda.
    fn path(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        let mut beta = vec![0.0; self.p];
        let mut residual = self.yc.clone();
        let mut out = Vec::with_capacity(grid.len());
        for &lambda in grid {
            for _ in 0..MAX_SWEEPS {
                let mut max_delta = 0.0f64;
                for j in 0..self.p {
                    if self.cols[j].is_empty() {
                        continue;
                    }
                    let col = &self.cols[j];
                    let rho = col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>() / n
                        + beta[j];
                    let new = soft_threshold(rho, lambda);
                    let delta = new - beta[j];
                    if delta != 0.0 {
                        for (r, x) in residual.iter_mut().zip(col) {
                            *r -= delta * x;
                        }
                        beta[j] = new;
                    }
                    max_delta = max_delta.max(delta.abs());
                }
                if max_delta < DESCENT_TOL {
                    break;
                }
            }
            out.push(beta.clone());
        }
        out
    }

    fn predict(&self, beta: &[f64], row: &[f64]) -> f64 {
        let mut acc = self.y_mean;
        for j in 0..self.p {
            if self.sd[j] > 0.0 && beta[j] != 0.0 {
                acc += beta[j] * (row[j] - self.mean[j]) / self.sd[j];
            }
        }
        acc
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Smallest lambda that zeroes every coefficient: max |X'y| / n on the
/// standardized design.
pub fn lambda_max(x: &FeatureMatrix) -> f64 {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let d = standardize(x, &rows);
    let n = d.n as f64;
    (0..d.p)
        .filter(|&j| !d.cols[j].is_empty())
        .map(|j| (d.cols[j].iter().zip(&d.yc).map(|(x, r)| x * r).sum::<f64>() / n).abs())
        .fold(0.0f64, f64::max)
}

/// Log-spaced grid from lambda_max down four decades.
pub fn default_lambda_grid(x: &FeatureMatrix) -> Vec<f64> {
    let top = lambda_max(x);
    if top <= 0.0 {
        return vec![0.0];
    }
    (0..DEFAULT_GRID_POINTS)
        .map(|i| {
            let frac = i as f64 / (DEFAULT_GRID_POINTS - 1) as f64;
            top * 10f64.powf(-DEFAULT_GRID_DECADES * frac)
        })
        .collect()
}

pub fn fit_lasso(
    x: &FeatureMatrix,
    lambda_grid: &[f64],
    seed: u64,
) -> Result<LassoModel, LearnError> {
    if lambda_grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    if lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(LearnError::NonFinite("lambda grid".into()));
    }
    if lambda_grid.windows(2).any(|w| w[0] < w[1]) {
        return Err(LearnError::GridNotDecreasing);
    }
    let n = x.n_rows();
    if n < 2 {
        return Err(LearnError::TooFewRows { needed: 2, got: n });
    }
    if x.values.iter().chain(x.target.iter()).any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("feature matrix".into()));
    }

    // Row-level k-fold CV over the grid, ties toward the larger lambda.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let k = CV_FOLDS.min(n);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    let mut sq_err = vec![0.0f64; lambda_grid.len()];
    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let design = standardize(x, &train);
        let betas = design.path(lambda_grid);
        for (li, beta) in betas.iter().enumerate() {
            for &row in &test {
                let err = design.predict(beta, x.row(row)) - x.target[row];
                sq_err[li] += err * err;
            }
        }
    }
    let cv_mse: Vec<f64> = sq_err.iter().map(|s| s / n as f64).collect();
    let mut best = 0;
    for (i, &mse) in cv_mse.iter().enumerate() {
        if mse < cv_mse[best] {
            best = i;
        }
    }

    // Final path on every row; the model reports that path and the
    // coefficients at the CV-selected lambda, mapped back to raw scale.
    let all_rows: Vec<usize> = (0..n).collect();
    let design = standardize(x, &all_rows);
    let betas = design.path(lambda_grid);
    let path = lambda_grid
        .iter()
        .zip(&betas)
        .map(|(&lambda, beta)| PathPoint {
            lambda,
            active: (0..design.p)
                .filter(|&j| beta[j] != 0.0)
                .map(|j| x.columns[j].clone())
                .collect(),
        })
        .collect();

    let chosen = &betas[best];
    let mut coefficients = vec![0.0; design.p];
    let mut intercept = design.y_mean;
    for j in 0..design.p {
        if design.sd[j] > 0.0 && chosen[j] != 0.0 {
            coefficients[j] = chosen[j] / design.sd[j];
            intercept -= coefficients[j] * design.mean[j];
        }
    }
    let active_set = (0..design.p)
        .filter(|&j| coefficients[j] != 0.0)
        .map(|j| x.columns[j].clone())
        .collect();

    Ok(LassoModel {
        lambda: lambda_grid[best],
        coefficients,
        intercept,
        active_set,
        path,
        column_names: x.columns.clone(),
        cv_mse,
    })
}

/// Columns ordered by importance: first entry into the active set along the
/// decreasing-lambda path, ties by |coefficient| at the selected lambda.
/// Columns that never enter are omitted.
pub fn rank_features(model: &LassoModel) -> Vec<String> {
    let mut first_entry: Vec<Option<usize>> = vec![None; model.column_names.len()];
    let index_of: std::collections::HashMap<&str, usize> = model
        .column_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    for (step, point) in model.path.iter().enumerate() {
        for name in &point.active {
            let j = index_of[name.as_str()];
            first_entry[j].get_or_insert(step);
        }
    }
    let mut entered: Vec<usize> = (0..model.column_names.len())
        .filter(|&j| first_entry[j].is_some())
        .collect();
    entered.sort_by(|&a, &b| {
        first_entry[a]
            .cmp(&first_entry[b])
            .then_with(|| {
                model.coefficients[b]
                    .abs()
                    .partial_cmp(&model.coefficients[a].abs())
                    .unwrap()
            })
            .then(a.cmp(&b))
    });
    entered.into_iter().map(|j| model.column_names[j].clone()).collect()
}
