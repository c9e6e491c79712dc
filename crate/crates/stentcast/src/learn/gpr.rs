//! Gaussian process regression with a constant mean and an isotropic
//! squared-exponential kernel.
//!
//! ```text
//! k(a, b) = sf2 * exp(-||a - b||^2 / (2 l^2)),   K = k(X, X) + sn2 I
//! ```
//!
//! Hyperparameters (l, sf2, sn2) maximize the log marginal likelihood via
//! Nelder-Mead in log10 space, best of several seeded starts, clamped to
//! data-scaled bounds. Training sets beyond `max_points` rows are thinned by
//! a seeded subsample so the cubic Cholesky cost stays bounded.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

const BASE_JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub multi_starts: usize,
    pub max_nm_iters: usize,
    /// Training rows beyond this are subsampled (seeded) before fitting.
    pub max_points: usize,
    /// Pins the noise variance instead of optimizing it.
    pub noise_var_override: Option<f64>,
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig { multi_starts: 5, max_nm_iters: 60, max_points: 512, noise_var_override: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub y_mean: f64,
    pub x_train: Vec<Vec<f64>>,
    /// Dual weights K^-1 (y - mean).
    pub alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

impl GprModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let inv_two_l2 = 1.0 / (2.0 * self.length_scale * self.length_scale);
        let mut acc = 0.0;
        for (xi, a) in self.x_train.iter().zip(&self.alpha) {
            let d2: f64 = xi.iter().zip(row).map(|(u, v)| (u - v) * (u - v)).sum();
            acc += self.signal_var * (-d2 * inv_two_l2).exp() * a;
        }
        self.y_mean + acc
    }
}

/// Lower bounds and upper bounds in log10 space, per optimized parameter.
struct Box3 {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Box3 {
    fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect()
    }
}

/// Builds K from cached squared distances and factors it. The noise term
/// usually keeps K positive definite on its own; if the plain factorization
/// fails, jitter escalates tenfold from 1e-8 to 1e-4.
fn factor_kernel(
    sq_dists: &DMatrix<f64>,
    length_scale: f64,
    signal_var: f64,
    noise_var: f64,
) -> Result<Cholesky<f64, Dyn>, LearnError> {
    let inv_two_l2 = 1.0 / (2.0 * length_scale * length_scale);
    let base = sq_dists.map(|d2| signal_var * (-d2 * inv_two_l2).exp());
    let mut jitter = 0.0;
    loop {
        let mut k = base.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise_var + jitter;
        }
        if let Some(chol) = k.cholesky() {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 { BASE_JITTER } else { jitter * 10.0 };
        if jitter > MAX_JITTER {
            return Err(LearnError::NotPositiveDefinite);
        }
    }
}

fn log_marginal_likelihood(
    sq_dists: &DMatrix<f64>,
    yc: &DVector<f64>,
    length_scale: f64,
    signal_var: f64,
    noise_var: f64,
) -> f64 {
    let n = yc.len() as f64;
    let Ok(chol) = factor_kernel(sq_dists, length_scale, signal_var, noise_var) else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(yc);
    let log_det: f64 = (0..yc.len()).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * yc.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Nelder-Mead minimization with box projection; returns the best vertex.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    bounds: &Box3,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![bounds.clamp(start)];
    for d in 0..dim {
        let mut v = start.to_vec();
        v[d] += 0.25;
        simplex.push(bounds.clamp(&v));
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iters {
        // Ascending by objective value; last is worst.
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[dim] - values[0]).abs() < 1e-10 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|d| simplex[..dim].iter().map(|v| v[d]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let reflect =
            bounds.clamp(&(0..dim).map(|d| 2.0 * centroid[d] - worst[d]).collect::<Vec<f64>>());
        let fr = f(&reflect);
        if fr < values[0] {
            let expand = bounds
                .clamp(&(0..dim).map(|d| 3.0 * centroid[d] - 2.0 * worst[d]).collect::<Vec<f64>>());
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
        } else {
            let contract = bounds
                .clamp(&(0..dim).map(|d| 0.5 * (centroid[d] + worst[d])).collect::<Vec<f64>>());
            let fc = f(&contract);
            if fc < values[dim] {
                simplex[dim] = contract;
                values[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=dim {
                    simplex[i] = bounds.clamp(
                        &(0..dim)
                            .map(|d| 0.5 * (simplex[0][d] + simplex[i][d]))
                            .collect::<Vec<f64>>(),
                    );
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap()).unwrap();
    (simplex[best].clone(), values[best])
}

pub fn fit_gpr(
    rows: &[&[f64]],
    y: &[f64],
    cfg: &GprConfig,
    seed: u64,
) -> Result<GprModel, LearnError> {
    let n = rows.len();
    if n == 0 {
        return Err(LearnError::EmptyMatrix);
    }

    // Seeded thinning keeps the Cholesky cost bounded on large matrices.
    let keep: Vec<usize> = if n > cfg.max_points {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, cfg.max_points).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let x_train: Vec<Vec<f64>> = keep.iter().map(|&i| rows[i].to_vec()).collect();
    let y_kept: Vec<f64> = keep.iter().map(|&i| y[i]).collect();

    // Canonical row order makes the fit invariant to input row permutation:
    // kernel matrix, optimizer trajectory and dual weights are then bitwise
    // reproducible for the same training set.
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    order.sort_by(|&a, &b| {
        x_train[a]
            .iter()
            .zip(&x_train[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| y_kept[a].total_cmp(&y_kept[b]))
    });
    let x_train: Vec<Vec<f64>> = order.iter().map(|&i| x_train[i].clone()).collect();
    let y_kept: Vec<f64> = order.iter().map(|&i| y_kept[i]).collect();
    let m = x_train.len();

    let y_mean = y_kept.iter().sum::<f64>() / m as f64;
    let yc = DVector::from_fn(m, |i, _| y_kept[i] - y_mean);
    let y_var = yc.iter().map(|v| v * v).sum::<f64>() / m as f64;

    let sq_dists = DMatrix::from_fn(m, m, |i, j| {
        x_train[i].iter().zip(&x_train[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    });
    let mut dists: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| sq_dists[(i, j)].sqrt())
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_dist = if dists.is_empty() { 1.0 } else { dists[dists.len() / 2] };
    let median_dist = if median_dist > 0.0 { median_dist } else { 1.0 };
    let v = y_var.max(1e-12);

    // Search space in log10 units: length scale around the median pairwise
    // distance, signal variance around var(y), noise up to var(y).
    let l_lo = (median_dist * 1e-2).log10();
    let l_hi = (median_dist * 1e2).log10();
    let sf_lo = (v * 1e-4).log10();
    let sf_hi = (v * 1e4).log10();
    let sn_lo = (1e-8f64).log10();
    let sn_hi = v.max(1e-8).log10();

    let optimize_noise = cfg.noise_var_override.is_none();
    let bounds = if optimize_noise {
        Box3 { lo: vec![l_lo, sf_lo, sn_lo], hi: vec![l_hi, sf_hi, sn_hi] }
    } else {
        Box3 { lo: vec![l_lo, sf_lo], hi: vec![l_hi, sf_hi] }
    };
    let unpack = |theta: &[f64]| -> (f64, f64, f64) {
        let noise = cfg.noise_var_override.unwrap_or_else(|| 10f64.powf(theta[2]));
        (10f64.powf(theta[0]), 10f64.powf(theta[1]), noise)
    };
    let objective = |theta: &[f64]| -> f64 {
        let (l, sf2, sn2) = unpack(theta);
        -log_marginal_likelihood(&sq_dists, &yc, l, sf2, sn2)
    };

    // One heuristic start plus seeded uniform draws in the box; the winner is
    // the best final log marginal likelihood.
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.multi_starts.max(1));
    let heuristic = if optimize_noise {
        vec![median_dist.log10(), v.log10(), (0.1 * v).max(1e-8).log10()]
    } else {
        vec![median_dist.log10(), v.log10()]
    };
    starts.push(bounds.clamp(&heuristic));
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    use rand::Rng;
    while starts.len() < cfg.multi_starts.max(1) {
        let draw: Vec<f64> = bounds
            .lo
            .iter()
            .zip(&bounds.hi)
            .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
            .collect();
        starts.push(draw);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (theta, value) = nelder_mead(&objective, start, &bounds, cfg.max_nm_iters);
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((theta, value));
        }
    }
    let (theta, neg_lml) = best.expect("at least one start");
    if !neg_lml.is_finite() {
        return Err(LearnError::NotPositiveDefinite);
    }
    let (length_scale, signal_var, noise_var) = unpack(&theta);

    let chol = factor_kernel(&sq_dists, length_scale, signal_var, noise_var)?;
    let alpha = chol.solve(&yc);
    Ok(GprModel {
        length_scale,
        signal_var,
        noise_var,
        y_mean,
        x_train,
        alpha: alpha.iter().copied().collect(),
        log_marginal_likelihood: -neg_lml,
    })
}
