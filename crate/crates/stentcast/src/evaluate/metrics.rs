//! Regression and classification metrics.
//!
//! The ROC sweeps thresholds over unique scores in descending order, so tied
//! scores move as one block and the trapezoid area equals the Mann-Whitney
//! statistic with half credit for ties.

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse_mm2: f64,
    pub pearson_r: f64,
    /// False when the actuals (or predictions) have zero variance and r is
    /// reported as 0 by convention.
    pub r_defined: bool,
    pub bias_mm2: f64,
    pub residual_sd_mm2: f64,
}

pub fn regression_metrics(actual: &[f64], predicted: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    let n = actual.len();
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("metric input"));
    }
    let nf = n as f64;
    let residuals: Vec<f64> = predicted.iter().zip(actual).map(|(p, a)| p - a).collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / nf).sqrt();
    let bias = residuals.iter().sum::<f64>() / nf;
    let residual_sd = if n >= 2 {
        (residuals.iter().map(|r| (r - bias) * (r - bias)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };

    let mean_a = actual.iter().sum::<f64>() / nf;
    let mean_p = predicted.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_p = 0.0;
    for (a, p) in actual.iter().zip(predicted) {
        cov += (a - mean_a) * (p - mean_p);
        var_a += (a - mean_a) * (a - mean_a);
        var_p += (p - mean_p) * (p - mean_p);
    }
    let (pearson_r, r_defined) = if var_a > 0.0 && var_p > 0.0 {
        ((cov / (var_a.sqrt() * var_p.sqrt())).clamp(-1.0, 1.0), true)
    } else {
        (0.0, false)
    };
    Ok(RegressionMetrics { rmse_mm2: rmse, pearson_r, r_defined, bias_mm2: bias, residual_sd_mm2: residual_sd })
}

/// ROC points (fpr, tpr) from (0,0) to (1,1), thresholds swept over unique
/// scores descending; `labels[i]` marks a positive.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("ROC score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass { positives: n_pos, negatives: n_neg });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // One step per unique score value; ties advance together.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

/// Trapezoid area under the ROC.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let points = roc_points(scores, labels)?;
    let mut auc = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(auc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// None when the actual labels are single-class.
    pub auc: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
}

/// Labels both sides with the strict `msei < threshold` rule and ranks by
/// negated predicted mSEI, so a lower prediction scores as more
/// under-expanded.
pub fn classification_metrics(
    actual_msei: &[f64],
    predicted_msei: &[f64],
    threshold: f64,
) -> Result<ClassificationMetrics, EvalError> {
    if actual_msei.len() != predicted_msei.len() {
        return Err(EvalError::LengthMismatch {
            left: actual_msei.len(),
            right: predicted_msei.len(),
        });
    }
    if actual_msei.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &p) in actual_msei.iter().zip(predicted_msei) {
        match (a < threshold, p < threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let total = (tp + fp + tn + fn_) as f64;
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let scores: Vec<f64> = predicted_msei.iter().map(|&p| -p).collect();
    let labels: Vec<bool> = actual_msei.iter().map(|&a| a < threshold).collect();
    let (auc, points) = match roc_points(&scores, &labels) {
        Ok(points) => {
            let auc = roc_auc(&scores, &labels)?;
            (Some(auc), points)
        }
        Err(EvalError::SingleClass { .. }) => (None, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(ClassificationMetrics {
        threshold,
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp + tn) as f64 / total,
        sensitivity: rate(tp, tp + fn_),
        specificity: rate(tn, tn + fp),
        auc,
        roc_points: points,
    })
}
