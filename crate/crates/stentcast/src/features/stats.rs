//! Seven-number summaries used by segmental and lesion aggregation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot summarize an empty sequence")]
    Empty,
    #[error("non-finite value {0} in sequence")]
    NonFinite(f64),
}

/// Order matters: expanded feature columns use these statistics in this
/// order with suffixes mean, median, sd, min, max, skew, kurt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatSummary {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// g1 = m3 / m2^(3/2) with population central moments; 0 when m2 = 0.
    pub skewness: f64,
    /// Non-excess kurtosis m4 / m2^2; 0 when m2 = 0.
    pub kurtosis: f64,
}

impl StatSummary {
    pub fn as_array(&self) -> [f64; 7] {
        [self.mean, self.median, self.sd, self.min, self.max, self.skewness, self.kurtosis]
    }
}

pub fn summarize(values: &[f64]) -> Result<StatSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(bad));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sd = if values.len() > 1 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) =
        if m2 == 0.0 { (0.0, 0.0) } else { (m3 / m2.powf(1.5), m4 / (m2 * m2)) };

    Ok(StatSummary {
        mean,
        median,
        sd,
        min: sorted[0],
        max: *sorted.last().expect("nonempty"),
        skewness,
        kurtosis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_sequence() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 3.0);
        assert_eq!(s.skewness, 0.0);
    }

    #[test]
    fn constant_sequence_zeroes_shape_moments() {
        let s = summarize(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.kurtosis, 0.0);
    }

    #[test]
    fn bernoulli_like_sequence() {
        // [0, 0, 0, 1]: m2 = 3/16, m3 = 3/32, skewness = 2/sqrt(3).
        let s = summarize(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.25);
        assert_eq!(s.median, 0.0);
        assert!((s.skewness - 2.0 / 3.0f64.sqrt()).abs() < 1e-15, "skew {}", s.skewness);
        assert!((s.skewness - 1.1547005383792515).abs() < 1e-12);
        assert!((s.kurtosis - 7.0 / 3.0).abs() < 1e-12, "kurt {}", s.kurtosis);
    }

    #[test]
    fn single_value_has_zero_sd() {
        let s = summarize(&[5.0]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.median, 5.0);
        assert_eq!(s.min, 5.0);
        assert_eq!(s.max, 5.0);
    }

    #[test]
    fn even_length_median_averages_middles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(summarize(&[]), Err(StatsError::Empty));
        assert!(matches!(summarize(&[1.0, f64::NAN]), Err(StatsError::NonFinite(_))));
        assert!(matches!(summarize(&[f64::INFINITY]), Err(StatsError::NonFinite(_))));
    }

    #[test]
    fn matches_direct_moment_oracle_on_random_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(414);
        for _ in 0..200 {
            let n = rng.gen_range(1..40);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let s = summarize(&values).unwrap();
            // Oracle: textbook formulas evaluated independently.
            let n_f = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n_f;
            let mk = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n_f;
            let (m2, m3, m4) = (mk(2), mk(3), mk(4));
            assert!((s.mean - mean).abs() < 1e-12);
            if m2 > 0.0 {
                assert!((s.skewness - m3 / m2.powf(1.5)).abs() < 1e-9, "skew");
                assert!((s.kurtosis - m4 / (m2 * m2)).abs() < 1e-9, "kurt");
            }
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (n_f - 1.0).max(1.0);
            assert!((s.sd - var.sqrt()).abs() < 1e-9);
        }
    }
}
