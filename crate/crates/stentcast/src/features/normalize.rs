//! Train-fitted min-max normalization.
//!
//! Training-column minima map to 0 and maxima to 1; unseen values clamp to
//! [-0.5, 1.5]. Area and volume columns pass through untouched, and a
//! constant column normalizes to 0 with a recorded warning.

use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use super::schema::is_exempt;
use super::FeatureError;

pub const CLAMP_LO: f64 = -0.5;
pub const CLAMP_HI: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub exempt: bool,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub scales: Vec<ColumnScale>,
    pub warnings: Vec<String>,
}

pub fn fit_normalizer(m: &FeatureMatrix) -> Result<NormalizationParams, FeatureError> {
    if m.n_rows() == 0 {
        return Err(FeatureError::EmptyMatrix);
    }
    let mut scales = Vec::with_capacity(m.n_cols());
    let mut warnings = Vec::new();
    for (j, name) in m.columns.iter().enumerate() {
        let exempt = is_exempt(name);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..m.n_rows() {
            let v = m.row(i)[j];
            min = min.min(v);
            max = max.max(v);
        }
        if !exempt && min == max {
            warnings.push(format!("column {name} is constant ({min}); normalizing to 0"));
        }
        scales.push(ColumnScale { name: name.clone(), exempt, min, max });
    }
    Ok(NormalizationParams { scales, warnings })
}

pub fn apply_normalizer(
    m: &FeatureMatrix,
    params: &NormalizationParams,
) -> Result<FeatureMatrix, FeatureError> {
    if m.n_cols() != params.scales.len()
        || m.columns.iter().zip(&params.scales).any(|(c, s)| *c != s.name)
    {
        return Err(FeatureError::ColumnMismatch {
            expected: params.scales.iter().map(|s| s.name.clone()).collect(),
            found: m.columns.clone(),
        });
    }
    let mut out = m.clone();
    let c = m.n_cols();
    for (j, scale) in params.scales.iter().enumerate() {
        if scale.exempt {
            continue;
        }
        let range = scale.max - scale.min;
        for i in 0..m.n_rows() {
            let v = &mut out.values[i * c + j];
            *v = if range == 0.0 {
                0.0
            } else {
                ((*v - scale.min) / range).clamp(CLAMP_LO, CLAMP_HI)
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::matrix::RowKey;
    use crate::features::schema::Mode;

    fn matrix_of(columns: Vec<&str>, rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix {
            mode: Mode::Frame,
            columns: columns.into_iter().map(String::from).collect(),
            values: rows.into_iter().flatten().collect(),
            target: vec![0.0; n],
            rows: (0..n)
                .map(|i| RowKey {
                    lesion_id: format!("l{i}"),
                    patient_id: format!("p{i}"),
                    frame_index: i,
                })
                .collect(),
        }
    }

    #[test]
    fn min_maps_to_zero_max_to_one() {
        let train = matrix_of(vec!["calc_thickness"], vec![vec![2.0], vec![4.0], vec![6.0]]);
        let params = fit_normalizer(&train).unwrap();
        let out = apply_normalizer(&train, &params).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn unseen_values_clamp() {
        let train = matrix_of(vec!["calc_thickness"], vec![vec![2.0], vec![6.0]]);
        let params = fit_normalizer(&train).unwrap();
        let test = matrix_of(vec!["calc_thickness"], vec![vec![8.0], vec![-40.0]]);
        let out = apply_normalizer(&test, &params).unwrap();
        assert_eq!(out.column(0), vec![1.5, -0.5]);
    }

    #[test]
    fn area_columns_pass_through() {
        let train = matrix_of(vec!["lumen_area", "calc_depth"], vec![vec![2.0, 1.0], vec![8.0, 3.0]]);
        let params = fit_normalizer(&train).unwrap();
        let out = apply_normalizer(&train, &params).unwrap();
        assert_eq!(out.column(0), vec![2.0, 8.0]);
        assert_eq!(out.column(1), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_column_warns_and_zeroes() {
        let train = matrix_of(vec!["calc_depth"], vec![vec![3.0], vec![3.0]]);
        let params = fit_normalizer(&train).unwrap();
        assert_eq!(params.warnings.len(), 1);
        assert!(params.warnings[0].contains("calc_depth"));
        let out = apply_normalizer(&train, &params).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn column_mismatch_is_an_error() {
        let train = matrix_of(vec!["calc_depth"], vec![vec![3.0]]);
        let params = fit_normalizer(&train).unwrap();
        let other = matrix_of(vec!["calc_thickness"], vec![vec![3.0]]);
        assert!(matches!(
            apply_normalizer(&other, &params),
            Err(FeatureError::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn normalization_is_idempotent_on_train_extremes() {
        let train = matrix_of(vec!["calc_depth"], vec![vec![1.0], vec![9.0], vec![5.0]]);
        let params = fit_normalizer(&train).unwrap();
        let out = apply_normalizer(&train, &params).unwrap();
        assert!(out.column(0).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
