//! Rule-based calcium score and its restricted-feature ML counterpart, used
//! as comparison baselines.
//!
//! The score awards 2 points for a maximum calcium arc above 180 degrees,
//! 1 point for maximum thickness above 0.5 mm, and 1 point for calcification
//! longer than 5 mm; 4 points flag the lesion as high risk. The constants are
//! conventional rather than derived here, so they live in a configuration
//! block and can be adjusted without code changes.

use serde::{Deserialize, Serialize};

use crate::features::matrix::{FeatureMatrix, RowKey};
use crate::features::schema::Mode;
use crate::features::{LesionFeatures, TargetSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FujinoConfig {
    pub angle_threshold_deg: f64,
    pub thickness_threshold_mm: f64,
    pub length_threshold_mm: f64,
    pub angle_points: u8,
    pub thickness_points: u8,
    pub length_points: u8,
    pub high_risk_points: u8,
}

impl Default for FujinoConfig {
    fn default() -> Self {
        FujinoConfig {
            angle_threshold_deg: 180.0,
            thickness_threshold_mm: 0.5,
            length_threshold_mm: 5.0,
            angle_points: 2,
            thickness_points: 1,
            length_points: 1,
            high_risk_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FujinoScore {
    pub points: u8,
    pub angle_points: u8,
    pub thickness_points: u8,
    pub length_points: u8,
    pub high_risk: bool,
}

/// Applies the rule with strict inequalities on every threshold.
pub fn fujino_score(
    max_angle_deg: f64,
    max_thickness_mm: f64,
    calc_length_mm: f64,
    cfg: &FujinoConfig,
) -> FujinoScore {
    let angle_points = if max_angle_deg > cfg.angle_threshold_deg { cfg.angle_points } else { 0 };
    let thickness_points =
        if max_thickness_mm > cfg.thickness_threshold_mm { cfg.thickness_points } else { 0 };
    let length_points = if calc_length_mm > cfg.length_threshold_mm { cfg.length_points } else { 0 };
    let points = angle_points + thickness_points + length_points;
    FujinoScore {
        points,
        angle_points,
        thickness_points,
        length_points,
        high_risk: points == cfg.high_risk_points,
    }
}

pub const FUJINO_COLUMNS: [&str; 3] =
    ["fujino_max_angle_deg", "fujino_max_thickness_mm", "fujino_calc_length_mm"];

/// The three rule inputs measured from lesion features.
pub fn fujino_inputs(lesion: &LesionFeatures) -> (f64, f64, f64) {
    let max_angle =
        lesion.frames.iter().map(|f| f.calc.arc_angle_deg).fold(0.0f64, f64::max);
    let max_thickness =
        lesion.frames.iter().map(|f| f.calc.thickness_mm).fold(0.0f64, f64::max);
    (max_angle, max_thickness, lesion.calc3d.length_mm)
}

/// A 3-column lesion-mode matrix holding only the rule inputs, with the
/// lesion-mode target (minimum post-stent area), pluggable into any model.
pub fn fujino_ml_features(lesions: &[(LesionFeatures, TargetSpan)]) -> FeatureMatrix {
    let mut values = Vec::with_capacity(lesions.len() * 3);
    let mut target = Vec::with_capacity(lesions.len());
    let mut rows = Vec::with_capacity(lesions.len());
    for (lesion, span) in lesions {
        let (angle, thickness, length) = fujino_inputs(lesion);
        values.extend([angle, thickness, length]);
        target.push(span.areas.iter().copied().fold(f64::INFINITY, f64::min));
        rows.push(RowKey {
            lesion_id: lesion.lesion_id.clone(),
            patient_id: lesion.patient_id.clone(),
            frame_index: lesion.lesion_start_frame,
        });
    }
    FeatureMatrix {
        mode: Mode::Lesion,
        columns: FUJINO_COLUMNS.iter().map(|s| s.to_string()).collect(),
        values,
        target,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry2d::{CalcFrameFeatures, LumenFrameFeatures};
    use crate::geometry3d::{CalcLesionFeatures, LumenLesionFeatures};
    use crate::features::FrameFeatures;

    fn lesion_with(arcs: &[f64], thicknesses: &[f64], length_mm: f64) -> LesionFeatures {
        let frames = arcs
            .iter()
            .zip(thicknesses)
            .enumerate()
            .map(|(i, (&arc, &th))| FrameFeatures {
                frame_index: i,
                lumen: LumenFrameFeatures {
                    area_mm2: 3.0,
                    pct_stenosis: 10.0,
                    major_axis_mm: 2.0,
                    minor_axis_mm: 2.0,
                    perimeter_mm: 6.0,
                    extent: 0.7,
                    eccentricity: 0.1,
                    solidity: 1.0,
                    circularity: 1.0,
                    below_050_ref: false,
                    below_070_ref: false,
                    below_090_ref: false,
                },
                calc: CalcFrameFeatures {
                    present: arc > 0.0,
                    arc_angle_deg: arc,
                    thickness_mm: th,
                    ..CalcFrameFeatures::absent()
                },
            })
            .collect();
        LesionFeatures {
            lesion_id: "l0".into(),
            patient_id: "p0".into(),
            lesion_start_frame: 0,
            lesion_end_frame: arcs.len() - 1,
            frames,
            lumen3d: LumenLesionFeatures {
                volume_mm3: 1.0,
                equiv_diameter_mm: 1.0,
                extent: 0.5,
                convex_volume_mm3: 1.0,
                solidity: 1.0,
                surface_area_mm2: 5.0,
            },
            calc3d: CalcLesionFeatures { length_mm, ..CalcLesionFeatures::absent() },
            phenotype: None,
        }
    }

    #[test]
    fn all_criteria_met_is_high_risk() {
        let s = fujino_score(200.0, 0.6, 6.0, &FujinoConfig::default());
        assert_eq!(s.points, 4);
        assert_eq!((s.angle_points, s.thickness_points, s.length_points), (2, 1, 1));
        assert!(s.high_risk);
    }

    #[test]
    fn zero_inputs_score_zero() {
        let s = fujino_score(0.0, 0.0, 0.0, &FujinoConfig::default());
        assert_eq!(s.points, 0);
        assert!(!s.high_risk);
    }

    #[test]
    fn thresholds_are_strict() {
        // Angle just over, thickness and length exactly at their thresholds.
        let s = fujino_score(181.0, 0.5, 5.0, &FujinoConfig::default());
        assert_eq!(s.points, 2);
        assert_eq!((s.angle_points, s.thickness_points, s.length_points), (2, 0, 0));
        assert!(!s.high_risk);
    }

    #[test]
    fn score_is_monotone_in_each_input() {
        let cfg = FujinoConfig::default();
        let base = fujino_score(170.0, 0.4, 4.0, &cfg).points;
        for (a, t, l) in [(190.0, 0.4, 4.0), (170.0, 0.6, 4.0), (170.0, 0.4, 6.0)] {
            assert!(fujino_score(a, t, l, &cfg).points >= base);
        }
        // High risk requires every criterion at once.
        assert!(!fujino_score(200.0, 0.6, 4.0, &cfg).high_risk);
        assert!(!fujino_score(200.0, 0.4, 6.0, &cfg).high_risk);
        assert!(!fujino_score(170.0, 0.6, 6.0, &cfg).high_risk);
    }

    #[test]
    fn ml_matrix_has_three_columns_and_lesion_rows() {
        let a = lesion_with(&[120.0, 200.0, 90.0], &[0.3, 0.7, 0.2], 6.5);
        let b = lesion_with(&[0.0, 0.0], &[0.0, 0.0], 0.0);
        let pairs = vec![
            (a, TargetSpan { start_frame: 0, areas: vec![3.0, 2.5, 2.8] }),
            (b, TargetSpan { start_frame: 0, areas: vec![4.0, 4.2] }),
        ];
        let m = fujino_ml_features(&pairs);
        assert_eq!(m.columns, FUJINO_COLUMNS.map(String::from).to_vec());
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(0), &[200.0, 0.7, 6.5]);
        assert_eq!(m.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(m.target, vec![2.5, 4.0]);
        assert_eq!(m.mode, Mode::Lesion);
    }
}
