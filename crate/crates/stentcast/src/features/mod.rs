//! Feature extraction and matrix assembly.
//!
//! Per-frame and lesion-level geometry descriptors roll up into one of three
//! row layouts (see [`schema`]): raw frames, sliding-window segmental
//! statistics, or whole-lesion aggregates. Targets are the post-stent lumen
//! areas of the stented span, so frame and segmental rows exist only for
//! frames inside that span; the lesion layout collapses each lesion to one
//! row whose target is the minimum post-stent area.

pub mod matrix;
pub mod normalize;
pub mod schema;
pub mod stats;

use thiserror::Error;

use crate::geometry2d::{
    compute_calc_frame_features, compute_lumen_frame_features, CalcFrameFeatures, GeometryError,
    LumenFrameFeatures,
};
use crate::geometry3d::{
    compute_calc_lesion_features, compute_lumen_lesion_features, CalcLesionFeatures,
    LumenLesionFeatures,
};
use crate::pullback::{Phenotype, Pullback};
use matrix::{FeatureMatrix, RowKey};
use schema::{build_schema, Mode, BASE_2D, LESION_3D};
use stats::{summarize, StatsError};

pub const SEGMENT_LENGTHS: [usize; 6] = [1, 3, 7, 15, 31, 63];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment length {0} not one of {SEGMENT_LENGTHS:?}")]
    SegmentLength(usize),
    #[error("lesion {lesion_id}: target frame {frame} outside lesion range")]
    TargetOutsideLesion { lesion_id: String, frame: usize },
    #[error("lesion {lesion_id}: empty target span")]
    EmptyTargetSpan { lesion_id: String },
    #[error("lesion {0}: phenotype requested but not recorded")]
    MissingPhenotype(String),
    #[error("column mismatch: expected {expected:?}, found {found:?}")]
    ColumnMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("matrix holds no rows")]
    EmptyMatrix,
    #[error("lesion {lesion_id} frame {frame} column {column}: non-finite value")]
    NonFinite { lesion_id: String, frame: usize, column: String },
    #[error("{0}: {1}")]
    Csv(String, String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Descriptors of one lesion frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frame_index: usize,
    pub lumen: LumenFrameFeatures,
    pub calc: CalcFrameFeatures,
}

impl FrameFeatures {
    /// The 24 raw values in [`BASE_2D`] order.
    pub fn as_vector(&self) -> [f64; 24] {
        let l = &self.lumen;
        let c = &self.calc;
        [
            l.area_mm2,
            l.pct_stenosis,
            l.major_axis_mm,
            l.minor_axis_mm,
            l.perimeter_mm,
            l.extent,
            l.eccentricity,
            l.solidity,
            l.circularity,
            l.below_050_ref as u8 as f64,
            l.below_070_ref as u8 as f64,
            l.below_090_ref as u8 as f64,
            c.arc_angle_deg,
            c.thickness_mm,
            c.depth_mm,
            c.area_mm2,
            c.major_axis_mm,
            c.minor_axis_mm,
            c.perimeter_mm,
            c.extent,
            c.eccentricity,
            c.solidity,
            c.circularity,
            c.stretch_ratio,
        ]
    }
}

/// Everything extracted from one pre-stent pullback.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionFeatures {
    pub lesion_id: String,
    pub patient_id: String,
    pub lesion_start_frame: usize,
    pub lesion_end_frame: usize,
    pub frames: Vec<FrameFeatures>,
    pub lumen3d: LumenLesionFeatures,
    pub calc3d: CalcLesionFeatures,
    pub phenotype: Option<Phenotype>,
}

impl LesionFeatures {
    /// The 16 lesion-level values in [`LESION_3D`] order.
    pub fn lesion_vector(&self) -> [f64; 16] {
        let l = &self.lumen3d;
        let c = &self.calc3d;
        [
            l.volume_mm3,
            l.equiv_diameter_mm,
            l.extent,
            l.convex_volume_mm3,
            l.solidity,
            l.surface_area_mm2,
            c.volume_mm3,
            c.volume_index_mm2,
            c.length_mm,
            c.equiv_diameter_mm,
            c.extent,
            c.convex_volume_mm3,
            c.solidity,
            c.surface_area_mm2,
            c.num_deposits as f64,
            c.calc_pct,
        ]
    }
}

/// Ground-truth or predicted post-stent areas over a contiguous frame span.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpan {
    pub start_frame: usize,
    pub areas: Vec<f64>,
}

impl TargetSpan {
    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start_frame..self.start_frame + self.areas.len()
    }
}

/// Runs 2D extraction over every lesion frame plus 3D extraction once.
/// `reference_area_mm2` feeds percent stenosis and the below-reference flags.
pub fn extract_lesion_features(
    pre: &Pullback,
    lesion_id: &str,
    reference_area_mm2: f64,
) -> Result<LesionFeatures, GeometryError> {
    let m = &pre.meta;
    let mut frames = Vec::with_capacity(m.lesion_end_frame - m.lesion_start_frame + 1);
    for fi in m.lesion_start_frame..=m.lesion_end_frame {
        let lumen =
            compute_lumen_frame_features(&pre.frames[fi], fi, m.pixel_spacing_mm, reference_area_mm2)?;
        let calc = compute_calc_frame_features(&pre.frames[fi], fi, m.pixel_spacing_mm)?;
        frames.push(FrameFeatures { frame_index: fi, lumen, calc });
    }
    Ok(LesionFeatures {
        lesion_id: lesion_id.to_string(),
        patient_id: m.patient_id.clone(),
        lesion_start_frame: m.lesion_start_frame,
        lesion_end_frame: m.lesion_end_frame,
        frames,
        lumen3d: compute_lumen_lesion_features(pre)?,
        calc3d: compute_calc_lesion_features(pre),
        phenotype: m.phenotype,
    })
}

fn phenotype_one_hot(p: Phenotype) -> [f64; 3] {
    match p {
        Phenotype::Nodule => [1.0, 0.0, 0.0],
        Phenotype::Protrusion => [0.0, 1.0, 0.0],
        Phenotype::Sheet => [0.0, 0.0, 1.0],
    }
}

/// Builds the feature matrix for a cohort of lesions.
pub fn assemble(
    lesions: &[(LesionFeatures, TargetSpan)],
    mode: Mode,
    segment_length: usize,
    include_phenotype: bool,
) -> Result<FeatureMatrix, FeatureError> {
    if !SEGMENT_LENGTHS.contains(&segment_length) {
        return Err(FeatureError::SegmentLength(segment_length));
    }
    let schema = build_schema(mode, include_phenotype);
    let columns = schema.column_names();
    let half = segment_length / 2;

    let mut values: Vec<f64> = Vec::new();
    let mut target: Vec<f64> = Vec::new();
    let mut rows: Vec<RowKey> = Vec::new();

    for (lf, span) in lesions {
        if span.areas.is_empty() {
            return Err(FeatureError::EmptyTargetSpan { lesion_id: lf.lesion_id.clone() });
        }
        for frame in span.frames() {
            if frame < lf.lesion_start_frame || frame > lf.lesion_end_frame {
                return Err(FeatureError::TargetOutsideLesion {
                    lesion_id: lf.lesion_id.clone(),
                    frame,
                });
            }
        }
        let one_hot = if include_phenotype {
            let p = lf
                .phenotype
                .ok_or_else(|| FeatureError::MissingPhenotype(lf.lesion_id.clone()))?;
            Some(phenotype_one_hot(p))
        } else {
            None
        };

        let frame_vectors: Vec<[f64; 24]> = lf.frames.iter().map(|f| f.as_vector()).collect();
        let key = |frame: usize| RowKey {
            lesion_id: lf.lesion_id.clone(),
            patient_id: lf.patient_id.clone(),
            frame_index: frame,
        };

        match mode {
            Mode::Frame => {
                for (offset, frame) in span.frames().enumerate() {
                    let local = frame - lf.lesion_start_frame;
                    values.extend_from_slice(&frame_vectors[local]);
                    if let Some(oh) = one_hot {
                        values.extend_from_slice(&oh);
                    }
                    target.push(span.areas[offset]);
                    rows.push(key(frame));
                }
            }
            Mode::Segmental => {
                for (offset, frame) in span.frames().enumerate() {
                    // Window clamped at the lesion bounds, no padding.
                    let lo = frame.saturating_sub(half).max(lf.lesion_start_frame);
                    let hi = (frame + half).min(lf.lesion_end_frame);
                    let window: Vec<usize> =
                        (lo..=hi).map(|f| f - lf.lesion_start_frame).collect();
                    for feat in 0..24 {
                        let series: Vec<f64> =
                            window.iter().map(|&i| frame_vectors[i][feat]).collect();
                        values.extend_from_slice(&summarize(&series)?.as_array());
                    }
                    values.extend_from_slice(&lf.lesion_vector());
                    if let Some(oh) = one_hot {
                        values.extend_from_slice(&oh);
                    }
                    target.push(span.areas[offset]);
                    rows.push(key(frame));
                }
            }
            Mode::Lesion => {
                for feat in 0..24 {
                    let series: Vec<f64> = frame_vectors.iter().map(|v| v[feat]).collect();
                    values.extend_from_slice(&summarize(&series)?.as_array());
                }
                values.extend_from_slice(&lf.lesion_vector());
                if let Some(oh) = one_hot {
                    values.extend_from_slice(&oh);
                }
                let min_area = span.areas.iter().copied().fold(f64::INFINITY, f64::min);
                target.push(min_area);
                rows.push(key(span.start_frame));
            }
        }
    }

    let out = FeatureMatrix { mode, columns, values, target, rows };
    for i in 0..out.n_rows() {
        if let Some(j) = out.row(i).iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                lesion_id: out.rows[i].lesion_id.clone(),
                frame: out.rows[i].frame_index,
                column: out.columns[j].clone(),
            });
        }
    }
    debug_assert_eq!(out.values.len(), out.n_rows() * out.n_cols());
    debug_assert_eq!(
        out.columns.len(),
        BASE_2D.len()
            * if mode == Mode::Frame { 1 } else { 7 }
            + if mode == Mode::Frame { 0 } else { LESION_3D.len() }
            + if include_phenotype { 3 } else { 0 }
    );
    Ok(out)
}
