//! Stent expansion index and reference-segment detection.
//!
//! For each frame f of the stented span,
//!
//! ```text
//! SEI(f) = 100 * post_area(f) / ((proximal_ref + distal_ref) / 2)
//! ```
//!
//! where the references are the largest lumen areas within 5 mm proximal and
//! distal of the stent edges. mSEI is the minimum of the curve and a lesion
//! counts as under-expanded when mSEI falls strictly below 80.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pullback::{Pullback, LABEL_LUMEN};

/// Lesions with mSEI strictly below this are under-expanded.
pub const UNDER_EXPANSION_THRESHOLD: f64 = 80.0;

/// Reference search reach on each side of the stent, in mm.
pub const REFERENCE_REACH_MM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("no {side} reference frames next to stent span {start}..={end}")]
    NoReferenceFrames { side: &'static str, start: usize, end: usize },
    #[error("stent span {start}..={end} invalid for {frames} frames")]
    BadStentSpan { start: usize, end: usize, frames: usize },
    #[error("empty stented span")]
    EmptySpan,
    #[error("frame {frame}: non-positive or non-finite area {value}")]
    BadArea { frame: usize, value: f64 },
    #[error("reference mean {0} is not positive")]
    BadReferenceMean(f64),
}

/// Largest lumen areas flanking the stented segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePair {
    pub proximal_area_mm2: f64,
    pub distal_area_mm2: f64,
    pub proximal_frame: usize,
    pub distal_frame: usize,
}

impl ReferencePair {
    pub fn mean_area(&self) -> f64 {
        (self.proximal_area_mm2 + self.distal_area_mm2) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionLabel {
    UnderExpanded,
    WellExpanded,
}

impl fmt::Display for ExpansionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpansionLabel::UnderExpanded => "under_expanded",
            ExpansionLabel::WellExpanded => "well_expanded",
        })
    }
}

impl FromStr for ExpansionLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "under_expanded" => Ok(ExpansionLabel::UnderExpanded),
            "well_expanded" => Ok(ExpansionLabel::WellExpanded),
            other => Err(format!("unknown expansion label {other:?}")),
        }
    }
}

/// The SEI curve over the stented span plus its summary values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRecord {
    pub start_frame: usize,
    pub sei: Vec<f64>,
    pub msei: f64,
    /// Absolute frame index achieving the minimum (ties: smallest index).
    pub msei_frame: usize,
    pub label: ExpansionLabel,
}

impl ExpansionRecord {
    /// CSV body, one `frame,sei` line per frame of the span.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("frame,sei\n");
        for (i, v) in self.sei.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.start_frame + i, v));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!("msei={} msei_frame={} label={}", self.msei, self.msei_frame, self.label)
    }
}

/// Per-frame lumen areas in mm² for the whole pullback.
pub fn lumen_areas(pullback: &Pullback) -> Vec<f64> {
    let s = pullback.meta.pixel_spacing_mm;
    pullback.frames.iter().map(|f| f.count_label(LABEL_LUMEN) as f64 * s * s).collect()
}

/// Number of frames covered by the 5 mm reference reach at the given pitch.
/// The epsilon keeps an exact multiple (5 / 0.2 = 25) from ceiling to 26.
fn reference_window_frames(pitch_mm: f64) -> usize {
    ((REFERENCE_REACH_MM / pitch_mm) - 1e-9).ceil() as usize
}

/// Finds the largest lumen area within 5 mm on each side of the stent:
/// distal over [stent_start − w, stent_start), proximal over
/// (stent_end, stent_end + w], truncated at the pullback ends. Ties resolve
/// toward the frame nearest the stent edge.
pub fn find_reference_areas(
    pullback: &Pullback,
    stent_start: usize,
    stent_end: usize,
) -> Result<ReferencePair, ExpansionError> {
    let n = pullback.frames.len();
    if stent_start > stent_end || stent_end >= n {
        return Err(ExpansionError::BadStentSpan { start: stent_start, end: stent_end, frames: n });
    }
    let areas = lumen_areas(pullback);
    let w = reference_window_frames(pullback.meta.frame_pitch_mm);

    // Walk outward from the stent edge; strict > keeps the nearest frame on ties.
    let mut proximal: Option<(usize, f64)> = None;
    for frame in (stent_end + 1)..n.min(stent_end + 1 + w) {
        if proximal.is_none_or(|(_, best)| areas[frame] > best) {
            proximal = Some((frame, areas[frame]));
        }
    }
    let mut distal: Option<(usize, f64)> = None;
    for frame in (stent_start.saturating_sub(w)..stent_start).rev() {
        if distal.is_none_or(|(_, best)| areas[frame] > best) {
            distal = Some((frame, areas[frame]));
        }
    }

    let (proximal_frame, proximal_area_mm2) = proximal.ok_or(ExpansionError::NoReferenceFrames {
        side: "proximal",
        start: stent_start,
        end: stent_end,
    })?;
    let (distal_frame, distal_area_mm2) = distal.ok_or(ExpansionError::NoReferenceFrames {
        side: "distal",
        start: stent_start,
        end: stent_end,
    })?;
    Ok(ReferencePair { proximal_area_mm2, distal_area_mm2, proximal_frame, distal_frame })
}

/// Computes the SEI curve for `post_areas` covering frames
/// `start_frame..start_frame + post_areas.len()`.
pub fn compute_sei_curve(
    post_areas: &[f64],
    start_frame: usize,
    refs: &ReferencePair,
) -> Result<ExpansionRecord, ExpansionError> {
    if post_areas.is_empty() {
        return Err(ExpansionError::EmptySpan);
    }
    let mean = refs.mean_area();
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(ExpansionError::BadReferenceMean(mean));
    }
    let mut sei = Vec::with_capacity(post_areas.len());
    for (i, &a) in post_areas.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(ExpansionError::BadArea { frame: start_frame + i, value: a });
        }
        sei.push(100.0 * a / mean);
    }
    let mut msei = f64::INFINITY;
    let mut msei_at = 0;
    for (i, &v) in sei.iter().enumerate() {
        if v < msei {
            msei = v;
            msei_at = i;
        }
    }
    let label = if msei < UNDER_EXPANSION_THRESHOLD {
        ExpansionLabel::UnderExpanded
    } else {
        ExpansionLabel::WellExpanded
    };
    Ok(ExpansionRecord { start_frame, sei, msei, msei_frame: start_frame + msei_at, label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pullback::{FrameMask, Phase, Pullback, PullbackMeta};

    /// Pullback whose frame areas are dictated by rectangle widths: frame i
    /// holds a `widths[i]` x 10 lumen rectangle at 0.1 mm spacing, so the
    /// area in mm² is widths[i] / 10.
    fn pullback_with_widths(widths: &[usize], pitch: f64) -> Pullback {
        let frames: Vec<FrameMask> = widths
            .iter()
            .map(|&wd| {
                let mut m = FrameMask::new(64, 64);
                for y in 20..30 {
                    for x in 0..wd {
                        m.set(x, y, LABEL_LUMEN);
                    }
                }
                m
            })
            .collect();
        let meta = PullbackMeta {
            pullback_id: "pb".into(),
            patient_id: "pt".into(),
            phase: Phase::Pre,
            frame_count: widths.len(),
            frame_pitch_mm: pitch,
            pixel_spacing_mm: 0.1,
            lesion_start_frame: 0,
            lesion_end_frame: widths.len() - 1,
            stent_start_frame: None,
            stent_end_frame: None,
            phenotype: None,
        };
        Pullback { meta, frames }
    }

    fn refs(p: f64, d: f64) -> ReferencePair {
        ReferencePair { proximal_area_mm2: p, distal_area_mm2: d, proximal_frame: 0, distal_frame: 0 }
    }

    #[test]
    fn constant_areas_give_equal_references() {
        let pb = pullback_with_widths(&[50; 60], 0.2);
        let r = find_reference_areas(&pb, 10, 40).unwrap();
        assert_eq!(r.proximal_area_mm2, 5.0);
        assert_eq!(r.distal_area_mm2, 5.0);
        // Ties resolve toward the stent edge.
        assert_eq!(r.proximal_frame, 41);
        assert_eq!(r.distal_frame, 9);
    }

    #[test]
    fn distal_argmax_lands_on_largest() {
        // Distal window of stent at [3, 8] is frames 0..=2 with areas 4, 6, 5.
        let pb = pullback_with_widths(&[40, 60, 50, 30, 30, 30, 30, 30, 30, 30], 0.2);
        let r = find_reference_areas(&pb, 3, 8).unwrap();
        assert_eq!(r.distal_area_mm2, 6.0);
        assert_eq!(r.distal_frame, 1);
    }

    #[test]
    fn proximal_window_truncates_at_pullback_end() {
        // Stent ends 3 frames before the last; only frames 47..=49 qualify
        // even though 5 mm would reach 25 frames.
        let mut widths = vec![30usize; 50];
        widths[47] = 35;
        widths[48] = 60; // the max within the truncated window
        widths[49] = 40;
        let pb = pullback_with_widths(&widths, 0.2);
        let r = find_reference_areas(&pb, 10, 46).unwrap();
        assert_eq!(r.proximal_area_mm2, 6.0);
        assert_eq!(r.proximal_frame, 48);
    }

    #[test]
    fn window_length_follows_pitch() {
        // Pitch 0.4 mm: the 5 mm reach covers ceil(12.5) = 13 frames, so a
        // large area 14 frames out must not be found.
        let mut widths = vec![30usize; 60];
        widths[20 + 13] = 60; // inside the window (stent_end + 13)
        widths[20 + 14] = 90; // outside
        let pb = pullback_with_widths(&widths, 0.4);
        let r = find_reference_areas(&pb, 5, 20).unwrap();
        assert_eq!(r.proximal_frame, 33);
        assert_eq!(r.proximal_area_mm2, 6.0);
    }

    #[test]
    fn missing_side_is_named() {
        let pb = pullback_with_widths(&[30; 20], 0.2);
        let err = find_reference_areas(&pb, 0, 10).unwrap_err();
        assert!(matches!(err, ExpansionError::NoReferenceFrames { side: "distal", .. }));
        let err = find_reference_areas(&pb, 5, 19).unwrap_err();
        assert!(matches!(err, ExpansionError::NoReferenceFrames { side: "proximal", .. }));
    }

    #[test]
    fn sei_boundary_case_is_well_expanded() {
        let rec = compute_sei_curve(&[5.0, 4.0, 4.5], 12, &refs(5.0, 5.0)).unwrap();
        assert_eq!(rec.sei, vec![100.0, 80.0, 90.0]);
        assert_eq!(rec.msei, 80.0);
        assert_eq!(rec.msei_frame, 13);
        assert_eq!(rec.label, ExpansionLabel::WellExpanded);
    }

    #[test]
    fn sei_formula_with_unequal_references() {
        let rec = compute_sei_curve(&[3.0], 0, &refs(4.0, 6.0)).unwrap();
        assert_eq!(rec.sei, vec![60.0]);
        assert_eq!(rec.label, ExpansionLabel::UnderExpanded);
    }

    #[test]
    fn close_prediction_shares_the_label() {
        // Predicted 69% vs actual 62%: same side of the threshold.
        let predicted = compute_sei_curve(&[6.9], 0, &refs(10.0, 10.0)).unwrap();
        let actual = compute_sei_curve(&[6.2], 0, &refs(10.0, 10.0)).unwrap();
        assert_eq!(predicted.msei, 69.0);
        assert_eq!(actual.msei, 62.0);
        assert_eq!(predicted.label, actual.label);
        assert_eq!(predicted.label, ExpansionLabel::UnderExpanded);
    }

    #[test]
    fn scale_invariance() {
        let areas = [4.1, 3.3, 5.7, 4.9];
        let base = compute_sei_curve(&areas, 3, &refs(5.1, 4.7)).unwrap();
        // Powers of two scale exactly in floating point.
        let doubled: Vec<f64> = areas.iter().map(|a| a * 4.0).collect();
        let scaled = compute_sei_curve(&doubled, 3, &refs(5.1 * 4.0, 4.7 * 4.0)).unwrap();
        assert_eq!(base.sei, scaled.sei);
        assert_eq!(base.msei_frame, scaled.msei_frame);
        assert_eq!(base.label, scaled.label);
        // Arbitrary scales agree to rounding error.
        let c = 3.7;
        let odd: Vec<f64> = areas.iter().map(|a| a * c).collect();
        let odd_rec = compute_sei_curve(&odd, 3, &refs(5.1 * c, 4.7 * c)).unwrap();
        for (a, b) in base.sei.iter().zip(&odd_rec.sei) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_one_area_never_flips_to_under() {
        let areas = vec![4.0, 4.1, 4.05, 4.3];
        let r = refs(5.0, 5.0);
        let base = compute_sei_curve(&areas, 0, &r).unwrap();
        assert_eq!(base.label, ExpansionLabel::WellExpanded);
        for i in 0..areas.len() {
            let mut up = areas.clone();
            up[i] += 0.5;
            let rec = compute_sei_curve(&up, 0, &r).unwrap();
            assert_eq!(rec.label, ExpansionLabel::WellExpanded);
            assert!(rec.msei >= base.msei);
        }
    }

    #[test]
    fn min_tie_takes_smallest_frame() {
        let rec = compute_sei_curve(&[4.0, 3.0, 3.0, 5.0], 7, &refs(5.0, 5.0)).unwrap();
        assert_eq!(rec.msei_frame, 8);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            compute_sei_curve(&[], 0, &refs(5.0, 5.0)),
            Err(ExpansionError::EmptySpan)
        ));
        assert!(matches!(
            compute_sei_curve(&[4.0, 0.0], 5, &refs(5.0, 5.0)),
            Err(ExpansionError::BadArea { frame: 6, .. })
        ));
        assert!(matches!(
            compute_sei_curve(&[4.0], 0, &refs(0.0, 0.0)),
            Err(ExpansionError::BadReferenceMean(_))
        ));
        let pb = pullback_with_widths(&[30; 10], 0.2);
        assert!(matches!(
            find_reference_areas(&pb, 4, 12),
            Err(ExpansionError::BadStentSpan { .. })
        ));
    }

    #[test]
    fn csv_and_summary_round_trip_shape() {
        let rec = compute_sei_curve(&[5.0, 4.0], 3, &refs(5.0, 5.0)).unwrap();
        let csv = rec.to_csv_string();
        assert_eq!(csv, "frame,sei\n3,100\n4,80\n");
        assert_eq!(rec.summary_line(), "msei=80 msei_frame=4 label=well_expanded");
    }
}
