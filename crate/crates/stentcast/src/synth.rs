//! Deterministic synthetic pullback generator with a known expansion
//! surrogate.
//!
//! Each lesion is a stack of labeled cross-sections: a circular lumen whose
//! radius dips through a smooth stenosis, plus one calcification deposit
//! stamped per phenotype template (nodule: lumen-protruding blob;
//! protrusion: intraluminal bulge; sheet: concentric arc held off the lumen).
//! Ground-truth post-stent areas come from a windowed resistance surrogate:
//!
//! ```text
//! r(g)    = (theta(g)/360) * min(T(g)/t_ref, 1) * (1 - 0.5 * min(D(g)/d_ref, 1))
//! R(f)    = sum over |g-f| <= w of r(g), divided by the fixed 2w+1
//! area(f) = A_ref * (1 - beta * R(f)) + noise
//! ```
//!
//! The surrogate is an admitted fiction: it exists to provide a learnable,
//! neighborhood-dependent target with a known noise floor, not to model
//! biomechanics. Because R(f) mixes frames f-w..f+w, windowed features with a
//! matching span carry strictly more signal than single-frame ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LesionSample;
use crate::expansion::{find_reference_areas, ExpansionError};
use crate::pullback::{
    FrameMask, Phase, Phenotype, Pullback, PullbackMeta, LABEL_CALC, LABEL_LUMEN,
};

// Deposit geometry ranges (mm or degrees). The feasibility check below keeps
// every combination inside the image. The ranges deliberately straddle or
// saturate the coarse clinical score thresholds (180 degrees, 0.5 mm, 5 mm):
// most of the variance that decides expansion lives in quantities the score
// never reads (window-mean arc, sub-threshold thickness, gap depth), which is
// the behavior the benchmark is meant to exhibit.
const NODULE_RHO_MM: (f64, f64) = (0.15, 0.30);
const PROTRUSION_THICK_MM: (f64, f64) = (0.25, 0.42);
/// Sheet thickness is drawn from two bands with the middle hollowed out, so
/// sheets are either clearly thin or clearly thick. Mid-band deposits would
/// land their lesions inside the noise width of the expansion threshold,
/// where the label is a coin flip no feature set can call.
const SHEET_THICK_BANDS: ((f64, f64), (f64, f64)) = ((0.05, 0.11), (0.42, 0.48));
const SHEET_GAP_MM: (f64, f64) = (0.08, 0.15);
const PROTRUSION_ARC_DEG: (f64, f64) = (50.0, 95.0);
/// Sheets come in two arc families: partial sheets stay under the half
/// circle, full sheets clearly over it. A partial sheet alone is harmless;
/// two thick partial sheets on opposite walls stack inside the window and
/// can block expansion outright, which no per-frame arc reading reveals.
const SHEET_PARTIAL_FRACTION: f64 = 0.40;
const SHEET_PARTIAL_ARC_DEG: (f64, f64) = (130.0, 175.0);
const SHEET_FULL_ARC_DEG: (f64, f64) = (255.0, 300.0);
/// Fraction of a protruding deposit's extent that sits inside the lumen.
const PROTRUDE_FRACTION: f64 = 0.35;
/// Envelope sharpness range. Envelopes are normalized to a common mean, so a
/// peaky deposit and a flat one lay down the same total arc mass (and hence
/// volume) yet differ in their worst window, which decorrelates whole-lesion
/// aggregates from the label while leaving windowed features fully informed.
const ENV_POWER: (f64, f64) = (0.8, 1.8);
/// Lag-one autocorrelation of the area measurement noise along the pullback.
const NOISE_AR1: f64 = 0.45;
/// Deposit run length as a fraction of the lesion. The floor keeps every run
/// longer than the resistance window, so no deposit is quietly diluted by
/// the window's fixed denominator into the ambiguous zone near the label
/// threshold.
const RUN_FRACTION: (f64, f64) = (0.85, 0.98);
/// Probability that a calcified lesion carries a second deposit, keyed on
/// what the first deposit is. Where two runs overlap their arcs stack inside
/// the resistance window; that interaction decides many labels, is invisible
/// to the coarse score (which reads the longest single arc), and blurs in
/// whole-lesion aggregates, but windowed segmental features resolve it.
/// Thick partial sheets pair most of the time, so a meaningful share of
/// under-expansion arises in lesions whose individual arcs look modest.
const SECOND_PROB_NODULE: f64 = 0.30;
const SECOND_PROB_PROTRUSION: f64 = 0.15;
const SECOND_PROB_THIN_PARTIAL: f64 = 0.10;
const SECOND_PROB_THICK_PARTIAL: f64 = 0.85;
const SECOND_PROB_FULL: f64 = 0.15;
/// Arcs thinner than this stamp no pixels (sub-pixel slivers).
const MIN_STAMP_ARC_DEG: f64 = 5.0;
/// Post-stent areas never collapse below this fraction of the reference.
const MIN_AREA_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub beta: f64,
    pub thickness_ref_mm: f64,
    pub depth_ref_mm: f64,
    /// Half-width of the resistance window in frames.
    pub window_w: usize,
    /// Per-phenotype multipliers on beta (nodule, protrusion, sheet); the
    /// phenotype-sensitive dataset variant sets this.
    pub phenotype_beta_scale: Option<(f64, f64, f64)>,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            beta: 0.5,
            thickness_ref_mm: 0.5,
            depth_ref_mm: 1.0,
            window_w: 15,
            phenotype_beta_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_lesions: usize,
    pub seed: u64,
    pub image_px: usize,
    pub pixel_spacing_mm: f64,
    pub frame_pitch_mm: f64,
    /// Calc-free frames on each side of the lesion (reference segments).
    pub margin_frames: usize,
    pub lesion_frames: (usize, usize),
    pub lumen_radius_mm: (f64, f64),
    /// Stenosis dip as a fraction of the baseline radius.
    pub stenosis_depth: (f64, f64),
    /// (nodule, protrusion, sheet) proportions.
    pub phenotype_mix: (f64, f64, f64),
    pub calc_free_prob: f64,
    /// Absolute target noise; superseded per lesion when the percentage is set.
    pub noise_sd_mm2: f64,
    /// Noise SD as a percentage of each lesion's reference area.
    pub noise_sd_pct_of_reference: Option<f64>,
    /// Every lesion at a multiple of this index shares its predecessor's
    /// patient, giving a few multi-lesion patients.
    pub shared_patient_period: usize,
    pub surrogate: SurrogateParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_lesions: 120,
            seed: 7,
            image_px: 384,
            pixel_spacing_mm: 0.01,
            frame_pitch_mm: 0.2,
            margin_frames: 26,
            lesion_frames: (40, 64),
            lumen_radius_mm: (0.71, 0.93),
            stenosis_depth: (0.15, 0.35),
            phenotype_mix: (0.12, 0.33, 0.55),
            calc_free_prob: 0.12,
            noise_sd_mm2: 0.0,
            noise_sd_pct_of_reference: Some(5.0),
            shared_patient_period: 18,
            surrogate: SurrogateParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("reference search on generated lesion: {0}")]
    Reference(#[from] ExpansionError),
}

/// Everything drawn for one lesion before any pixel is stamped. Profiles,
/// masks, and truth all derive from this, so tests can reason about the
/// parameter distribution without paying for rasterization.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionPlan {
    pub lesion_id: String,
    pub patient_id: String,
    pub n_frames: usize,
    pub lesion_start: usize,
    pub lesion_end: usize,
    pub baseline_radius_mm: f64,
    /// (depth fraction, center frame, width in frames).
    pub stenosis: (f64, f64, f64),
    pub phenotype: Phenotype,
    /// Zero (calc-free), one, or two deposits, all of the lesion phenotype.
    pub deposits: Vec<DepositPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepositPlan {
    pub run_start: usize,
    pub run_len: usize,
    pub center_angle_deg: f64,
    /// Peak arc for protrusion/sheet; nodules derive their arc from the blob.
    pub peak_arc_deg: f64,
    /// Peak blob radius; zero for protrusion/sheet.
    pub rho_peak_mm: f64,
    pub thickness_mm: f64,
    pub gap_mm: f64,
    /// Sharpness exponent applied to the raised-cosine envelope.
    pub env_power: f64,
}

/// One generated lesion plus the bookkeeping tests need: the reference area
/// the surrogate used, the realized noise SD, and the pre-noise truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLesion {
    pub sample: LesionSample,
    pub ref_area_mm2: f64,
    pub noise_sd_mm2: f64,
    pub clean_areas: Vec<f64>,
}

fn validate(cfg: &SynthConfig) -> Result<(), SynthError> {
    let bad = |m: String| Err(SynthError::BadConfig(m));
    if cfg.n_lesions == 0 {
        return bad("n_lesions must be positive".into());
    }
    let (pn, pp, ps) = cfg.phenotype_mix;
    if pn < 0.0 || pp < 0.0 || ps < 0.0 || (pn + pp + ps - 1.0).abs() > 1e-9 {
        return bad(format!("phenotype mix ({pn}, {pp}, {ps}) must be nonnegative and sum to 1"));
    }
    if !(cfg.pixel_spacing_mm > 0.0 && cfg.frame_pitch_mm > 0.0) {
        return bad("spacing and pitch must be positive".into());
    }
    if cfg.lesion_frames.0 == 0 || cfg.lesion_frames.0 > cfg.lesion_frames.1 {
        return bad(format!("lesion frame range {:?}", cfg.lesion_frames));
    }
    if cfg.margin_frames == 0 {
        return bad("margin_frames must be positive".into());
    }
    if !(cfg.lumen_radius_mm.0 > 0.0 && cfg.lumen_radius_mm.0 <= cfg.lumen_radius_mm.1) {
        return bad(format!("lumen radius range {:?}", cfg.lumen_radius_mm));
    }
    if !(0.0..=1.0).contains(&cfg.calc_free_prob) {
        return bad(format!("calc_free_prob {}", cfg.calc_free_prob));
    }
    if !(cfg.surrogate.beta >= 0.0 && cfg.surrogate.beta < 1.0) {
        return bad(format!("beta {} outside [0, 1)", cfg.surrogate.beta));
    }
    if let Some((a, b, c)) = cfg.surrogate.phenotype_beta_scale {
        for s in [a, b, c] {
            if !(s >= 0.0 && cfg.surrogate.beta * s < 1.0) {
                return bad(format!("phenotype beta scale {s} pushes beta outside [0, 1)"));
            }
        }
    }
    if cfg.noise_sd_mm2 < 0.0 || cfg.noise_sd_pct_of_reference.is_some_and(|p| p < 0.0) {
        return bad("noise must be nonnegative".into());
    }
    if cfg.shared_patient_period == 0 {
        return bad("shared_patient_period must be positive".into());
    }
    let (s_lo, s_hi) = cfg.stenosis_depth;
    if !(0.0..1.0).contains(&s_lo) || !(0.0..1.0).contains(&s_hi) || s_lo > s_hi {
        return Err(SynthError::InfeasibleGeometry(format!(
            "stenosis depth range ({s_lo}, {s_hi}) must stay inside [0, 1) or the lumen vanishes"
        )));
    }
    // Worst-case radial extent of lumen plus deposit must fit in the image.
    // Sharp normalized envelopes can lift a nodule blob to 1.35x its nominal
    // peak radius, so the nodule term carries that headroom.
    let worst = (cfg.lumen_radius_mm.1 + SHEET_GAP_MM.1 + SHEET_THICK_BANDS.1 .1)
        .max(cfg.lumen_radius_mm.1 + (1.0 - PROTRUDE_FRACTION) * 2.0 * NODULE_RHO_MM.1 * 1.35);
    let available = (cfg.image_px as f64 / 2.0 - 2.0) * cfg.pixel_spacing_mm;
    if worst > available {
        return Err(SynthError::InfeasibleGeometry(format!(
            "radial extent {worst:.2} mm exceeds the {available:.2} mm the image can hold"
        )));
    }
    Ok(())
}

/// Patient index for a lesion: increments each lesion except at multiples of
/// the sharing period, which reuse the previous patient.
fn patient_index(lesion: usize, period: usize) -> usize {
    lesion - lesion / period
}

/// Draws every parameter of one lesion. Each lesion has its own RNG stream,
/// so plans are independent of generation order.
pub fn draw_plan(cfg: &SynthConfig, index: usize) -> LesionPlan {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    let n_lesion = rng.gen_range(cfg.lesion_frames.0..=cfg.lesion_frames.1);
    let n_frames = n_lesion + 2 * cfg.margin_frames;
    let lesion_start = cfg.margin_frames;
    let lesion_end = lesion_start + n_lesion - 1;
    let baseline_radius_mm = rng.gen_range(cfg.lumen_radius_mm.0..=cfg.lumen_radius_mm.1);

    let depth = rng.gen_range(cfg.stenosis_depth.0..=cfg.stenosis_depth.1);
    let center = lesion_start as f64 + rng.gen_range(0.33..0.67) * n_lesion as f64;
    let width = rng.gen_range(n_lesion as f64 / 10.0..n_lesion as f64 / 5.0).max(3.0);

    let calc_free = rng.gen_bool(cfg.calc_free_prob);
    let (pn, pp, _) = cfg.phenotype_mix;
    let u: f64 = rng.gen();
    let phenotype = if u < pn {
        Phenotype::Nodule
    } else if u < pn + pp {
        Phenotype::Protrusion
    } else {
        Phenotype::Sheet
    };

    let mut deposits = Vec::new();
    if !calc_free {
        let first = draw_deposit(&mut rng, phenotype, n_lesion, lesion_start, None);
        let opposite = first.center_angle_deg;
        deposits.push(first);
        let second_prob = match phenotype {
            Phenotype::Nodule => SECOND_DEPOSIT_PROB.0,
            Phenotype::Protrusion => SECOND_DEPOSIT_PROB.1,
            Phenotype::Sheet => SECOND_DEPOSIT_PROB.2,
        };
        if rng.gen_bool(second_prob) {
            deposits.push(draw_deposit(&mut rng, phenotype, n_lesion, lesion_start, Some(opposite)));
        }
    }

    LesionPlan {
        lesion_id: format!("lesion_{index:03}"),
        patient_id: format!("patient_{:03}", patient_index(index, cfg.shared_patient_period)),
        n_frames,
        lesion_start,
        lesion_end,
        baseline_radius_mm,
        stenosis: (depth, center, width),
        phenotype,
        deposits,
    }
}

/// One deposit's parameters. A second deposit sits roughly opposite the
/// first so the two arcs rarely merge in the mask.
fn draw_deposit(
    rng: &mut ChaCha20Rng,
    phenotype: Phenotype,
    n_lesion: usize,
    lesion_start: usize,
    opposite_of: Option<f64>,
) -> DepositPlan {
    let run_len = ((n_lesion as f64 * rng.gen_range(RUN_FRACTION.0..RUN_FRACTION.1)).round()
        as usize)
        .clamp(3, n_lesion);
    let run_start = lesion_start + rng.gen_range(0..=n_lesion - run_len);
    let center_angle_deg = match opposite_of {
        None => rng.gen_range(0.0..360.0),
        Some(base) => (base + 180.0 + rng.gen_range(-60.0..60.0)).rem_euclid(360.0),
    };
    let (peak_arc_deg, rho_peak_mm, thickness_mm, gap_mm) = match phenotype {
        Phenotype::Nodule => {
            let rho = rng.gen_range(NODULE_RHO_MM.0..=NODULE_RHO_MM.1);
            (0.0, rho, 2.0 * rho, 0.0)
        }
        Phenotype::Protrusion => (
            rng.gen_range(PROTRUSION_ARC_DEG.0..=PROTRUSION_ARC_DEG.1),
            0.0,
            rng.gen_range(PROTRUSION_THICK_MM.0..=PROTRUSION_THICK_MM.1),
            0.0,
        ),
        Phenotype::Sheet => {
            let arc = rng.gen_range(SHEET_ARC_DEG.0..=SHEET_ARC_DEG.1);
            let u: f64 = rng.gen();
            let ((t_lo, t_hi), (u_lo, u_hi)) = SHEET_THICK_BANDS;
            let thickness = if u < 0.5 {
                t_lo + 2.0 * u * (t_hi - t_lo)
            } else {
                u_lo + 2.0 * (u - 0.5) * (u_hi - u_lo)
            };
            (arc, 0.0, thickness, rng.gen_range(SHEET_GAP_MM.0..=SHEET_GAP_MM.1))
        }
    };
    let env_power = rng.gen_range(ENV_POWER.0..=ENV_POWER.1);
    // Companion deposits are systematically smaller: on their own they stay
    // harmless, so whether the pair crosses the threshold hinges on how much
    // the two runs overlap rather than on either deposit alone.
    let (arc_scale, size_scale) = if opposite_of.is_some() { (0.85, 0.75) } else { (1.0, 1.0) };
    DepositPlan {
        run_start,
        run_len,
        center_angle_deg,
        peak_arc_deg: peak_arc_deg * arc_scale,
        rho_peak_mm: rho_peak_mm * size_scale,
        thickness_mm: thickness_mm * size_scale,
        gap_mm,
        env_power,
    }
}

/// Raised-sine envelope over a deposit run, zero at the edges. The power term
/// sharpens (power > 1) or flattens (power < 1) the bump, and the result is
/// rescaled so the mean over the run always equals one half: sharpness moves
/// mass between the peak and the flanks without changing the total.
fn envelope(offset: usize, run_len: usize, power: f64) -> f64 {
    if run_len <= 1 {
        return 1.0;
    }
    let shape = |o: usize| {
        let t = o as f64 / (run_len - 1) as f64;
        (std::f64::consts::PI * t).sin().powi(2).powf(power)
    };
    let mean = (0..run_len).map(shape).sum::<f64>() / run_len as f64;
    0.5 * shape(offset) / mean
}

/// One deposit's per-frame footprint, used both for stamping and for the
/// combined surrogate profile.
pub struct DepositProfile {
    pub theta_deg: Vec<f64>,
    /// Nodule blob radius per frame (zero for other phenotypes).
    pub rho_mm: Vec<f64>,
}

/// Analytic per-frame profiles. The combined arrays merge all deposits:
/// arcs add (capped at the full circle), thickness takes the max and gap the
/// min over the deposits active at that frame.
pub struct Profiles {
    pub lumen_radius_mm: Vec<f64>,
    pub theta_deg: Vec<f64>,
    pub thickness_mm: Vec<f64>,
    pub depth_mm: Vec<f64>,
    pub per_deposit: Vec<DepositProfile>,
}

pub fn profiles(plan: &LesionPlan) -> Profiles {
    let n = plan.n_frames;
    let (depth, center, width) = plan.stenosis;
    let lumen_radius_mm: Vec<f64> = (0..n)
        .map(|g| {
            let z = (g as f64 - center) / width;
            plan.baseline_radius_mm * (1.0 - depth * (-0.5 * z * z).exp())
        })
        .collect();

    let per_deposit: Vec<DepositProfile> = plan
        .deposits
        .iter()
        .map(|d| {
            let mut theta = vec![0.0; n];
            let mut rho = vec![0.0; n];
            for offset in 0..d.run_len {
                let g = d.run_start + offset;
                let env = envelope(offset, d.run_len, d.env_power);
                match plan.phenotype {
                    Phenotype::Nodule => {
                        // Spherical blob: cross-sections shrink as sqrt of the
                        // envelope; the arc follows from blob vs lumen size.
                        let r = d.rho_peak_mm * env.sqrt();
                        rho[g] = r;
                        theta[g] =
                            2.0 * (r / lumen_radius_mm[g]).min(1.0).asin().to_degrees();
                    }
                    Phenotype::Protrusion | Phenotype::Sheet => {
                        theta[g] = d.peak_arc_deg * env;
                    }
                }
            }
            DepositProfile { theta_deg: theta, rho_mm: rho }
        })
        .collect();

    let mut theta_deg = vec![0.0; n];
    let mut thickness_mm = vec![0.0; n];
    let mut depth_mm = vec![0.0; n];
    for g in 0..n {
        let mut theta = 0.0;
        let mut thick: f64 = 0.0;
        let mut gap = f64::INFINITY;
        for (d, prof) in plan.deposits.iter().zip(&per_deposit) {
            if prof.theta_deg[g] > 0.0 {
                theta += prof.theta_deg[g];
                let t = match plan.phenotype {
                    Phenotype::Nodule => 2.0 * prof.rho_mm[g],
                    _ => d.thickness_mm,
                };
                thick = thick.max(t);
                gap = gap.min(d.gap_mm);
            }
        }
        if theta > 0.0 {
            theta_deg[g] = theta.min(360.0);
            thickness_mm[g] = thick;
            depth_mm[g] = gap;
        }
    }
    Profiles { lumen_radius_mm, theta_deg, thickness_mm, depth_mm, per_deposit }
}

/// Per-frame post-stent areas from the resistance surrogate (noise-free).
///
/// The resistance window has a fixed denominator 2w+1; frames beyond the
/// profile contribute zero, so a deposit near a pullback end still spreads
/// over the full window width.
pub fn surrogate_post_area(
    theta_deg: &[f64],
    thickness_mm: &[f64],
    depth_mm: &[f64],
    reference_area_mm2: f64,
    params: &SurrogateParams,
) -> Vec<f64> {
    let n = theta_deg.len();
    let resist: Vec<f64> = (0..n)
        .map(|g| {
            (theta_deg[g] / 360.0)
                * (thickness_mm[g] / params.thickness_ref_mm).min(1.0)
                * (1.0 - 0.5 * (depth_mm[g] / params.depth_ref_mm).min(1.0))
        })
        .collect();
    let w = params.window_w as isize;
    (0..n as isize)
        .map(|f| {
            let mut acc = 0.0;
            for g in (f - w).max(0)..=(f + w).min(n as isize - 1) {
                acc += resist[g as usize];
            }
            let r = acc / (2 * params.window_w + 1) as f64;
            reference_area_mm2 * (1.0 - params.beta * r)
        })
        .collect()
}

/// Stamps a filled disc of the given label.
fn stamp_disc(mask: &mut FrameMask, cx: f64, cy: f64, r_px: f64, label: u8) {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let x0 = ((cx - r_px).floor() as isize).max(0);
    let x1 = ((cx + r_px).ceil() as isize).min(w - 1);
    let y0 = ((cy - r_px).floor() as isize).max(0);
    let y1 = ((cy + r_px).ceil() as isize).min(h - 1);
    let r2 = r_px * r_px;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r2 {
                mask.set(x as usize, y as usize, label);
            }
        }
    }
}

/// Stamps an annular wedge: radii in [r_in, r_out], angles within half_arc of
/// the center angle.
fn stamp_wedge(
    mask: &mut FrameMask,
    cx: f64,
    cy: f64,
    r_in_px: f64,
    r_out_px: f64,
    center_deg: f64,
    half_arc_deg: f64,
    label: u8,
) {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let x0 = ((cx - r_out_px).floor() as isize).max(0);
    let x1 = ((cx + r_out_px).ceil() as isize).min(w - 1);
    let y0 = ((cy - r_out_px).floor() as isize).max(0);
    let y1 = ((cy + r_out_px).ceil() as isize).min(h - 1);
    let (lo2, hi2) = (r_in_px * r_in_px, r_out_px * r_out_px);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let d2 = dx * dx + dy * dy;
            if d2 < lo2 || d2 > hi2 {
                continue;
            }
            let ang = dy.atan2(dx).to_degrees();
            let mut delta = (ang - center_deg).rem_euclid(360.0);
            if delta > 180.0 {
                delta = 360.0 - delta;
            }
            if delta <= half_arc_deg {
                mask.set(x as usize, y as usize, label);
            }
        }
    }
}

/// Builds the labeled frame stack for a plan from its analytic profiles.
fn build_frames(plan: &LesionPlan, prof: &Profiles, cfg: &SynthConfig) -> Vec<FrameMask> {
    let size = cfg.image_px;
    let c = (size as f64 - 1.0) / 2.0;
    let px = |mm: f64| mm / cfg.pixel_spacing_mm;
    (0..plan.n_frames)
        .map(|g| {
            let mut m = FrameMask::new(size, size);
            let r_px = px(prof.lumen_radius_mm[g]);
            stamp_disc(&mut m, c, c, r_px, LABEL_LUMEN);
            for (d, dp) in plan.deposits.iter().zip(&prof.per_deposit) {
                if dp.theta_deg[g] < MIN_STAMP_ARC_DEG {
                    continue;
                }
                match plan.phenotype {
                    Phenotype::Nodule => {
                        // Blob centered just inside the lumen boundary; it
                        // overwrites lumen pixels, eroding the lumen locally.
                        let rho_px = px(dp.rho_mm[g]);
                        let r_center = r_px - 2.0 * PROTRUDE_FRACTION * rho_px;
                        let phi = d.center_angle_deg.to_radians();
                        stamp_disc(
                            &mut m,
                            c + r_center * phi.cos(),
                            c + r_center * phi.sin(),
                            rho_px,
                            LABEL_CALC,
                        );
                    }
                    Phenotype::Protrusion => {
                        let t_px = px(d.thickness_mm);
                        let r_in = r_px - PROTRUDE_FRACTION * t_px;
                        stamp_wedge(
                            &mut m,
                            c,
                            c,
                            r_in.max(0.0),
                            r_in + t_px,
                            d.center_angle_deg,
                            dp.theta_deg[g] / 2.0,
                            LABEL_CALC,
                        );
                    }
                    Phenotype::Sheet => {
                        let r_in = r_px + px(d.gap_mm).max(1.0);
                        stamp_wedge(
                            &mut m,
                            c,
                            c,
                            r_in,
                            r_in + px(d.thickness_mm),
                            d.center_angle_deg,
                            dp.theta_deg[g] / 2.0,
                            LABEL_CALC,
                        );
                    }
                }
            }
            m
        })
        .collect()
}

fn beta_scale(params: &SurrogateParams, phenotype: Phenotype) -> f64 {
    match params.phenotype_beta_scale {
        None => 1.0,
        Some((n, p, s)) => match phenotype {
            Phenotype::Nodule => n,
            Phenotype::Protrusion => p,
            Phenotype::Sheet => s,
        },
    }
}

/// Generates one lesion end to end. Pure in (config, index).
pub fn generate_lesion(cfg: &SynthConfig, index: usize) -> Result<SynthLesion, SynthError> {
    validate(cfg)?;
    let plan = draw_plan(cfg, index);
    let prof = profiles(&plan);
    let frames = build_frames(&plan, &prof, cfg);
    let meta = PullbackMeta {
        pullback_id: format!("{}_pre", plan.lesion_id),
        patient_id: plan.patient_id.clone(),
        phase: Phase::Pre,
        frame_count: plan.n_frames,
        frame_pitch_mm: cfg.frame_pitch_mm,
        pixel_spacing_mm: cfg.pixel_spacing_mm,
        lesion_start_frame: plan.lesion_start,
        lesion_end_frame: plan.lesion_end,
        stent_start_frame: None,
        stent_end_frame: None,
        phenotype: Some(plan.phenotype),
    };
    let pre = Pullback { meta, frames };

    // The surrogate's reference is the same one SEI will use at evaluation
    // time: the largest lumen within reach of the (future) stent edges.
    let refs = find_reference_areas(&pre, plan.lesion_start, plan.lesion_end)?;
    let ref_area = refs.mean_area();

    let scaled = SurrogateParams {
        beta: cfg.surrogate.beta * beta_scale(&cfg.surrogate, plan.phenotype),
        ..cfg.surrogate
    };
    let all_clean = surrogate_post_area(
        &prof.theta_deg,
        &prof.thickness_mm,
        &prof.depth_mm,
        ref_area,
        &scaled,
    );
    let clean_areas = all_clean[plan.lesion_start..=plan.lesion_end].to_vec();

    let noise_sd = cfg
        .noise_sd_pct_of_reference
        .map(|pct| pct / 100.0 * ref_area)
        .unwrap_or(cfg.noise_sd_mm2);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x6e6f_6973_65);
    rng.set_stream(index as u64 + 1);
    let normal = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let floor = MIN_AREA_FRACTION * ref_area;
    // Measurement error drifts along a pullback (segmentation bias, cardiac
    // phase), so the noise is an AR(1) process rather than independent per
    // frame. The recursion keeps the marginal SD at noise_sd exactly, which
    // is what the benchmark quotes as its noise floor.
    let mut carry = 0.0;
    let innovation = (1.0 - NOISE_AR1 * NOISE_AR1).sqrt();
    let mut first = true;
    let post_areas: Vec<f64> = clean_areas
        .iter()
        .map(|&a| {
            let noisy = if noise_sd > 0.0 {
                let z = normal.sample(&mut rng);
                carry = if first { z } else { NOISE_AR1 * carry + innovation * z };
                first = false;
                a + carry
            } else {
                a
            };
            noisy.max(floor)
        })
        .collect();

    Ok(SynthLesion {
        sample: LesionSample {
            lesion_id: plan.lesion_id.clone(),
            patient_id: plan.patient_id.clone(),
            pre,
            stent_start: plan.lesion_start,
            post_areas,
            phenotype: Some(plan.phenotype),
        },
        ref_area_mm2: ref_area,
        noise_sd_mm2: noise_sd,
        clean_areas,
    })
}

/// Generates the whole dataset, parallel across lesions.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<SynthLesion>, SynthError> {
    validate(cfg)?;
    (0..cfg.n_lesions)
        .into_par_iter()
        .map(|i| generate_lesion(cfg, i))
        .collect()
}
