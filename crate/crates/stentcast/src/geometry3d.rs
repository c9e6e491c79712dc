//! Lesion-level volumetric descriptors.
//!
//! Frames between the lesion bounds form a voxel grid with in-plane spacing
//! `pixel_spacing_mm` and slice thickness `frame_pitch_mm`. Calcification
//! deposits are 26-connected components of that grid; convex volumes stack
//! per-frame 2D convex hulls (prismatic approximation), and surface areas
//! count exposed voxel faces, so a single voxel reports 2*(s^2 + 2*s*p).

use std::collections::HashMap;

use crate::geometry2d::{boundary_pixels, convex_hull, hull_pixel_count, GeometryError};
use crate::pullback::{FrameMask, Pullback, LABEL_CALC, LABEL_LUMEN};

/// Lumen volumetrics over the lesion range.
#[derive(Debug, Clone, PartialEq)]
pub struct LumenLesionFeatures {
    pub volume_mm3: f64,
    /// Diameter of the sphere of equal volume: (6V/pi)^(1/3).
    pub equiv_diameter_mm: f64,
    pub extent: f64,
    pub convex_volume_mm3: f64,
    pub solidity: f64,
    pub surface_area_mm2: f64,
}

/// Calcification volumetrics over the lesion range. Volume and surface cover
/// the union of deposits; shape fields cover the deposit with the longest
/// frame span. No calcification yields all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CalcLesionFeatures {
    pub volume_mm3: f64,
    /// Union volume divided by lesion length.
    pub volume_index_mm2: f64,
    /// Frame span of the longest deposit times the frame pitch.
    pub length_mm: f64,
    pub equiv_diameter_mm: f64,
    pub extent: f64,
    pub convex_volume_mm3: f64,
    pub solidity: f64,
    pub surface_area_mm2: f64,
    pub num_deposits: usize,
    /// Percent of lesion frames containing any calcification.
    pub calc_pct: f64,
}

impl CalcLesionFeatures {
    pub fn absent() -> Self {
        CalcLesionFeatures {
            volume_mm3: 0.0,
            volume_index_mm2: 0.0,
            length_mm: 0.0,
            equiv_diameter_mm: 0.0,
            extent: 0.0,
            convex_volume_mm3: 0.0,
            solidity: 0.0,
            surface_area_mm2: 0.0,
            num_deposits: 0,
            calc_pct: 0.0,
        }
    }
}

fn equiv_diameter(volume: f64) -> f64 {
    (6.0 * volume / std::f64::consts::PI).cbrt()
}

/// Exposed-face surface area of `label` voxels across the lesion frames.
/// Neighbors outside the lesion range count as absent: the lesion bounds
/// delimit the analysis volume.
fn surface_area(frames: &[&FrameMask], s: f64, p: f64) -> SurfaceAccumulator {
    let mut acc = SurfaceAccumulator::default();
    let side = s * p;
    let cap = s * s;
    let (w, h) = (frames[0].width(), frames[0].height());
    for (fi, frame) in frames.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if frame.get(x, y) == 0 {
                    continue;
                }
                if x == 0 || frames[fi].get(x - 1, y) == 0 {
                    acc.area += side;
                }
                if x == w - 1 || frames[fi].get(x + 1, y) == 0 {
                    acc.area += side;
                }
                if y == 0 || frames[fi].get(x, y - 1) == 0 {
                    acc.area += side;
                }
                if y == h - 1 || frames[fi].get(x, y + 1) == 0 {
                    acc.area += side;
                }
                if fi == 0 || frames[fi - 1].get(x, y) == 0 {
                    acc.area += cap;
                }
                if fi + 1 == frames.len() || frames[fi + 1].get(x, y) == 0 {
                    acc.area += cap;
                }
                acc.count += 1;
            }
        }
    }
    acc
}

#[derive(Default)]
struct SurfaceAccumulator {
    area: f64,
    count: usize,
}

/// Binary per-frame views of one label, restricted to the lesion range.
fn label_views(pb: &Pullback, label: u8) -> Vec<FrameMask> {
    let m = &pb.meta;
    (m.lesion_start_frame..=m.lesion_end_frame)
        .map(|fi| {
            let src = &pb.frames[fi];
            let mut out = FrameMask::new(src.width(), src.height());
            for y in 0..src.height() {
                for x in 0..src.width() {
                    if src.get(x, y) == label {
                        out.set(x, y, 1);
                    }
                }
            }
            out
        })
        .collect()
}

/// Prismatic convex volume: per-frame rasterized hull counts, stacked.
fn stacked_hull_voxels(per_frame: &HashMap<usize, Vec<(usize, usize)>>) -> usize {
    let mut total = 0;
    for pixels in per_frame.values() {
        let hull = convex_hull(pixels);
        let mut bbox = (usize::MAX, usize::MAX, 0usize, 0usize);
        for &(x, y) in pixels {
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
        total += hull_pixel_count(&hull, bbox).max(pixels.len());
    }
    total
}

pub fn compute_lumen_lesion_features(pb: &Pullback) -> Result<LumenLesionFeatures, GeometryError> {
    let m = &pb.meta;
    let s = m.pixel_spacing_mm;
    let p = m.frame_pitch_mm;
    let views = label_views(pb, LABEL_LUMEN);
    let refs: Vec<&FrameMask> = views.iter().collect();
    let surf = surface_area(&refs, s, p);
    if surf.count == 0 {
        return Err(GeometryError::EmptyLumen(m.lesion_start_frame));
    }
    let voxel = s * s * p;
    let volume = surf.count as f64 * voxel;

    let mut bbox = (usize::MAX, usize::MAX, 0usize, 0usize);
    let mut hulls: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    let mut first_frame = usize::MAX;
    let mut last_frame = 0usize;
    for (fi, view) in views.iter().enumerate() {
        let boundary = boundary_pixels(view, 1);
        if boundary.is_empty() {
            continue;
        }
        first_frame = first_frame.min(fi);
        last_frame = last_frame.max(fi);
        for &(x, y) in &boundary {
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
        hulls.insert(fi, boundary);
    }
    let bbox_volume = (bbox.2 - bbox.0 + 1) as f64
        * (bbox.3 - bbox.1 + 1) as f64
        * (last_frame - first_frame + 1) as f64
        * voxel;
    let convex_volume = stacked_hull_voxels(&hulls) as f64 * voxel;

    Ok(LumenLesionFeatures {
        volume_mm3: volume,
        equiv_diameter_mm: equiv_diameter(volume),
        extent: volume / bbox_volume,
        convex_volume_mm3: convex_volume,
        solidity: volume / convex_volume,
        surface_area_mm2: surf.area,
    })
}

pub fn compute_calc_lesion_features(pb: &Pullback) -> CalcLesionFeatures {
    let m = &pb.meta;
    let s = m.pixel_spacing_mm;
    let p = m.frame_pitch_mm;
    let lesion_frames = m.lesion_end_frame - m.lesion_start_frame + 1;
    let views = label_views(pb, LABEL_CALC);
    let deposits = deposits_26(&views);
    if deposits.is_empty() {
        return CalcLesionFeatures::absent();
    }

    let voxel = s * s * p;
    let total_voxels: usize = deposits.iter().map(|d| d.voxels.len()).sum();
    let volume = total_voxels as f64 * voxel;
    let refs: Vec<&FrameMask> = views.iter().collect();
    let surf = surface_area(&refs, s, p);

    let frames_with_calc = views.iter().filter(|v| v.labels().iter().any(|&b| b != 0)).count();

    // Longest frame span wins; ties go to the larger deposit, then the one
    // starting earliest, keeping the choice deterministic.
    let longest = deposits
        .iter()
        .max_by_key(|d| (d.frame_span(), d.voxels.len(), std::cmp::Reverse(d.min_frame)))
        .expect("deposits are nonempty");

    let mut bbox = (usize::MAX, usize::MAX, 0usize, 0usize);
    let mut per_frame: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for &(f, x, y) in &longest.voxels {
        bbox.0 = bbox.0.min(x);
        bbox.1 = bbox.1.min(y);
        bbox.2 = bbox.2.max(x);
        bbox.3 = bbox.3.max(y);
        per_frame.entry(f).or_default().push((x, y));
    }
    let longest_volume = longest.voxels.len() as f64 * voxel;
    let bbox_volume = (bbox.2 - bbox.0 + 1) as f64
        * (bbox.3 - bbox.1 + 1) as f64
        * longest.frame_span() as f64
        * voxel;
    let convex_volume = stacked_hull_voxels(&per_frame) as f64 * voxel;

    CalcLesionFeatures {
        volume_mm3: volume,
        volume_index_mm2: volume / (lesion_frames as f64 * p),
        length_mm: longest.frame_span() as f64 * p,
        equiv_diameter_mm: equiv_diameter(longest_volume),
        extent: longest_volume / bbox_volume,
        convex_volume_mm3: convex_volume,
        solidity: longest_volume / convex_volume,
        surface_area_mm2: surf.area,
        num_deposits: deposits.len(),
        calc_pct: 100.0 * frames_with_calc as f64 / lesion_frames as f64,
    }
}

struct Deposit {
    voxels: Vec<(usize, usize, usize)>, // (frame, x, y)
    min_frame: usize,
    max_frame: usize,
}

impl Deposit {
    fn frame_span(&self) -> usize {
        self.max_frame - self.min_frame + 1
    }
}

/// 26-connected components: 8-connected in-plane labels unioned across
/// consecutive frames wherever voxels touch within a Moore neighborhood.
fn deposits_26(views: &[FrameMask]) -> Vec<Deposit> {
    let (w, h) = (views[0].width(), views[0].height());

    // Per-frame 2D labels, offset into a global id space.
    let mut frame_labels: Vec<Vec<u32>> = Vec::with_capacity(views.len());
    let mut next_id = 0u32;
    for view in views {
        let mut labels = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                if view.get(x, y) == 0 || labels[y * w + x] != 0 {
                    continue;
                }
                next_id += 1;
                let id = next_id;
                let mut stack = vec![(x, y)];
                labels[y * w + x] = id;
                while let Some((px, py)) = stack.pop() {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let nx = px as i64 + dx;
                            let ny = py as i64 + dy;
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            if view.get(nx, ny) != 0 && labels[ny * w + nx] == 0 {
                                labels[ny * w + nx] = id;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
        frame_labels.push(labels);
    }
    if next_id == 0 {
        return Vec::new();
    }

    // Union-find over 2D component ids.
    let mut parent: Vec<u32> = (0..=next_id).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for fi in 1..views.len() {
        let (below, here) = (&frame_labels[fi - 1], &frame_labels[fi]);
        for y in 0..h {
            for x in 0..w {
                let id = here[y * w + x];
                if id == 0 {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let other = below[ny as usize * w + nx as usize];
                        if other != 0 {
                            let (ra, rb) = (find(&mut parent, id), find(&mut parent, other));
                            if ra != rb {
                                parent[ra.max(rb) as usize] = ra.min(rb);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut by_root: HashMap<u32, Deposit> = HashMap::new();
    for (fi, labels) in frame_labels.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let id = labels[y * w + x];
                if id == 0 {
                    continue;
                }
                let root = find(&mut parent, id);
                let d = by_root.entry(root).or_insert(Deposit {
                    voxels: Vec::new(),
                    min_frame: fi,
                    max_frame: fi,
                });
                d.voxels.push((fi, x, y));
                d.min_frame = d.min_frame.min(fi);
                d.max_frame = d.max_frame.max(fi);
            }
        }
    }
    let mut deposits: Vec<Deposit> = by_root.into_values().collect();
    deposits.sort_by_key(|d| (d.min_frame, d.voxels[0].1, d.voxels[0].2));
    deposits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pullback::{Phase, PullbackMeta};

    fn pullback_of(frames: Vec<FrameMask>, lesion: (usize, usize)) -> Pullback {
        let count = frames.len();
        Pullback {
            meta: PullbackMeta {
                pullback_id: "t".into(),
                patient_id: "p".into(),
                phase: Phase::Pre,
                frame_count: count,
                frame_pitch_mm: 0.2,
                pixel_spacing_mm: 0.01,
                lesion_start_frame: lesion.0,
                lesion_end_frame: lesion.1,
                stent_start_frame: None,
                stent_end_frame: None,
                phenotype: None,
            },
            frames,
        }
    }

    fn disc_frame(size: usize, r: f64, label: u8) -> FrameMask {
        let mut f = FrameMask::new(size, size);
        let c = (size as f64 - 1.0) / 2.0;
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                if dx * dx + dy * dy <= r * r {
                    f.set(x, y, label);
                }
            }
        }
        f
    }

    #[test]
    fn stacked_discs_volume_is_exact() {
        let frames: Vec<FrameMask> = (0..10).map(|_| disc_frame(64, 20.0, LABEL_LUMEN)).collect();
        let area_mm2 = frames[0].count_label(LABEL_LUMEN) as f64 * 0.01 * 0.01;
        let pb = pullback_of(frames, (0, 9));
        let f = compute_lumen_lesion_features(&pb).unwrap();
        assert!((f.volume_mm3 - 2.0 * area_mm2).abs() < 1e-12, "volume {}", f.volume_mm3);
        assert!(f.solidity > 0.97 && f.solidity <= 1.0 + 1e-9);
        assert!(f.extent > 0.5 && f.extent <= 1.0);
        let d = f.equiv_diameter_mm;
        assert!((d.powi(3) * std::f64::consts::PI / 6.0 - f.volume_mm3).abs() < 1e-12);
    }

    #[test]
    fn single_voxel_surface_area() {
        let mut only = disc_frame(16, 3.0, LABEL_LUMEN);
        only.set(0, 0, LABEL_CALC);
        let pb = pullback_of(vec![only], (0, 0));
        let f = compute_calc_lesion_features(&pb);
        let (s, p) = (0.01, 0.2);
        let expected = 2.0 * (s * s + 2.0 * s * p);
        assert!((f.surface_area_mm2 - expected).abs() < 1e-15, "surface {}", f.surface_area_mm2);
        assert_eq!(f.num_deposits, 1);
        assert_eq!(f.solidity, 1.0);
    }

    #[test]
    fn deposit_span_sets_length() {
        // Calc on frames 10..=19 of a 50-frame lesion.
        let frames: Vec<FrameMask> = (0..50)
            .map(|i| {
                let mut f = disc_frame(32, 8.0, LABEL_LUMEN);
                if (10..=19).contains(&i) {
                    f.set(28, 16, LABEL_CALC);
                    f.set(29, 16, LABEL_CALC);
                }
                f
            })
            .collect();
        let pb = pullback_of(frames, (0, 49));
        let f = compute_calc_lesion_features(&pb);
        assert!((f.length_mm - 2.0).abs() < 1e-12, "length {}", f.length_mm);
        assert_eq!(f.num_deposits, 1);
        assert!((f.calc_pct - 20.0).abs() < 1e-12, "calc_pct {}", f.calc_pct);
        // volume_index = volume / (50 frames * 0.2 mm)
        let volume = 20.0 * 0.01 * 0.01 * 0.2;
        assert!((f.volume_mm3 - volume).abs() < 1e-15);
        assert!((f.volume_index_mm2 - volume / 10.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_contact_joins_deposits() {
        let mut a = disc_frame(16, 4.0, LABEL_LUMEN);
        a.set(12, 12, LABEL_CALC);
        let mut b = disc_frame(16, 4.0, LABEL_LUMEN);
        b.set(13, 13, LABEL_CALC); // diagonal in-plane offset, next frame
        let pb = pullback_of(vec![a, b], (0, 1));
        let f = compute_calc_lesion_features(&pb);
        assert_eq!(f.num_deposits, 1);
        assert!((f.length_mm - 0.4).abs() < 1e-12);
    }

    #[test]
    fn separated_voxels_stay_apart() {
        let mut a = disc_frame(16, 4.0, LABEL_LUMEN);
        a.set(12, 12, LABEL_CALC);
        let mut b = disc_frame(16, 4.0, LABEL_LUMEN);
        b.set(1, 1, LABEL_CALC);
        let pb = pullback_of(vec![a, b], (0, 1));
        let f = compute_calc_lesion_features(&pb);
        assert_eq!(f.num_deposits, 2);
    }

    #[test]
    fn no_calc_is_all_zeros() {
        let pb = pullback_of(vec![disc_frame(16, 4.0, LABEL_LUMEN)], (0, 0));
        let f = compute_calc_lesion_features(&pb);
        assert_eq!(f, CalcLesionFeatures::absent());
    }

    #[test]
    fn lesion_bounds_limit_the_volume() {
        let frames: Vec<FrameMask> = (0..10).map(|_| disc_frame(32, 8.0, LABEL_LUMEN)).collect();
        let area = frames[0].count_label(LABEL_LUMEN) as f64 * 0.01 * 0.01;
        let pb = pullback_of(frames, (2, 6));
        let f = compute_lumen_lesion_features(&pb).unwrap();
        assert!((f.volume_mm3 - 5.0 * 0.2 * area).abs() < 1e-12);
    }
}
