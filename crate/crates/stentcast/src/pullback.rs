//! Pullback containers and the on-disk mask format.
//!
//! A pullback is a directory holding `meta.txt` (one `key=value` pair per
//! line, keys named after [`PullbackMeta`] fields) plus one binary PGM (P5,
//! maxval 255) file per frame, named `frame_0000.pgm`, `frame_0001.pgm`, ...
//! Pixel labels are 0 = background, 1 = lumen, 2 = calcification.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_LUMEN: u8 = 1;
pub const LABEL_CALC: u8 = 2;

#[derive(Debug, Error)]
pub enum PullbackError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("meta.txt: missing field `{0}`")]
    MissingField(&'static str),
    #[error("meta.txt: unknown field `{0}`")]
    UnknownField(String),
    #[error("meta.txt: bad value `{value}` for field `{field}`")]
    BadField { field: &'static str, value: String },
    #[error("frame {frame}: {reason}")]
    BadFrame { frame: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

impl PullbackError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        PullbackError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Pre => write!(f, "pre"),
            Phase::Post => write!(f, "post"),
        }
    }
}

impl FromStr for Phase {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "pre" => Ok(Phase::Pre),
            "post" => Ok(Phase::Post),
            _ => Err(()),
        }
    }
}

/// Dominant calcification phenotype of a lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phenotype {
    Nodule,
    Protrusion,
    Sheet,
}

pub const PHENOTYPES: [Phenotype; 3] = [Phenotype::Nodule, Phenotype::Protrusion, Phenotype::Sheet];

impl fmt::Display for Phenotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phenotype::Nodule => write!(f, "nodule"),
            Phenotype::Protrusion => write!(f, "protrusion"),
            Phenotype::Sheet => write!(f, "sheet"),
        }
    }
}

impl FromStr for Phenotype {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "nodule" => Ok(Phenotype::Nodule),
            "protrusion" => Ok(Phenotype::Protrusion),
            "sheet" => Ok(Phenotype::Sheet),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackMeta {
    pub pullback_id: String,
    pub patient_id: String,
    pub phase: Phase,
    pub frame_count: usize,
    pub frame_pitch_mm: f64,
    pub pixel_spacing_mm: f64,
    pub lesion_start_frame: usize,
    pub lesion_end_frame: usize,
    /// Stented span; required for post pullbacks, absent before stenting.
    pub stent_start_frame: Option<usize>,
    pub stent_end_frame: Option<usize>,
    pub phenotype: Option<Phenotype>,
}

/// One frame of labeled pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl FrameMask {
    pub fn new(width: usize, height: usize) -> Self {
        FrameMask { width, height, labels: vec![LABEL_BACKGROUND; width * height] }
    }

    /// Builds a mask from raw labels; rejects anything outside {0, 1, 2}.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, PullbackError> {
        if labels.len() != width * height {
            return Err(PullbackError::Invalid(format!(
                "label buffer holds {} values, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        if let Some(bad) = labels.iter().find(|&&v| v > LABEL_CALC) {
            return Err(PullbackError::Invalid(format!("label {bad} outside {{0, 1, 2}}")));
        }
        Ok(FrameMask { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        debug_assert!(label <= LABEL_CALC);
        self.labels[y * self.width + x] = label;
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&v| v == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pullback {
    pub meta: PullbackMeta,
    pub frames: Vec<FrameMask>,
}

impl Pullback {
    /// Structural invariants shared by loads, saves, and alignment outputs.
    pub fn validate(&self) -> Result<(), PullbackError> {
        let m = &self.meta;
        if !(m.frame_pitch_mm > 0.0) {
            return Err(PullbackError::BadField {
                field: "frame_pitch_mm",
                value: m.frame_pitch_mm.to_string(),
            });
        }
        if !(m.pixel_spacing_mm > 0.0) {
            return Err(PullbackError::BadField {
                field: "pixel_spacing_mm",
                value: m.pixel_spacing_mm.to_string(),
            });
        }
        if self.frames.len() != m.frame_count {
            return Err(PullbackError::Invalid(format!(
                "frame_count={} but {} frames present",
                m.frame_count,
                self.frames.len()
            )));
        }
        if m.frame_count == 0 {
            return Err(PullbackError::Invalid("pullback holds no frames".into()));
        }
        if m.lesion_start_frame > m.lesion_end_frame || m.lesion_end_frame >= m.frame_count {
            return Err(PullbackError::Invalid(format!(
                "lesion range [{}, {}] outside 0..{}",
                m.lesion_start_frame, m.lesion_end_frame, m.frame_count
            )));
        }
        match (m.stent_start_frame, m.stent_end_frame) {
            (Some(s), Some(e)) => {
                if s > e || e >= m.frame_count {
                    return Err(PullbackError::Invalid(format!(
                        "stent range [{s}, {e}] outside 0..{}",
                        m.frame_count
                    )));
                }
            }
            (None, None) => {
                if m.phase == Phase::Post {
                    return Err(PullbackError::MissingField("stent_start_frame"));
                }
            }
            _ => {
                return Err(PullbackError::Invalid(
                    "stent_start_frame and stent_end_frame must both be present or both absent"
                        .into(),
                ))
            }
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        for (i, f) in self.frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(PullbackError::BadFrame {
                    frame: i,
                    reason: format!("size {}x{} differs from {}x{}", f.width, f.height, w, h),
                });
            }
        }
        for i in m.lesion_start_frame..=m.lesion_end_frame {
            if self.frames[i].count_label(LABEL_LUMEN) == 0 {
                return Err(PullbackError::BadFrame {
                    frame: i,
                    reason: "lesion frame has no lumen pixels".into(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// meta.txt

const META_FIELDS: [&str; 11] = [
    "pullback_id",
    "patient_id",
    "phase",
    "frame_count",
    "frame_pitch_mm",
    "pixel_spacing_mm",
    "lesion_start_frame",
    "lesion_end_frame",
    "stent_start_frame",
    "stent_end_frame",
    "phenotype",
];

fn meta_to_string(m: &PullbackMeta) -> String {
    let mut out = String::new();
    out.push_str(&format!("pullback_id={}\n", m.pullback_id));
    out.push_str(&format!("patient_id={}\n", m.patient_id));
    out.push_str(&format!("phase={}\n", m.phase));
    out.push_str(&format!("frame_count={}\n", m.frame_count));
    out.push_str(&format!("frame_pitch_mm={}\n", m.frame_pitch_mm));
    out.push_str(&format!("pixel_spacing_mm={}\n", m.pixel_spacing_mm));
    out.push_str(&format!("lesion_start_frame={}\n", m.lesion_start_frame));
    out.push_str(&format!("lesion_end_frame={}\n", m.lesion_end_frame));
    if let Some(v) = m.stent_start_frame {
        out.push_str(&format!("stent_start_frame={v}\n"));
    }
    if let Some(v) = m.stent_end_frame {
        out.push_str(&format!("stent_end_frame={v}\n"));
    }
    if let Some(v) = m.phenotype {
        out.push_str(&format!("phenotype={v}\n"));
    }
    out
}

fn parse_meta(text: &str) -> Result<PullbackMeta, PullbackError> {
    let mut fields: HashMap<&str, String> = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| PullbackError::Invalid(format!("meta.txt line without `=`: {line}")))?;
        let key = key.trim();
        let slot = META_FIELDS
            .iter()
            .find(|&&f| f == key)
            .ok_or_else(|| PullbackError::UnknownField(key.to_string()))?;
        fields.insert(slot, value.trim().to_string());
    }

    fn required<'a>(
        fields: &'a HashMap<&str, String>,
        key: &'static str,
    ) -> Result<&'a str, PullbackError> {
        fields.get(key).map(|s| s.as_str()).ok_or(PullbackError::MissingField(key))
    }
    fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T, PullbackError> {
        value
            .parse()
            .map_err(|_| PullbackError::BadField { field: key, value: value.to_string() })
    }
    fn optional<T: FromStr>(
        fields: &HashMap<&str, String>,
        key: &'static str,
    ) -> Result<Option<T>, PullbackError> {
        fields.get(key).map(|v| parse(key, v)).transpose()
    }

    Ok(PullbackMeta {
        pullback_id: required(&fields, "pullback_id")?.to_string(),
        patient_id: required(&fields, "patient_id")?.to_string(),
        phase: parse("phase", required(&fields, "phase")?)?,
        frame_count: parse("frame_count", required(&fields, "frame_count")?)?,
        frame_pitch_mm: parse("frame_pitch_mm", required(&fields, "frame_pitch_mm")?)?,
        pixel_spacing_mm: parse("pixel_spacing_mm", required(&fields, "pixel_spacing_mm")?)?,
        lesion_start_frame: parse("lesion_start_frame", required(&fields, "lesion_start_frame")?)?,
        lesion_end_frame: parse("lesion_end_frame", required(&fields, "lesion_end_frame")?)?,
        stent_start_frame: optional(&fields, "stent_start_frame")?,
        stent_end_frame: optional(&fields, "stent_end_frame")?,
        phenotype: optional(&fields, "phenotype")?,
    })
}

// ---------------------------------------------------------------------------
// PGM (P5)

fn write_pgm(path: &Path, mask: &FrameMask) -> Result<(), PullbackError> {
    let file = fs::File::create(path).map_err(|e| PullbackError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("P5\n{} {}\n255\n", mask.width, mask.height);
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&mask.labels))
        .map_err(|e| PullbackError::io(path, e))
}

fn read_pgm(path: &Path) -> Result<FrameMask, PullbackError> {
    let bytes = fs::read(path).map_err(|e| PullbackError::io(path, e))?;
    let bad = |reason: &str| PullbackError::Invalid(format!("{}: {reason}", path.display()));

    // Header tokens are separated by whitespace; `#` starts a comment that
    // runs to end of line. The raster begins after exactly one whitespace
    // byte following the maxval token.
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Option<(usize, usize)> {
        let mut i = pos;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            break;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        pos = i;
        Some((start, i))
    };

    let magic = next_token(&bytes).ok_or_else(|| bad("truncated header"))?;
    if &bytes[magic.0..magic.1] != b"P5" {
        return Err(bad("not a binary PGM (P5) file"));
    }
    let mut dims = [0usize; 3];
    for slot in dims.iter_mut() {
        let (s, e) = next_token(&bytes).ok_or_else(|| bad("truncated header"))?;
        *slot = std::str::from_utf8(&bytes[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("malformed header token"))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let raster_start = pos + 1; // single whitespace byte after maxval
    let expected = width * height;
    if bytes.len() < raster_start + expected {
        return Err(bad("raster shorter than width*height"));
    }
    let labels = bytes[raster_start..raster_start + expected].to_vec();
    FrameMask::from_labels(width, height, labels)
        .map_err(|e| PullbackError::Invalid(format!("{}: {e}", path.display())))
}

fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.pgm")
}

// ---------------------------------------------------------------------------
// Directory load/save

pub fn save_pullback(pb: &Pullback, dir: &Path) -> Result<(), PullbackError> {
    pb.validate()?;
    fs::create_dir_all(dir).map_err(|e| PullbackError::io(dir, e))?;
    let meta_path = dir.join("meta.txt");
    fs::write(&meta_path, meta_to_string(&pb.meta)).map_err(|e| PullbackError::io(&meta_path, e))?;
    for (i, frame) in pb.frames.iter().enumerate() {
        write_pgm(&dir.join(frame_file_name(i)), frame)?;
    }
    Ok(())
}

pub fn load_pullback(dir: &Path) -> Result<Pullback, PullbackError> {
    let meta_path = dir.join("meta.txt");
    let text = fs::read_to_string(&meta_path).map_err(|e| PullbackError::io(&meta_path, e))?;
    let meta = parse_meta(&text)?;
    let mut frames = Vec::with_capacity(meta.frame_count);
    for i in 0..meta.frame_count {
        let path = dir.join(frame_file_name(i));
        if !path.exists() {
            return Err(PullbackError::BadFrame {
                frame: i,
                reason: format!("missing file {}", path.display()),
            });
        }
        frames
            .push(read_pgm(&path).map_err(|e| PullbackError::BadFrame { frame: i, reason: e.to_string() })?);
    }
    if dir.join(frame_file_name(meta.frame_count)).exists() {
        return Err(PullbackError::Invalid(format!(
            "extra frame file beyond frame_count={}",
            meta.frame_count
        )));
    }
    let pb = Pullback { meta, frames };
    pb.validate()?;
    Ok(pb)
}

// ---------------------------------------------------------------------------
// Pair validation and registration

/// Landmark-derived rigid transform taking post frames into pre coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationTransform {
    pub z_offset_frames: i64,
    pub rotation_deg: f64,
}

/// Non-panicking pre/post consistency report; empty `violations` means the
/// pair is usable.
#[derive(Debug, Clone, Default)]
pub struct PairReport {
    pub violations: Vec<String>,
}

impl PairReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_pair(pre: &Pullback, post: &Pullback) -> PairReport {
    let mut violations = Vec::new();
    if pre.meta.phase != Phase::Pre {
        violations.push(format!("pre pullback {} has phase {}", pre.meta.pullback_id, pre.meta.phase));
    }
    if post.meta.phase != Phase::Post {
        violations.push(format!("post pullback {} has phase {}", post.meta.pullback_id, post.meta.phase));
    }
    if pre.meta.pixel_spacing_mm != post.meta.pixel_spacing_mm {
        violations.push(format!(
            "pixel spacing differs: {} vs {}",
            pre.meta.pixel_spacing_mm, post.meta.pixel_spacing_mm
        ));
    }
    if pre.meta.frame_pitch_mm != post.meta.frame_pitch_mm {
        violations.push(format!(
            "frame pitch differs: {} vs {}",
            pre.meta.frame_pitch_mm, post.meta.frame_pitch_mm
        ));
    }
    if pre.meta.patient_id != post.meta.patient_id {
        violations.push(format!(
            "patient differs: {} vs {}",
            pre.meta.patient_id, post.meta.patient_id
        ));
    }
    if post.meta.stent_start_frame.is_none() || post.meta.stent_end_frame.is_none() {
        violations.push("post pullback lacks stent bounds".into());
    }
    violations.sort();
    PairReport { violations }
}

/// Reindexes and rotates a post pullback into pre coordinates.
///
/// Output frame `i` holds input frame `i + z_offset_frames`: a positive
/// offset drops leading frames, a negative one drops trailing frames, and
/// lesion/stent bounds shift with the surviving range.
pub fn align_post_to_pre(
    post: &Pullback,
    t: &RegistrationTransform,
) -> Result<Pullback, PullbackError> {
    post.validate()?;
    let n = post.frames.len() as i64;
    let z = t.z_offset_frames;
    if z.abs() >= n {
        return Err(PullbackError::Invalid(format!(
            "z offset {z} leaves no frames of {n}"
        )));
    }
    let (first, last) = if z >= 0 { (z, n) } else { (0, n + z) };
    let shift = z.max(0) as usize;
    let new_count = (last - first) as usize;

    let map_bound = |b: usize, name: &str| -> Result<usize, PullbackError> {
        let shifted = b as i64 - shift as i64;
        if shifted < 0 {
            return Err(PullbackError::Invalid(format!(
                "alignment drops {name} frame {b}"
            )));
        }
        Ok((shifted as usize).min(new_count - 1))
    };

    let mut meta = post.meta.clone();
    meta.frame_count = new_count;
    meta.lesion_start_frame = map_bound(post.meta.lesion_start_frame, "lesion_start")
        .unwrap_or(0);
    meta.lesion_end_frame = map_bound(post.meta.lesion_end_frame, "lesion_end")?;
    meta.stent_start_frame = match post.meta.stent_start_frame {
        Some(b) => Some(map_bound(b, "stent_start").unwrap_or(0)),
        None => None,
    };
    meta.stent_end_frame = match post.meta.stent_end_frame {
        Some(b) => Some(map_bound(b, "stent_end")?),
        None => None,
    };

    let frames: Vec<FrameMask> = (first..last)
        .map(|i| rotate_mask(&post.frames[i as usize], t.rotation_deg))
        .collect();
    let aligned = Pullback { meta, frames };
    aligned.validate()?;
    Ok(aligned)
}

/// Nearest-neighbor rotation about the image center ((w-1)/2, (h-1)/2).
/// Positive angles take a pixel at (cx+r, cy) toward (cx, cy+r).
fn rotate_mask(mask: &FrameMask, rotation_deg: f64) -> FrameMask {
    if rotation_deg == 0.0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let theta = rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = FrameMask::new(w, h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // Inverse transform: sample the source pixel that lands here.
            let sx = (cx + dx * cos + dy * sin).round();
            let sy = (cy - dx * sin + dy * cos).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                out.set(x, y, mask.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_pullback(phase: Phase) -> Pullback {
        let mut frames = Vec::new();
        for i in 0..10 {
            let mut f = FrameMask::new(16, 16);
            // Lumen block plus one calc pixel that moves with the frame index
            // so frames are distinguishable.
            for y in 6..10 {
                for x in 6..10 {
                    f.set(x, y, LABEL_LUMEN);
                }
            }
            f.set(2 + (i % 8), 2, LABEL_CALC);
            frames.push(f);
        }
        let stent = if phase == Phase::Post { Some(3) } else { None };
        Pullback {
            meta: PullbackMeta {
                pullback_id: format!("pb_{phase}"),
                patient_id: "P001".into(),
                phase,
                frame_count: 10,
                frame_pitch_mm: 0.2,
                pixel_spacing_mm: 0.01,
                lesion_start_frame: 2,
                lesion_end_frame: 8,
                stent_start_frame: stent,
                stent_end_frame: stent.map(|s| s + 4),
                phenotype: Some(Phenotype::Sheet),
            },
            frames,
        }
    }

    #[test]
    fn round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let pb = small_pullback(Phase::Post);
        save_pullback(&pb, dir.path()).unwrap();
        let loaded = load_pullback(dir.path()).unwrap();
        assert_eq!(pb, loaded);
    }

    #[test]
    fn missing_frame_file_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let pb = small_pullback(Phase::Pre);
        save_pullback(&pb, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frame_0004.pgm")).unwrap();
        let err = load_pullback(dir.path()).unwrap_err();
        assert!(matches!(err, PullbackError::BadFrame { frame: 4, .. }), "{err}");
    }

    #[test]
    fn extra_frame_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pb = small_pullback(Phase::Pre);
        save_pullback(&pb, dir.path()).unwrap();
        fs::copy(dir.path().join("frame_0000.pgm"), dir.path().join("frame_0010.pgm")).unwrap();
        assert!(matches!(load_pullback(dir.path()), Err(PullbackError::Invalid(_))));
    }

    #[test]
    fn labels_above_two_rejected() {
        let err = FrameMask::from_labels(2, 1, vec![1, 3]).unwrap_err();
        assert!(err.to_string().contains("label 3"));
    }

    #[test]
    fn post_requires_stent_bounds() {
        let mut pb = small_pullback(Phase::Post);
        pb.meta.stent_start_frame = None;
        pb.meta.stent_end_frame = None;
        assert!(matches!(pb.validate(), Err(PullbackError::MissingField(_))));
    }

    #[test]
    fn empty_lumen_in_lesion_names_frame() {
        let mut pb = small_pullback(Phase::Pre);
        pb.frames[5] = FrameMask::new(16, 16);
        let err = pb.validate().unwrap_err();
        assert!(matches!(err, PullbackError::BadFrame { frame: 5, .. }));
    }

    #[test]
    fn unknown_meta_field_rejected() {
        assert!(matches!(
            parse_meta("pullback_id=x\nbogus=1"),
            Err(PullbackError::UnknownField(_))
        ));
    }

    #[test]
    fn pair_report_flags_mismatched_spacing() {
        let pre = small_pullback(Phase::Pre);
        let mut post = small_pullback(Phase::Post);
        post.meta.pixel_spacing_mm = 0.02;
        let report = validate_pair(&pre, &post);
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.contains("pixel spacing")));
        assert!(validate_pair(&pre, &small_pullback(Phase::Post)).is_ok());
    }

    #[test]
    fn positive_offset_drops_leading_frames() {
        let post = small_pullback(Phase::Post);
        let t = RegistrationTransform { z_offset_frames: 3, rotation_deg: 0.0 };
        let aligned = align_post_to_pre(&post, &t).unwrap();
        assert_eq!(aligned.frames.len(), 7);
        assert_eq!(aligned.frames[0], post.frames[3]);
        assert_eq!(aligned.meta.stent_start_frame, Some(0));
        assert_eq!(aligned.meta.stent_end_frame, Some(4));
    }

    #[test]
    fn negative_offset_drops_trailing_frames() {
        let post = small_pullback(Phase::Post);
        let t = RegistrationTransform { z_offset_frames: -2, rotation_deg: 0.0 };
        let aligned = align_post_to_pre(&post, &t).unwrap();
        assert_eq!(aligned.frames.len(), 8);
        assert_eq!(aligned.frames[0], post.frames[0]);
        assert_eq!(aligned.meta.stent_end_frame, Some(7));
    }

    #[test]
    fn offset_composition_matches_single_shift() {
        let post = small_pullback(Phase::Post);
        let ab = align_post_to_pre(
            &align_post_to_pre(&post, &RegistrationTransform { z_offset_frames: 1, rotation_deg: 0.0 })
                .unwrap(),
            &RegistrationTransform { z_offset_frames: 2, rotation_deg: 0.0 },
        )
        .unwrap();
        let single =
            align_post_to_pre(&post, &RegistrationTransform { z_offset_frames: 3, rotation_deg: 0.0 })
                .unwrap();
        assert_eq!(ab.frames, single.frames);
    }

    #[test]
    fn excessive_offset_errors() {
        let post = small_pullback(Phase::Post);
        let t = RegistrationTransform { z_offset_frames: 10, rotation_deg: 0.0 };
        assert!(align_post_to_pre(&post, &t).is_err());
    }

    #[test]
    fn rotation_quarter_turn_moves_pixel() {
        let mut mask = FrameMask::new(41, 41);
        mask.set(30, 20, LABEL_LUMEN); // (cx + 10, cy)
        let rotated = rotate_mask(&mask, 90.0);
        assert_eq!(rotated.get(20, 30), LABEL_LUMEN); // (cx, cy + 10)
        assert_eq!(rotated.count_label(LABEL_LUMEN), 1);
    }

    #[test]
    fn rotation_preserves_label_set() {
        let pb = small_pullback(Phase::Post);
        let rotated = rotate_mask(&pb.frames[0], 37.0);
        assert!(rotated.labels().iter().all(|&v| v <= LABEL_CALC));
    }
}
