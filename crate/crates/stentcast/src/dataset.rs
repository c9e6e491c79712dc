//! Dataset directory layout shared by the generator, the trainers, and the
//! evaluation runner.
//!
//! ```text
//! dataset/
//!   truth.csv        lesion_id,frame,post_area_mm2,phenotype
//!   lesion_000/      one pullback directory per lesion (pre-stent masks)
//!   lesion_001/
//! ```
//!
//! Frames in `truth.csv` are the stented span, contiguous and ascending per
//! lesion. Lesions load one at a time so a large dataset never has to fit in
//! memory as masks.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::pullback::{load_pullback, save_pullback, Phenotype, Pullback, PullbackError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pullback(#[from] PullbackError),
    #[error("truth.csv line {line}: {reason}")]
    Truth { line: usize, reason: String },
    #[error("lesion {0} appears twice in truth.csv")]
    DuplicateLesion(String),
    #[error("dataset {0} has no lesions")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// One lesion: its pre-stent pullback and the post-stent ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSample {
    pub lesion_id: String,
    pub patient_id: String,
    pub pre: Pullback,
    /// First frame of the stented span.
    pub stent_start: usize,
    /// Ground-truth post-stent lumen areas, one per stented frame.
    pub post_areas: Vec<f64>,
    pub phenotype: Option<Phenotype>,
}

impl LesionSample {
    pub fn stent_end(&self) -> usize {
        self.stent_start + self.post_areas.len() - 1
    }
}

/// The ground-truth rows of one lesion as recorded in `truth.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthLesion {
    pub lesion_id: String,
    pub start_frame: usize,
    pub post_areas: Vec<f64>,
    pub phenotype: Option<Phenotype>,
}

/// Streaming writer: lesions are saved as they arrive, truth rows accumulate
/// and are flushed once by `finish`.
pub struct DatasetWriter {
    dir: PathBuf,
    rows: Vec<String>,
    seen: std::collections::HashSet<String>,
}

impl DatasetWriter {
    pub fn create(dir: &Path) -> Result<DatasetWriter, DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(DatasetWriter { dir: dir.to_path_buf(), rows: Vec::new(), seen: Default::default() })
    }

    pub fn add(&mut self, sample: &LesionSample) -> Result<(), DatasetError> {
        if !self.seen.insert(sample.lesion_id.clone()) {
            return Err(DatasetError::DuplicateLesion(sample.lesion_id.clone()));
        }
        save_pullback(&sample.pre, &self.dir.join(&sample.lesion_id))?;
        let phenotype =
            sample.phenotype.map(|p| p.to_string()).unwrap_or_else(|| "none".to_string());
        for (offset, area) in sample.post_areas.iter().enumerate() {
            self.rows.push(format!(
                "{},{},{},{}",
                sample.lesion_id,
                sample.stent_start + offset,
                area,
                phenotype
            ));
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), DatasetError> {
        let path = self.dir.join("truth.csv");
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        writeln!(f, "lesion_id,frame,post_area_mm2,phenotype").map_err(io_err(&path))?;
        for row in &self.rows {
            writeln!(f, "{row}").map_err(io_err(&path))?;
        }
        Ok(())
    }
}

pub fn write_dataset(dir: &Path, samples: &[LesionSample]) -> Result<(), DatasetError> {
    let mut w = DatasetWriter::create(dir)?;
    for s in samples {
        w.add(s)?;
    }
    w.finish()
}

/// Parses `truth.csv`, grouping rows into lesions in file order and checking
/// that each lesion's frames are contiguous and ascending.
pub fn load_truth(dir: &Path) -> Result<Vec<TruthLesion>, DatasetError> {
    let path = dir.join("truth.csv");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "lesion_id,frame,post_area_mm2,phenotype")) => {}
        Some((_, other)) => {
            return Err(DatasetError::Truth { line: 1, reason: format!("bad header {other:?}") })
        }
        None => return Err(DatasetError::Truth { line: 1, reason: "empty file".into() }),
    }
    let mut lesions: Vec<TruthLesion> = Vec::new();
    let mut finished: std::collections::HashSet<String> = Default::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fail = |reason: String| DatasetError::Truth { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(fail(format!("{} fields, expected 4", fields.len())));
        }
        let frame: usize =
            fields[1].parse().map_err(|_| fail(format!("bad frame {:?}", fields[1])))?;
        let area: f64 =
            fields[2].parse().map_err(|_| fail(format!("bad area {:?}", fields[2])))?;
        if !(area.is_finite() && area > 0.0) {
            return Err(fail(format!("non-positive area {area}")));
        }
        let phenotype = match fields[3] {
            "none" => None,
            other => Some(
                Phenotype::from_str(other)
                    .map_err(|_| fail(format!("unknown phenotype {other:?}")))?,
            ),
        };
        match lesions.last_mut() {
            Some(last) if last.lesion_id == fields[0] => {
                if frame != last.start_frame + last.post_areas.len() {
                    return Err(fail(format!(
                        "frame {frame} breaks the contiguous run of {}",
                        last.lesion_id
                    )));
                }
                if phenotype != last.phenotype {
                    return Err(fail(format!("phenotype changes within {}", last.lesion_id)));
                }
                last.post_areas.push(area);
            }
            _ => {
                if !finished.insert(fields[0].to_string()) {
                    return Err(DatasetError::DuplicateLesion(fields[0].to_string()));
                }
                lesions.push(TruthLesion {
                    lesion_id: fields[0].to_string(),
                    start_frame: frame,
                    post_areas: vec![area],
                    phenotype,
                });
            }
        }
    }
    if lesions.is_empty() {
        return Err(DatasetError::Empty(dir.to_path_buf()));
    }
    Ok(lesions)
}

/// Loads one lesion's pullback and pairs it with its truth rows.
pub fn load_sample(dir: &Path, truth: &TruthLesion) -> Result<LesionSample, DatasetError> {
    let pre = load_pullback(&dir.join(&truth.lesion_id))?;
    Ok(LesionSample {
        lesion_id: truth.lesion_id.clone(),
        patient_id: pre.meta.patient_id.clone(),
        stent_start: truth.start_frame,
        post_areas: truth.post_areas.clone(),
        phenotype: truth.phenotype.or(pre.meta.phenotype),
        pre,
    })
}

/// Loads every lesion into memory at once; prefer `load_truth` +
/// `load_sample` per lesion for large datasets.
pub fn load_dataset(dir: &Path) -> Result<Vec<LesionSample>, DatasetError> {
    load_truth(dir)?.iter().map(|t| load_sample(dir, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pullback::{FrameMask, Phase, PullbackMeta, LABEL_LUMEN};

    fn tiny_sample(id: &str, patient: &str) -> LesionSample {
        let mut frames = Vec::new();
        for _ in 0..4 {
            let mut m = FrameMask::new(8, 8);
            for y in 2..6 {
                for x in 2..6 {
                    m.set(x, y, LABEL_LUMEN);
                }
            }
            frames.push(m);
        }
        let meta = PullbackMeta {
            pullback_id: format!("{id}_pre"),
            patient_id: patient.to_string(),
            phase: Phase::Pre,
            frame_count: 4,
            frame_pitch_mm: 0.2,
            pixel_spacing_mm: 0.01,
            lesion_start_frame: 1,
            lesion_end_frame: 2,
            stent_start_frame: None,
            stent_end_frame: None,
            phenotype: Some(Phenotype::Sheet),
        };
        LesionSample {
            lesion_id: id.to_string(),
            patient_id: patient.to_string(),
            pre: Pullback { meta, frames },
            stent_start: 1,
            post_areas: vec![2.5, 2.75],
            phenotype: Some(Phenotype::Sheet),
        }
    }

    #[test]
    fn round_trip_preserves_samples() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![tiny_sample("lesion_000", "p0"), tiny_sample("lesion_001", "p1")];
        write_dataset(dir.path(), &samples).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(samples, back);
    }

    #[test]
    fn truth_rows_are_per_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[tiny_sample("lesion_000", "p0")]).unwrap();
        let text = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lesion_id,frame,post_area_mm2,phenotype");
        assert_eq!(lines[1], "lesion_000,1,2.5,sheet");
        assert_eq!(lines[2], "lesion_000,2,2.75,sheet");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn duplicate_lesions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::create(dir.path()).unwrap();
        w.add(&tiny_sample("lesion_000", "p0")).unwrap();
        assert!(matches!(
            w.add(&tiny_sample("lesion_000", "p1")),
            Err(DatasetError::DuplicateLesion(_))
        ));
    }

    #[test]
    fn gap_in_truth_frames_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[tiny_sample("lesion_000", "p0")]).unwrap();
        let path = dir.path().join("truth.csv");
        let text = fs::read_to_string(&path).unwrap().replace("lesion_000,2,", "lesion_000,3,");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_truth(dir.path()), Err(DatasetError::Truth { line: 3, .. })));
    }

    #[test]
    fn missing_truth_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_truth(dir.path()), Err(DatasetError::Io { .. })));
    }
}
