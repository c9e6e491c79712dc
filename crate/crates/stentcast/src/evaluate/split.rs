//! Patient-grouped data splits.
//!
//! Both splitters operate on whole patients so that no patient's lesions ever
//! straddle a train/validation boundary; 104 patients holding 110 lesions
//! would otherwise leak near-duplicate anatomy across folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Identity of one lesion for splitting purposes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LesionKey {
    pub lesion_id: String,
    pub patient_id: String,
}

/// Per-lesion fold indices, grouped by patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Parallel to the lesion list passed to the splitter.
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Lesion indices validating in fold `f`.
    pub fn validation_indices(&self, f: usize) -> Vec<usize> {
        self.fold_of.iter().enumerate().filter(|(_, &x)| x == f).map(|(i, _)| i).collect()
    }

    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        self.fold_of.iter().enumerate().filter(|(_, &x)| x != f).map(|(i, _)| i).collect()
    }
}

/// Distinct patients in first-seen order.
fn patients_of(lesions: &[LesionKey]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for l in lesions {
        if seen.insert(l.patient_id.as_str()) {
            out.push(l.patient_id.clone());
        }
    }
    out
}

/// Shuffles patients and deals them round-robin into `k` folds, then maps
/// each lesion to its patient's fold. Fold sizes differ by at most one
/// patient and every patient's lesions stay together.
pub fn split_grouped_kfold(
    lesions: &[LesionKey],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvalError> {
    if lesions.is_empty() {
        return Err(EvalError::NoLesions);
    }
    if k < 2 {
        return Err(EvalError::BadFoldCount(k));
    }
    let mut patients = patients_of(lesions);
    if patients.len() < k {
        return Err(EvalError::FewerPatientsThanFolds { patients: patients.len(), folds: k });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    patients.shuffle(&mut rng);
    let fold_of_patient: std::collections::HashMap<&str, usize> =
        patients.iter().enumerate().map(|(i, p)| (p.as_str(), i % k)).collect();
    let fold_of =
        lesions.iter().map(|l| fold_of_patient[l.patient_id.as_str()]).collect();
    Ok(FoldAssignment { k, fold_of })
}

/// Splits lesions into train and held-out sets by filling the training side
/// with whole shuffled patients. A patient is taken whenever their lesions
/// still fit under the target count `round(n * train_fraction)`, so the train
/// side lands exactly on the target whenever some patient combination can.
/// Returns (train indices, held-out indices) in original lesion order.
pub fn holdout_split(
    lesions: &[LesionKey],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if lesions.is_empty() {
        return Err(EvalError::NoLesions);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::BadFraction(train_fraction));
    }
    let target = (lesions.len() as f64 * train_fraction).round() as usize;
    let mut patients = patients_of(lesions);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x686f_6c64_6f75_74);
    patients.shuffle(&mut rng);

    let mut count_of: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for l in lesions {
        *count_of.entry(l.patient_id.as_str()).or_default() += 1;
    }
    let mut train_patients: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut filled = 0usize;
    for p in &patients {
        let c = count_of[p.as_str()];
        if filled + c <= target {
            train_patients.insert(p.as_str());
            filled += c;
        }
    }

    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (i, l) in lesions.iter().enumerate() {
        if train_patients.contains(l.patient_id.as_str()) {
            train.push(i);
        } else {
            heldout.push(i);
        }
    }
    if train.is_empty() {
        return Err(EvalError::EmptySide("train"));
    }
    if heldout.is_empty() {
        return Err(EvalError::EmptySide("held-out"));
    }
    Ok((train, heldout))
}
