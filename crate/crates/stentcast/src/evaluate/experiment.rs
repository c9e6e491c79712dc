//! End-to-end experiment runner.
//!
//! A [`Pipeline`] owns every fitted stage: normalization bounds, the column
//! selection, and the model. It is constructed from training lesions only, so
//! validation and held-out rows cannot leak into any fitted statistic by
//! construction. [`run_experiment`] wraps the pipeline in a patient-grouped
//! holdout plus k-fold cross-validation and reports regression,
//! classification, and baseline metrics on every side.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    classification_metrics, regression_metrics, roc_auc, ClassificationMetrics, RegressionMetrics,
};
use super::split::{holdout_split, split_grouped_kfold, LesionKey};
use super::EvalError;
use crate::dataset::LesionSample;
use crate::expansion::{
    compute_sei_curve, find_reference_areas, ExpansionLabel, ExpansionRecord, ReferencePair,
    UNDER_EXPANSION_THRESHOLD,
};
use crate::features::matrix::FeatureMatrix;
use crate::features::normalize::{apply_normalizer, fit_normalizer, NormalizationParams};
use crate::features::schema::{cle_columns, Mode, PHENOTYPE_COLUMNS};
use crate::features::{assemble, extract_lesion_features, LesionFeatures, TargetSpan};
use crate::fujino::{fujino_inputs, fujino_ml_features, fujino_score, FujinoConfig};
use crate::learn::{
    default_lambda_grid, fit_lasso, fit_model, predict, rank_features, FitConfig, FittedModel,
    GprConfig, ModelKind,
};

const PIPELINE_MAGIC: &[u8; 8] = b"STCASTPL";
const PIPELINE_VERSION: u32 = 1;
/// Predicted areas are floored here before SEI conversion; a model that
/// extrapolates to a nonpositive area still yields a (terrible) valid SEI.
const AREA_FLOOR_MM2: f64 = 1e-9;
/// Columns kept by the ranked CLE group.
const CLE_TOP_N: usize = 20;

/// Which columns the pipeline offers the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// Every column of the assembled schema.
    All,
    /// The calcium-lesion-expansion subset.
    Cle,
    /// Columns active at the cross-validated LASSO lambda.
    LassoSelected,
    /// The first 20 CLE columns by LASSO path entry order.
    CleTop20,
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureGroup::All => "all",
            FeatureGroup::Cle => "cle",
            FeatureGroup::LassoSelected => "lasso",
            FeatureGroup::CleTop20 => "cle_top20",
        })
    }
}

impl FromStr for FeatureGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(FeatureGroup::All),
            "cle" => Ok(FeatureGroup::Cle),
            "lasso" => Ok(FeatureGroup::LassoSelected),
            "cle_top20" => Ok(FeatureGroup::CleTop20),
            other => Err(format!("unknown feature group {other:?}")),
        }
    }
}

/// One lesion after feature extraction, ready for any experiment. Keeping
/// only features and targets here lets callers drop each pullback's pixel
/// data as soon as extraction finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedLesion {
    pub lesion: LesionFeatures,
    /// Ground-truth post-stent areas over the stented span.
    pub target: TargetSpan,
    pub refs: ReferencePair,
    /// Known measurement noise SD, when the source provides one.
    pub noise_sd_mm2: Option<f64>,
}

impl PreparedLesion {
    pub fn ref_mean_mm2(&self) -> f64 {
        self.refs.mean_area()
    }

    /// SEI curve of the ground-truth areas.
    pub fn actual_record(&self) -> Result<ExpansionRecord, EvalError> {
        compute_sei_curve(&self.target.areas, self.target.start_frame, &self.refs)
            .map_err(EvalError::expansion("actual SEI"))
    }
}

/// Reference search plus feature extraction for one labeled sample.
pub fn prepare_lesion(sample: &LesionSample) -> Result<PreparedLesion, EvalError> {
    let refs = find_reference_areas(&sample.pre, sample.stent_start, sample.stent_end())
        .map_err(EvalError::expansion("reference search"))?;
    let lesion = extract_lesion_features(&sample.pre, &sample.lesion_id, refs.mean_area())
        .map_err(|source| EvalError::Geometry { stage: "feature extraction", source })?;
    Ok(PreparedLesion {
        lesion,
        target: TargetSpan {
            start_frame: sample.stent_start,
            areas: sample.post_areas.clone(),
        },
        refs,
        noise_sd_mm2: None,
    })
}

/// Extraction over a cohort, parallel across lesions, order preserved.
pub fn prepare_lesions(samples: &[LesionSample]) -> Result<Vec<PreparedLesion>, EvalError> {
    samples.par_iter().map(prepare_lesion).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub segment_length: usize,
    pub include_phenotype: bool,
    pub feature_group: FeatureGroup,
    pub model: ModelKind,
    pub folds: usize,
    pub train_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
    /// Also score the calcium-rule and rule-feature-ML baselines.
    pub with_baselines: bool,
    pub fit: FitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Segmental,
            segment_length: 31,
            include_phenotype: false,
            feature_group: FeatureGroup::Cle,
            model: ModelKind::Gpr,
            folds: 5,
            train_fraction: 78.0 / 110.0,
            threshold: UNDER_EXPANSION_THRESHOLD,
            seed: 7,
            with_baselines: true,
            // Slightly cheaper GPR search than the library default; the
            // experiment fits the model once per fold plus once per baseline.
            fit: FitConfig {
                gpr: GprConfig { multi_starts: 3, max_nm_iters: 50, ..GprConfig::default() },
                ..FitConfig::default()
            },
        }
    }
}

/// Every fitted stage of the prediction path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub mode: Mode,
    pub segment_length: usize,
    pub include_phenotype: bool,
    pub feature_group: FeatureGroup,
    pub threshold: f64,
    /// Normalization bounds over the full assembled schema (fitted on train).
    pub normalizer: NormalizationParams,
    /// Selected columns, in model input order.
    pub columns: Vec<String>,
    pub model: FittedModel,
    pub warnings: Vec<String>,
}

/// Per-frame area predictions for one lesion plus their SEI curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedLesion {
    pub predicted_areas: Vec<f64>,
    pub record: ExpansionRecord,
}

fn assemble_matrix(
    lesions: &[&PreparedLesion],
    mode: Mode,
    segment_length: usize,
    include_phenotype: bool,
) -> Result<FeatureMatrix, EvalError> {
    let tuples: Vec<(LesionFeatures, TargetSpan)> =
        lesions.iter().map(|p| (p.lesion.clone(), p.target.clone())).collect();
    assemble(&tuples, mode, segment_length, include_phenotype)
        .map_err(EvalError::feature("assemble"))
}

fn choose_columns(
    normalized: &FeatureMatrix,
    cfg: &ExperimentConfig,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>, EvalError> {
    let mut cols = match cfg.feature_group {
        FeatureGroup::All => normalized.columns.clone(),
        FeatureGroup::Cle => cle_columns(cfg.mode),
        FeatureGroup::LassoSelected => {
            let grid = default_lambda_grid(normalized);
            let lasso = fit_lasso(normalized, &grid, seed ^ 0x1a55_0)
                .map_err(EvalError::learn("lasso selection"))?;
            if lasso.active_set.is_empty() {
                warnings.push("lasso selected no columns; keeping all".to_string());
                normalized.columns.clone()
            } else {
                lasso.active_set.clone()
            }
        }
        FeatureGroup::CleTop20 => {
            let cle = normalized
                .select_columns(&cle_columns(cfg.mode))
                .map_err(EvalError::feature("cle restriction"))?;
            let grid = default_lambda_grid(&cle);
            let lasso =
                fit_lasso(&cle, &grid, seed ^ 0x1a55_0).map_err(EvalError::learn("cle ranking"))?;
            let ranked = rank_features(&lasso);
            if ranked.is_empty() {
                warnings.push("lasso ranked no cle columns; keeping the full cle set".to_string());
                cle.columns.clone()
            } else {
                ranked.into_iter().take(CLE_TOP_N).collect()
            }
        }
    };
    if cfg.include_phenotype {
        for p in PHENOTYPE_COLUMNS {
            if normalized.column_index(p).is_some() && !cols.iter().any(|c| c == p) {
                cols.push(p.to_string());
            }
        }
    }
    Ok(cols)
}

impl Pipeline {
    /// Fits normalization, selection, and the model on training lesions only.
    pub fn fit(
        train: &[&PreparedLesion],
        cfg: &ExperimentConfig,
        seed: u64,
    ) -> Result<Pipeline, EvalError> {
        if train.is_empty() {
            return Err(EvalError::NoLesions);
        }
        let raw = assemble_matrix(train, cfg.mode, cfg.segment_length, cfg.include_phenotype)?;
        let normalizer = fit_normalizer(&raw).map_err(EvalError::feature("fit normalizer"))?;
        let normalized =
            apply_normalizer(&raw, &normalizer).map_err(EvalError::feature("normalize"))?;
        let mut warnings = normalizer.warnings.clone();
        let columns = choose_columns(&normalized, cfg, seed, &mut warnings)?;
        let selected =
            normalized.select_columns(&columns).map_err(EvalError::feature("select columns"))?;
        let model =
            fit_model(cfg.model, &selected, &cfg.fit, seed).map_err(EvalError::learn("fit model"))?;
        Ok(Pipeline {
            mode: cfg.mode,
            segment_length: cfg.segment_length,
            include_phenotype: cfg.include_phenotype,
            feature_group: cfg.feature_group,
            threshold: cfg.threshold,
            normalizer,
            columns,
            model,
            warnings,
        })
    }

    /// Predicts post-stent areas for one lesion and converts them to SEI.
    pub fn predict_lesion(&self, p: &PreparedLesion) -> Result<PredictedLesion, EvalError> {
        let raw =
            assemble_matrix(&[p], self.mode, self.segment_length, self.include_phenotype)?;
        let normalized =
            apply_normalizer(&raw, &self.normalizer).map_err(EvalError::feature("normalize"))?;
        let selected =
            normalized.select_columns(&self.columns).map_err(EvalError::feature("select columns"))?;
        let preds = predict(&self.model, &selected).map_err(EvalError::learn("predict"))?;
        let predicted_areas: Vec<f64> = preds.iter().map(|v| v.max(AREA_FLOOR_MM2)).collect();
        let record = compute_sei_curve(&predicted_areas, p.target.start_frame, &p.refs)
            .map_err(EvalError::expansion("predicted SEI"))?;
        Ok(PredictedLesion { predicted_areas, record })
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let file_err = |reason: String| EvalError::ModelFile {
            path: path.display().to_string(),
            reason,
        };
        let body = bincode::serialize(self).map_err(|e| file_err(e.to_string()))?;
        let mut bytes = Vec::with_capacity(body.len() + 12);
        bytes.extend_from_slice(PIPELINE_MAGIC);
        bytes.extend_from_slice(&PIPELINE_VERSION.to_le_bytes());
        bytes.extend_from_slice(&body);
        fs::write(path, bytes).map_err(|e| file_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Pipeline, EvalError> {
        let file_err = |reason: String| EvalError::ModelFile {
            path: path.display().to_string(),
            reason,
        };
        let bytes = fs::read(path).map_err(|e| file_err(e.to_string()))?;
        if bytes.len() < 12 || &bytes[..8] != PIPELINE_MAGIC {
            return Err(file_err("not a pipeline file".to_string()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != PIPELINE_VERSION {
            return Err(file_err(format!(
                "version {version}, this build reads {PIPELINE_VERSION}"
            )));
        }
        bincode::deserialize(&bytes[12..]).map_err(|e| file_err(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionOutcome {
    pub lesion_id: String,
    pub patient_id: String,
    /// Validation fold for cross-validated lesions; None when held out.
    pub fold: Option<usize>,
    pub start_frame: usize,
    /// Target areas; one minimum per lesion in lesion mode.
    pub actual_areas: Vec<f64>,
    pub predicted_areas: Vec<f64>,
    pub actual_msei: f64,
    pub predicted_msei: f64,
    pub actual_label: ExpansionLabel,
    pub predicted_label: ExpansionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    /// AUC of the 0 to 4 point calcium score as a ranking.
    pub rule_auc: Option<f64>,
    /// AUC of the same model kind trained on the three rule inputs.
    pub ml_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train_lesions: usize,
    pub n_validation_lesions: usize,
    /// Area regression over validation rows (frames, or minima in lesion mode).
    pub area: RegressionMetrics,
    /// Per-lesion mSEI regression.
    pub msei: RegressionMetrics,
    pub classification: ClassificationMetrics,
    pub baseline: Option<BaselineMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    /// Mean AUC over folds where both classes appeared.
    pub mean_auc: Option<f64>,
    pub n_auc_folds: usize,
    pub mean_area_rmse_mm2: f64,
    pub mean_area_r: f64,
    pub mean_msei_rmse: f64,
    pub mean_rule_auc: Option<f64>,
    pub mean_ml_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_lesions: usize,
    pub n_patients: usize,
    pub n_train_lesions: usize,
    pub n_heldout_lesions: usize,
    pub selected_columns: Vec<String>,
    pub warnings: Vec<String>,
    pub folds: Vec<FoldMetrics>,
    pub cv: CvSummary,
    pub heldout_area: RegressionMetrics,
    pub heldout_msei: RegressionMetrics,
    pub heldout_classification: ClassificationMetrics,
    pub heldout_baseline: Option<BaselineMetrics>,
}

/// A full experiment result: the serializable report, per-lesion outcomes on
/// both sides of the holdout, and the final pipeline refit on all training
/// lesions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub cv_outcomes: Vec<LesionOutcome>,
    pub heldout_outcomes: Vec<LesionOutcome>,
    pub pipeline: Pipeline,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct SideEval {
    outcomes: Vec<LesionOutcome>,
    area_actual: Vec<f64>,
    area_predicted: Vec<f64>,
}

/// Predicts every lesion of one side and pairs up actual vs predicted areas.
fn evaluate_side(
    pipeline: &Pipeline,
    lesions: &[&PreparedLesion],
    fold: Option<usize>,
) -> Result<SideEval, EvalError> {
    let mut outcomes = Vec::with_capacity(lesions.len());
    let mut area_actual = Vec::new();
    let mut area_predicted = Vec::new();
    for p in lesions {
        let actual = p.actual_record()?;
        let predicted = pipeline.predict_lesion(p)?;
        let actual_areas: Vec<f64> = match pipeline.mode {
            Mode::Lesion => {
                vec![p.target.areas.iter().cloned().fold(f64::INFINITY, f64::min)]
            }
            _ => p.target.areas.clone(),
        };
        area_actual.extend_from_slice(&actual_areas);
        area_predicted.extend_from_slice(&predicted.predicted_areas);
        outcomes.push(LesionOutcome {
            lesion_id: p.lesion.lesion_id.clone(),
            patient_id: p.lesion.patient_id.clone(),
            fold,
            start_frame: p.target.start_frame,
            actual_areas,
            predicted_areas: predicted.predicted_areas.clone(),
            actual_msei: actual.msei,
            predicted_msei: predicted.record.msei,
            actual_label: actual.label,
            predicted_label: predicted.record.label,
        });
    }
    Ok(SideEval { outcomes, area_actual, area_predicted })
}

/// AUC helper that treats a single-class side as undefined rather than fatal.
fn auc_or_none(scores: &[f64], labels: &[bool]) -> Result<Option<f64>, EvalError> {
    match roc_auc(scores, labels) {
        Ok(a) => Ok(Some(a)),
        Err(EvalError::SingleClass { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Ranks validation lesions by the 0 to 4 calcium score.
fn rule_baseline(val: &[&PreparedLesion], outcomes: &[LesionOutcome], threshold: f64)
    -> Result<Option<f64>, EvalError>
{
    let cfg = FujinoConfig::default();
    let scores: Vec<f64> = val
        .iter()
        .map(|p| {
            let (angle, thickness, length) = fujino_inputs(&p.lesion);
            fujino_score(angle, thickness, length, &cfg).points as f64
        })
        .collect();
    let labels: Vec<bool> = outcomes.iter().map(|o| o.actual_msei < threshold).collect();
    auc_or_none(&scores, &labels)
}

/// Fits the experiment's model kind on the three rule inputs alone.
fn ml_baseline(
    train: &[&PreparedLesion],
    val: &[&PreparedLesion],
    outcomes: &[LesionOutcome],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Option<f64>, EvalError> {
    let tuples = |side: &[&PreparedLesion]| -> Vec<(LesionFeatures, TargetSpan)> {
        side.iter().map(|p| (p.lesion.clone(), p.target.clone())).collect()
    };
    let train_m = fujino_ml_features(&tuples(train));
    let normalizer = fit_normalizer(&train_m).map_err(EvalError::feature("baseline normalizer"))?;
    let train_n =
        apply_normalizer(&train_m, &normalizer).map_err(EvalError::feature("baseline normalize"))?;
    let model = fit_model(cfg.model, &train_n, &cfg.fit, seed)
        .map_err(EvalError::learn("baseline fit"))?;

    let val_m = fujino_ml_features(&tuples(val));
    let val_n =
        apply_normalizer(&val_m, &normalizer).map_err(EvalError::feature("baseline normalize"))?;
    let preds = predict(&model, &val_n).map_err(EvalError::learn("baseline predict"))?;
    // Rank by predicted minimum area directly, the analog of a minimum stent
    // area risk threshold. The three inputs carry no vessel-size information,
    // so normalizing by the reference would only add size noise to the ranking.
    let scores: Vec<f64> = preds.iter().map(|&min_area| -min_area.max(AREA_FLOOR_MM2)).collect();
    let labels: Vec<bool> = outcomes.iter().map(|o| o.actual_msei < cfg.threshold).collect();
    auc_or_none(&scores, &labels)
}

fn side_metrics(
    eval: &SideEval,
    threshold: f64,
) -> Result<(RegressionMetrics, RegressionMetrics, ClassificationMetrics), EvalError> {
    let area = regression_metrics(&eval.area_actual, &eval.area_predicted)?;
    let actual_msei: Vec<f64> = eval.outcomes.iter().map(|o| o.actual_msei).collect();
    let predicted_msei: Vec<f64> = eval.outcomes.iter().map(|o| o.predicted_msei).collect();
    let msei = regression_metrics(&actual_msei, &predicted_msei)?;
    let classification = classification_metrics(&actual_msei, &predicted_msei, threshold)?;
    Ok((area, msei, classification))
}

fn mean_of(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let vals: Vec<f64> = values.collect();
    if vals.is_empty() {
        (0.0, 0)
    } else {
        (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
    }
}

/// Runs the holdout plus cross-validation experiment over prepared lesions.
pub fn run_experiment(
    lesions: &[PreparedLesion],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput, EvalError> {
    if lesions.is_empty() {
        return Err(EvalError::NoLesions);
    }
    let keys: Vec<LesionKey> = lesions
        .iter()
        .map(|p| LesionKey {
            lesion_id: p.lesion.lesion_id.clone(),
            patient_id: p.lesion.patient_id.clone(),
        })
        .collect();
    let n_patients = {
        let mut set: Vec<&str> = keys.iter().map(|k| k.patient_id.as_str()).collect();
        set.sort_unstable();
        set.dedup();
        set.len()
    };

    let (train_idx, held_idx) = holdout_split(&keys, cfg.train_fraction, cfg.seed)?;
    let train: Vec<&PreparedLesion> = train_idx.iter().map(|&i| &lesions[i]).collect();
    let held: Vec<&PreparedLesion> = held_idx.iter().map(|&i| &lesions[i]).collect();
    let train_keys: Vec<LesionKey> = train_idx.iter().map(|&i| keys[i].clone()).collect();
    let assignment = split_grouped_kfold(&train_keys, cfg.folds, cfg.seed)?;

    let fold_results: Vec<(FoldMetrics, Vec<LesionOutcome>)> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| -> Result<(FoldMetrics, Vec<LesionOutcome>), EvalError> {
            let tr: Vec<&PreparedLesion> =
                assignment.train_indices(f).iter().map(|&i| train[i]).collect();
            let va: Vec<&PreparedLesion> =
                assignment.validation_indices(f).iter().map(|&i| train[i]).collect();
            let seed = fold_seed(cfg.seed, f);
            let pipeline = Pipeline::fit(&tr, cfg, seed)?;
            let eval = evaluate_side(&pipeline, &va, Some(f))?;
            let (area, msei, classification) = side_metrics(&eval, cfg.threshold)?;
            let baseline = if cfg.with_baselines {
                Some(BaselineMetrics {
                    rule_auc: rule_baseline(&va, &eval.outcomes, cfg.threshold)?,
                    ml_auc: ml_baseline(&tr, &va, &eval.outcomes, cfg, seed ^ 0xba5e)?,
                })
            } else {
                None
            };
            Ok((
                FoldMetrics {
                    fold: f,
                    n_train_lesions: tr.len(),
                    n_validation_lesions: va.len(),
                    area,
                    msei,
                    classification,
                    baseline,
                },
                eval.outcomes,
            ))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut folds = Vec::with_capacity(cfg.folds);
    let mut cv_outcomes = Vec::new();
    for (fm, outcomes) in fold_results {
        folds.push(fm);
        cv_outcomes.extend(outcomes);
    }

    let (mean_auc_val, n_auc_folds) =
        mean_of(folds.iter().filter_map(|f| f.classification.auc));
    let (mean_area_rmse_mm2, _) = mean_of(folds.iter().map(|f| f.area.rmse_mm2));
    let (mean_area_r, _) = mean_of(folds.iter().map(|f| f.area.pearson_r));
    let (mean_msei_rmse, _) = mean_of(folds.iter().map(|f| f.msei.rmse_mm2));
    let (rule_mean, rule_n) =
        mean_of(folds.iter().filter_map(|f| f.baseline.as_ref().and_then(|b| b.rule_auc)));
    let (ml_mean, ml_n) =
        mean_of(folds.iter().filter_map(|f| f.baseline.as_ref().and_then(|b| b.ml_auc)));
    let cv = CvSummary {
        mean_auc: (n_auc_folds > 0).then_some(mean_auc_val),
        n_auc_folds,
        mean_area_rmse_mm2,
        mean_area_r,
        mean_msei_rmse,
        mean_rule_auc: (rule_n > 0).then_some(rule_mean),
        mean_ml_auc: (ml_n > 0).then_some(ml_mean),
    };

    // Final refit on the full training side, then one pass over the holdout.
    let pipeline = Pipeline::fit(&train, cfg, cfg.seed)?;
    let held_eval = evaluate_side(&pipeline, &held, None)?;
    let (heldout_area, heldout_msei, heldout_classification) =
        side_metrics(&held_eval, cfg.threshold)?;
    let heldout_baseline = if cfg.with_baselines {
        Some(BaselineMetrics {
            rule_auc: rule_baseline(&held, &held_eval.outcomes, cfg.threshold)?,
            ml_auc: ml_baseline(&train, &held, &held_eval.outcomes, cfg, cfg.seed ^ 0xba5e)?,
        })
    } else {
        None
    };

    let report = ExperimentReport {
        config: cfg.clone(),
        n_lesions: lesions.len(),
        n_patients,
        n_train_lesions: train.len(),
        n_heldout_lesions: held.len(),
        selected_columns: pipeline.columns.clone(),
        warnings: pipeline.warnings.clone(),
        folds,
        cv,
        heldout_area,
        heldout_msei,
        heldout_classification,
        heldout_baseline,
    };
    Ok(ExperimentOutput {
        report,
        cv_outcomes,
        heldout_outcomes: held_eval.outcomes,
        pipeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};
    use std::collections::HashSet;
    use std::sync::OnceLock;

    fn cohort() -> &'static Vec<PreparedLesion> {
        static COHORT: OnceLock<Vec<PreparedLesion>> = OnceLock::new();
        COHORT.get_or_init(|| {
            let cfg = SynthConfig {
                n_lesions: 14,
                seed: 21,
                lesion_frames: (24, 30),
                noise_sd_pct_of_reference: Some(4.0),
                ..SynthConfig::default()
            };
            let lesions = generate_dataset(&cfg).expect("synth");
            lesions
                .iter()
                .map(|l| {
                    let mut p = prepare_lesion(&l.sample).expect("prepare");
                    p.noise_sd_mm2 = Some(l.noise_sd_mm2);
                    p
                })
                .collect()
        })
    }

    fn test_cfg() -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Segmental,
            segment_length: 7,
            feature_group: FeatureGroup::Cle,
            model: ModelKind::Linear,
            folds: 3,
            train_fraction: 0.7,
            seed: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let lesions = cohort();
        let cfg = test_cfg();
        let a = run_experiment(lesions, &cfg).unwrap();
        let b = run_experiment(lesions, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.heldout_outcomes, b.heldout_outcomes);
        assert_eq!(a.cv_outcomes, b.cv_outcomes);
    }

    #[test]
    fn every_train_lesion_validates_exactly_once() {
        let out = run_experiment(cohort(), &test_cfg()).unwrap();
        let cv_ids: Vec<&str> = out.cv_outcomes.iter().map(|o| o.lesion_id.as_str()).collect();
        let unique: HashSet<&&str> = cv_ids.iter().collect();
        assert_eq!(cv_ids.len(), unique.len(), "a lesion validated twice");
        assert_eq!(cv_ids.len(), out.report.n_train_lesions);
        let held: HashSet<&str> =
            out.heldout_outcomes.iter().map(|o| o.lesion_id.as_str()).collect();
        assert!(held.iter().all(|id| !cv_ids.contains(id)));
        assert_eq!(held.len(), out.report.n_heldout_lesions);
    }

    #[test]
    fn heldout_mutation_leaves_cv_untouched() {
        let cfg = test_cfg();
        let base = run_experiment(cohort(), &cfg).unwrap();
        let held: HashSet<String> =
            base.heldout_outcomes.iter().map(|o| o.lesion_id.clone()).collect();

        // Corrupt the held-out targets wildly; CV folds never see them, so
        // fold metrics and outcomes must be bit-identical.
        let mut mutated = cohort().clone();
        for p in &mut mutated {
            if held.contains(&p.lesion.lesion_id) {
                for a in &mut p.target.areas {
                    *a *= 3.0;
                }
            }
        }
        let out = run_experiment(&mutated, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&base.report.folds).unwrap(),
            serde_json::to_string(&out.report.folds).unwrap()
        );
        assert_eq!(base.cv_outcomes, out.cv_outcomes);
        // The held-out metrics themselves do change.
        assert_ne!(
            serde_json::to_string(&base.report.heldout_msei).unwrap(),
            serde_json::to_string(&out.report.heldout_msei).unwrap()
        );
    }

    #[test]
    fn pipeline_roundtrips_through_disk() {
        let lesions = cohort();
        let cfg = test_cfg();
        let train: Vec<&PreparedLesion> = lesions.iter().take(8).collect();
        let pipeline = Pipeline::fit(&train, &cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        pipeline.save(&path).unwrap();
        let loaded = Pipeline::load(&path).unwrap();
        assert_eq!(pipeline, loaded);
        let p = &lesions[10];
        assert_eq!(
            pipeline.predict_lesion(p).unwrap().predicted_areas,
            loaded.predict_lesion(p).unwrap().predicted_areas
        );

        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(Pipeline::load(&path), Err(EvalError::ModelFile { .. })));
    }

    #[test]
    fn phenotype_columns_append_to_cle() {
        let lesions = cohort();
        let cfg = ExperimentConfig { include_phenotype: true, ..test_cfg() };
        let train: Vec<&PreparedLesion> = lesions.iter().take(8).collect();
        let pipeline = Pipeline::fit(&train, &cfg, 3).unwrap();
        for p in PHENOTYPE_COLUMNS {
            assert!(pipeline.columns.iter().any(|c| c == p), "missing {p}");
        }
        let cle_len = cle_columns(cfg.mode).len();
        assert_eq!(pipeline.columns.len(), cle_len + 3);
    }

    #[test]
    fn baselines_are_reported() {
        let out = run_experiment(cohort(), &test_cfg()).unwrap();
        for f in &out.report.folds {
            assert!(f.baseline.is_some());
        }
        assert!(out.report.heldout_baseline.is_some());
        let cfg = ExperimentConfig { with_baselines: false, ..test_cfg() };
        let quiet = run_experiment(cohort(), &cfg).unwrap();
        assert!(quiet.report.folds.iter().all(|f| f.baseline.is_none()));
    }

    #[test]
    fn feature_group_names_round_trip() {
        for g in [
            FeatureGroup::All,
            FeatureGroup::Cle,
            FeatureGroup::LassoSelected,
            FeatureGroup::CleTop20,
        ] {
            assert_eq!(g.to_string().parse::<FeatureGroup>().unwrap(), g);
        }
        assert!("pca".parse::<FeatureGroup>().is_err());
    }

    #[test]
    fn lasso_fallback_keeps_all_columns_when_nothing_activates() {
        // A constant target zeroes every gradient, so the lasso path stays
        // empty and selection falls back to the full column set.
        use crate::features::matrix::RowKey;
        let n = 12;
        let mut values = Vec::new();
        for i in 0..n {
            values.extend_from_slice(&[i as f64, (i * i) as f64 % 5.0]);
        }
        let m = FeatureMatrix {
            mode: Mode::Lesion,
            columns: vec!["a".to_string(), "b".to_string()],
            values,
            target: vec![5.0; n],
            rows: (0..n)
                .map(|i| RowKey {
                    lesion_id: format!("l{i}"),
                    patient_id: format!("p{i}"),
                    frame_index: 0,
                })
                .collect(),
        };
        let cfg = ExperimentConfig {
            feature_group: FeatureGroup::LassoSelected,
            mode: Mode::Lesion,
            ..test_cfg()
        };
        let mut warnings = Vec::new();
        let cols = choose_columns(&m, &cfg, 1, &mut warnings).unwrap();
        assert_eq!(cols, m.columns);
        assert!(warnings.iter().any(|w| w.contains("no columns")));
    }
}
