//! Data splitting, regression/classification metrics, ROC analysis, and the
//! end-to-end experiment runner.

pub mod experiment;
pub mod metrics;
pub mod split;

use thiserror::Error;

use crate::expansion::ExpansionError;
use crate::features::FeatureError;
use crate::geometry2d::GeometryError;
use crate::learn::LearnError;

pub use experiment::{
    prepare_lesion, prepare_lesions, run_experiment, BaselineMetrics, CvSummary, ExperimentConfig,
    ExperimentOutput, ExperimentReport, FeatureGroup, FoldMetrics, LesionOutcome, Pipeline,
    PredictedLesion, PreparedLesion,
};
pub use metrics::{
    classification_metrics, regression_metrics, roc_auc, roc_points, ClassificationMetrics,
    RegressionMetrics,
};
pub use split::{holdout_split, split_grouped_kfold, FoldAssignment, LesionKey};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no lesions to split")]
    NoLesions,
    #[error("need at least 2 folds, got {0}")]
    BadFoldCount(usize),
    #[error("{patients} patients cannot fill {folds} folds")]
    FewerPatientsThanFolds { patients: usize, folds: usize },
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("{0} side of the split is empty")]
    EmptySide(&'static str),
    #[error("length mismatch: {left} actuals vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },
    #[error("metrics need at least one observation")]
    EmptyInput,
    #[error("ROC needs both classes; got {positives} positive and {negatives} negative")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{stage}: {source}")]
    Feature {
        stage: &'static str,
        #[source]
        source: FeatureError,
    },
    #[error("{stage}: {source}")]
    Learn {
        stage: &'static str,
        #[source]
        source: LearnError,
    },
    #[error("{stage}: {source}")]
    Expansion {
        stage: &'static str,
        #[source]
        source: ExpansionError,
    },
    #[error("{stage}: {source}")]
    Geometry {
        stage: &'static str,
        #[source]
        source: GeometryError,
    },
    #[error("model file {path}: {reason}")]
    ModelFile { path: String, reason: String },
}

impl EvalError {
    pub(crate) fn feature(stage: &'static str) -> impl FnOnce(FeatureError) -> EvalError {
        move |source| EvalError::Feature { stage, source }
    }

    pub(crate) fn learn(stage: &'static str) -> impl FnOnce(LearnError) -> EvalError {
        move |source| EvalError::Learn { stage, source }
    }

    pub(crate) fn expansion(stage: &'static str) -> impl FnOnce(ExpansionError) -> EvalError {
        move |source| EvalError::Expansion { stage, source }
    }
}
