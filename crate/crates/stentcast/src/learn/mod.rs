//! Regression models over feature matrices: LASSO selection plus the
//! linear / Gaussian process / tree / bagged family.
//!
//! Every fitted model carries the schema fingerprint of its training matrix;
//! `predict` refuses matrices with a different fingerprint so a model can
//! never silently consume columns in the wrong order.

pub mod gpr;
pub mod lasso;
pub mod linear;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::matrix::FeatureMatrix;
pub use gpr::{fit_gpr, GprConfig, GprModel};
pub use lasso::{default_lambda_grid, fit_lasso, lambda_max, rank_features, LassoModel};
pub use linear::{fit_linear, LinearModel};
pub use tree::{fit_bagged, fit_tree, BaggedModel, TreeModel, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("feature matrix holds no rows")]
    EmptyMatrix,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("lambda grid must be non-increasing")]
    GridNotDecreasing,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("design matrix is singular beyond ridge rescue")]
    SingularDesign,
    #[error("kernel matrix not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("schema fingerprint mismatch: model {expected}, input {found}")]
    FingerprintMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Gpr,
    Tree,
    Bagged,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Gpr => "gpr",
            ModelKind::Tree => "tree",
            ModelKind::Bagged => "bagged",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "gpr" => Ok(ModelKind::Gpr),
            "tree" => Ok(ModelKind::Tree),
            "bagged" => Ok(ModelKind::Bagged),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub gpr: GprConfig,
    pub tree: TreeParams,
    pub n_trees: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { gpr: GprConfig::default(), tree: TreeParams::default(), n_trees: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelInner {
    Linear(LinearModel),
    Gpr(GprModel),
    Tree(TreeModel),
    Bagged(BaggedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub schema_fingerprint: String,
    pub training_rmse: f64,
    pub inner: ModelInner,
}

impl FittedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.inner {
            ModelInner::Linear(m) => m.predict_row(row),
            ModelInner::Gpr(m) => m.predict_row(row),
            ModelInner::Tree(m) => m.predict_row(row),
            ModelInner::Bagged(m) => m.predict_row(row),
        }
    }
}

pub fn fit_model(
    kind: ModelKind,
    x: &FeatureMatrix,
    config: &FitConfig,
    seed: u64,
) -> Result<FittedModel, LearnError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyMatrix);
    }
    if x.values.iter().chain(x.target.iter()).any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("feature matrix".into()));
    }
    let rows: Vec<&[f64]> = (0..n).map(|i| x.row(i)).collect();
    let y = &x.target;

    let inner = match kind {
        ModelKind::Linear => ModelInner::Linear(fit_linear(&rows, y)?),
        ModelKind::Gpr => ModelInner::Gpr(fit_gpr(&rows, y, &config.gpr, seed)?),
        ModelKind::Tree => ModelInner::Tree(fit_tree(&rows, y, &config.tree)?),
        ModelKind::Bagged => {
            ModelInner::Bagged(fit_bagged(&rows, y, &config.tree, config.n_trees, seed)?)
        }
    };
    let mut model = FittedModel {
        kind,
        schema_fingerprint: x.fingerprint(),
        training_rmse: 0.0,
        inner,
    };
    let sse: f64 = rows.iter().zip(y).map(|(r, t)| (model.predict_row(r) - t).powi(2)).sum();
    model.training_rmse = (sse / n as f64).sqrt();
    Ok(model)
}

pub fn predict(model: &FittedModel, x: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
    let found = x.fingerprint();
    if found != model.schema_fingerprint {
        return Err(LearnError::FingerprintMismatch {
            expected: model.schema_fingerprint.clone(),
            found,
        });
    }
    Ok((0..x.n_rows()).map(|i| model.predict_row(x.row(i))).collect())
}
