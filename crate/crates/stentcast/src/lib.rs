//! Predicts post-stent lumen expansion from pre-stent IVOCT calcification
//! geometry.
//!
//! The crate covers the full loop: synthetic pullback generation, frame and
//! lesion feature extraction, stent expansion indices, regression models
//! (LASSO, Gaussian process, regression trees), grouped cross-validation, and
//! a rule-based calcium score baseline. The `examples/` directory holds one
//! runnable walkthrough per capability; the `stentcast` binary exposes the
//! same operations as subcommands.

pub mod dataset;
pub mod evaluate;
pub mod expansion;
pub mod features;
pub mod fujino;
pub mod geometry2d;
pub mod geometry3d;
pub mod learn;
pub mod plot;
pub mod pullback;
pub mod synth;
