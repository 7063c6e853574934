//! Estimation and inference for the out-of-sample improvement of a
//! model-based treatment allocation rule over business-as-usual allocation,
//! using two-arm randomized trial data and a pre-specified linear model.
//!
//! The pipeline is:
//!
//! 1. [`dataset`] loads and validates `[X, A, y]` trial data.
//! 2. [`linear_model`] fits an OLS model with treatment interactions.
//! 3. [`allocation`] turns the fitted model into a decision rule.
//! 4. [`improvement`] cross-validates the rule and cross-tabulates the
//!    held-out responses against it.
//! 5. [`inference`] bootstraps the whole procedure for percentile
//!    intervals and one-sided p-values.
//!
//! [`simulation`] regenerates the synthetic studies and their oracle values,
//! and [`cli`] wires it all to the `alloc-improve` binary.

pub mod allocation;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod improvement;
pub mod inference;
pub mod linear_model;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod simulation;

pub use allocation::{fit_best_arm, AllocationRule};
pub use dataset::{load_csv, make_folds, resample_with_replacement, FoldAssignment, RctDataset};
pub use error::{Error, Result};
pub use improvement::{
    crosstab, cv_improvement, improvement_from_crosstab, BestBaseline, CellCounts, CrossTab,
    CvOptions, ImprovementEstimate,
};
pub use inference::{
    bootstrap_inference, one_sided_pvalue, percentile_ci, BootstrapConfig, BootstrapResult,
    IntervalMethod,
};
pub use linear_model::{build_design, fit_ols, Direction, FittedModel, ModelSpec};
