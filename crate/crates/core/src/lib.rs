//! Landslide susceptibility modeling at desk scale.
//!
//! The crate covers the full pipeline used in susceptibility studies:
//!
//! * [`data`] — factor tables, class binning, distance-constrained negative
//!   sampling, stratified splits, standardization;
//! * [`raster`] — ESRI ASCII grid I/O;
//! * [`bivariate`] — frequency ratio, information value, and
//!   weights-of-evidence class statistics plus susceptibility-index scoring;
//! * [`diagnostics`] — VIF multicollinearity screening and OLS significance
//!   reports;
//! * [`learners`] — from-scratch logistic regression, SMO-trained SVM, and
//!   gradient-boosted trees behind one probability-scoring interface, with
//!   deterministic grid search;
//! * [`neural`] — hand-written 1-D CNN and LSTM classifiers with activation
//!   traces and finite-difference-checked gradients;
//! * [`attribution`] — exact and sampled Shapley values, LIME surrogate fits,
//!   DeepLIFT propagation, global importance, and cross-model consistency
//!   reports;
//! * [`evaluation`] — confusion metrics, rank-based ROC AUC, and
//!   density-by-class summaries;
//! * [`mapping`] — Jenks natural-breaks classification and grid export;
//! * [`synth`] — seeded generators for reproducible benchmark datasets.
//!
//! Everything is deterministic given its inputs and seeds: reruns produce
//! byte-identical artifacts, and no operation reads global state.

pub mod attribution;
pub mod bivariate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod linalg;
pub mod mapping;
pub mod neural;
pub mod raster;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
