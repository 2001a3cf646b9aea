//! Cohort-score decision making for GMM-UBM speaker verification.
//!
//! The conventional GMM-UBM verifier thresholds one number per trial: the
//! log-likelihood ratio between the claimed speaker model and the universal
//! background model. This crate instead scores every trial against a cohort
//! of reference models (K-means centroids of enrolled speaker GMMs), derives
//! features from the resulting score vector, and lets a discriminative model
//! (linear SVM or a one-hidden-layer MLP) make the accept/reject decision.
//!
//! Pipeline stages, each in its own module:
//!
//! - [`gmm`]: diagonal GMMs, EM training of the UBM, mean-only MAP adaptation,
//!   frame-averaged log-likelihood scoring.
//! - [`cohort`]: weighted KL distance between MAP-adapted GMMs, K-means over
//!   models, clustering cost curves.
//! - [`features`]: score vectors, the normalized score, rank position, sorted
//!   score differences, the C1..C7 feature assemblies and the top-2 imposter
//!   filter used for training balance.
//! - [`decision`]: standardizer, linear SVM, MLP, model serialization.
//! - [`metrics`]: trials, EER, DET points, rank histograms.
//! - [`synth`] and [`io`]: seeded synthetic corpora and every file format.
//! - [`pipeline`]: config and the stage runners used by the `cohortsv` binary.

pub mod cohort;
pub mod decision;
pub mod error;
pub mod features;
pub mod gmm;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
