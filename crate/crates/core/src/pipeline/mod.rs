//! Experiment orchestration: configuration, on-disk layout and stage runners.
//!
//! Every stage reads its declared inputs from the work directory and writes
//! its outputs back into it, so stages can run one at a time from the CLI or
//! chained by [`run_all`]. Each written file's SHA-256 is logged, and
//! `run-all` finishes with a `manifest.sha256` over the whole directory.

mod config;
mod layout;
mod stages;

pub use config::{
    CohortSection, DeciderKind, ExperimentConfig, ExperimentSection, FeatureSection, GmmSection,
    DEFAULT_CONFIG_TOML,
};
pub use layout::{Layout, Set};
pub use stages::{
    adapt, cluster, cost_curve, evaluate, features, run_all, score, synth, train_decider,
    train_ubm, write_manifest, EvalOutcome, Summary, SummaryRow,
};
