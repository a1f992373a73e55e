//! Analysis of estimator reversals (Lord's Paradox) in two-arm pre/post trials
//! with school-level clustering.
//!
//! The crate computes four competing effect-size estimates for the same trial —
//! difference-in-means of post-test scores, difference-in-means of gain scores,
//! and their multilevel (random-intercept) counterparts post-ANCOVA and
//! gain-ANOVA — classifies how far the estimates diverge, and simulates the
//! data-generating conditions under which they reverse sign.
//!
//! The crate is `no_std` + `alloc`; all floating-point math goes through
//! [`libm`] so results are identical regardless of the host `std`. IO, file
//! formats, and the command-line front end live in the companion `reversal-cli`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod estimators;
pub mod lmm;
pub mod paradox;
pub mod rng;
pub mod simulate;
pub mod stats;

mod linalg;
mod math;

pub use dataset::{DatasetError, DatasetSummary, Group, PupilRecord, TrialDataset};
pub use estimators::{
    dim_gain, dim_post, hedges_g, pretest_imbalance, EffectEstimate, EstimateKind, EstimatorError,
};
pub use lmm::{effect_size_total_variance, fit_lmm, icc_of, LmmError, LmmFit, LmmSpec, Outcome};
pub use paradox::{
    batch_classify, classify, classify_mlm, imbalance_severity, BatchReport, ComparisonRecord,
    ImbalanceFlag, ParadoxCategory, ParadoxError, ParadoxVerdict, Thresholds,
};
pub use simulate::{generate, sweep, Randomization, ScenarioSpec, SchoolSizes, SimError, SweepTable};

/// Normal 97.5% quantile used for all Wald-style 95% confidence bounds.
pub const Z_95: f64 = 1.96;
