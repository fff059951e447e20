//! Optimal functional cut-off curves for distribution-valued biomarkers.
//!
//! Each subject's biosensor trace is summarised by its empirical quantile
//! function on a shared probability grid. A one-parameter family of
//! threshold curves `h_c(ρ) = μ(ρ) + c·σ(ρ)` splits curve space into a
//! predicted-positive region (curves lying on or above `h_c` everywhere) and
//! its complement. Because the family is monotone in `c`, every curve reduces
//! to a scalar margin and the functional cut-point search becomes an exact
//! one-dimensional scan.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cgm;
pub mod cutpoint;
pub mod error;
pub mod indices;
pub mod io;
pub mod quantile;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod smooth;
pub mod special;
pub mod threshold;

pub use bootstrap::{
    bootstrap_cutpoint, bootstrap_scalar, percentile, BootstrapConfig, BootstrapSummary,
};
pub use cgm::{filter_days, parse_cohort, CohortLabels, DayFilter, GapMode, IngestReport, SubjectSeries};
pub use cutpoint::{
    auc, candidate_set, confusion_at, optimize, Confusion, Criterion, CutpointResult, Direction,
    ScoredSample, SearchSpace, SweepRow,
};
pub use error::{Error, Result};
pub use indices::{basic_indices, conga, mage, BasicIndices, GlucoseTrace, IndexVector};
pub use quantile::{empirical_quantile, time_in_range, LabeledSample, ProbabilityGrid, QuantileCurve};
pub use scalar::Scalar;
pub use simulation::{generate, norm_quantile, run_study, DgpParams, StudyConfig, TruncNormal};
pub use smooth::{monotone_smooth, pava, SmoothConfig};
pub use threshold::{
    classify, cutoff_curve, estimate_family, margin, Centrality, FitConfig, FrozenCutoff,
    MarginVector, ScaleMode, ThresholdFamily,
};

pub type ProbabilityGrid64 = ProbabilityGrid<f64>;
pub type QuantileCurve64 = QuantileCurve<f64>;
pub type LabeledSample64 = LabeledSample<f64>;
pub type ThresholdFamily64 = ThresholdFamily<f64>;
pub type ScoredSample64 = ScoredSample<f64>;
pub type CutpointResult64 = CutpointResult<f64>;
pub type BootstrapSummary64 = BootstrapSummary<f64>;
pub type FrozenCutoff64 = FrozenCutoff<f64>;

pub type ProbabilityGrid32 = ProbabilityGrid<f32>;
pub type QuantileCurve32 = QuantileCurve<f32>;
pub type LabeledSample32 = LabeledSample<f32>;
pub type ThresholdFamily32 = ThresholdFamily<f32>;
pub type ScoredSample32 = ScoredSample<f32>;
pub type CutpointResult32 = CutpointResult<f32>;
