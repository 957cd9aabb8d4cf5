//! Incremental recourse planning over a tabular probability model.
//!
//! A data subject with an unfavorable score steps through a sequence of real
//! dataset subjects, each raising the predicted probability. Every state
//! carries exact Shapley attributions; candidate next states are ranked by
//! outcome gain per unit of normalized feature change.

// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod dataset;
pub mod export;
pub mod model;
pub mod numfmt;
pub mod recourse;

pub use attribution::{
    group_others, shapley_exact, stacked_segments, AttributionError, AttributionVector,
    BackgroundSet, Segment, SegmentKind, SegmentLabel,
};
pub use dataset::{load_csv, Dataset, DatasetError, FeatureSchema, Schema, SubjectRecord};
pub use model::{train_logistic, LogisticModel, ModelError, Scorer, TrainConfig};
pub use recourse::{
    CandidateTarget, ConstraintSet, DisplaySelection, Engine, RecourseError, RecoursePath,
    RecourseState, Termination,
};
