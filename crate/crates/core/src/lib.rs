//! Coursework assessment ratio (CAR) analysis of student transcripts.
//!
//! Transcript records are ingested and validated, described with group means
//! and two-sample t-tests, refined by removing a fitted CAR effect from each
//! module mark, and used to predict final degree bands with a random forest.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixtures;
pub mod forest;
pub mod ingest;
pub mod refine;
pub mod rng;
pub mod stats;
pub mod synthgen;
pub mod transcript;

pub use error::{Error, Result};
pub use transcript::{
    classify_band, compute_car, year_average, AssessmentWeighting, BandingScheme, Car, DegreeBand, MarkField,
    MarkRecord, RefinedOutcome, StudentModuleOutcome,
};
