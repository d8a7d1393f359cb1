//! Nonlinearity detection for short stationary time series.
//!
//! Three indices are computed on a normalized series: the normalized
//! complexity index ([`entropy::nci`]), information storage
//! ([`storage::information_storage`]) and the Gaussian linear contrast
//! ([`glc::glc_index`]). Each is tested against IAAFT surrogates
//! ([`nltest::detect`]), and cohort-level comparisons use the rank and
//! proportion tests in [`stats`]. [`pipeline`] ties everything together for
//! RR-interval files and cohort manifests.

// parameter checks are negated so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod glc;
pub mod nltest;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod stats;
pub mod storage;
pub mod surrogates;
pub mod synth;

pub use error::{Error, Result};
pub use nltest::{detect, Measure, NonlinearityResult, Tail};
pub use series::{normalize, AnalysisParams, NormalizedSeries, RawSeries};
