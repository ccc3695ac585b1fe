//! Locally differentially private minimum (and maximum) finding.
//!
//! Users hold values in [−1, 1]. An aggregator runs an interactive binary
//! search over [−1, 1]; in each round every user answers "is my value at most
//! τ?" through randomized response, and the aggregator thresholds a debiased
//! frequency estimate to pick a half. The error adapts to how much mass sits
//! near the minimum (α-fatness).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod ldp;
pub mod net;
pub mod params;
pub mod protocol;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
