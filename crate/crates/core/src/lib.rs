//! Conditional density modelling of cycle-to-cycle engine knock intensity.
//!
//! The crate learns `p(ki | u)`, the distribution of per-cycle knock
//! intensity given an operating point `u = (speed, manifold pressure,
//! relative injection timing)`, with a mixture density network, and draws
//! knock-intensity sequences from the learned density by accept-reject
//! sampling against a uniform envelope.
//!
//! Everything here is `no_std` with `alloc`; file formats, the validation
//! harness and the command-line front end live in the `knocksim` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod mdn;
pub mod mixture;
pub mod normalize;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod synth;

pub use data::{split_leave_one_out, ConditionId, Dataset, KnockRecord, OperatingPoint};
pub use error::{Error, Result};
pub use mdn::{LossHistory, MdnModel, TrainingConfig};
pub use mixture::{AmiseInputs, EmConfig, EmFit, MixtureParams};
pub use normalize::Normalizer;
pub use rng::RandomStream;
pub use sampler::{AcceptanceStats, Envelope, SimulatedSeries};
pub use stats::{Ecdf, GroupErrorSummary, Histogram};
pub use synth::{GridSpec, GroundTruthFamily};
