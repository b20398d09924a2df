//! Capacity estimation for clustered ultra-dense wireless networks with
//! random inter-cluster interference.
//!
//! The library generates network layouts (Poisson-disk or truncated-normal
//! square scenarios), partitions them into clusters with K-means, assembles
//! per-cluster channel and interference matrices, and estimates the average
//! uplink capacity per base station three ways:
//!
//! * an exact log-determinant baseline ([`capacity::exact_capacity_once`]),
//! * a spiked-Fisher spectral estimator for user/BS ratios at or below one
//!   ([`fise::fise_capacity`]),
//! * closed-form diagonal-limit estimators for ratios above one
//!   ([`closed_form::closed_form_capacity`] and
//!   [`closed_form::continuous_uniform_capacity`]).
//!
//! The [`harness`] module drives replicated experiments over a grid of
//! user/BS ratios and emits CSV/JSON result tables; the `udcap` CLI is a thin
//! wrapper around it. All randomness flows through [`rng::RngStream`], so a
//! `(seed, stream)` pair pins every draw in a run.

// Validation uses `!(x > 0.0)` so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod channel;
pub mod closed_form;
mod error;
pub mod fise;
pub mod geom;
pub mod harness;
pub mod netgen;
pub mod quad;
pub mod rng;

pub use capacity::{CapacityEstimate, Draw, McSummary, Method};
pub use channel::{ChannelInstance, FadingParams, LogBase};
pub use error::{Error, Result};
pub use geom::{Point, Region};
pub use harness::{ExperimentConfig, OutputFormat, ResultRow};
pub use netgen::{ClusterSelector, Clustering, NodeSet, ScenarioConfig, ScenarioKind};
pub use rng::RngStream;
