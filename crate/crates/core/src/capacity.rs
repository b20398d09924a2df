//! Exact per-cluster capacity baseline and Monte-Carlo replication.
//!
//! The baseline evaluates `(1/J_m) log det(I + P Xi^-1/2 H H* Xi^-1/2)`
//! through two Hermitian log-determinants, `log det(Xi + P H H*) -
//! log det(Xi)`, so the inverse square root is never formed and the
//! determinants never overflow (they are accumulated in log space from the
//! Cholesky diagonals).

use std::collections::BTreeMap;

use nalgebra::{Cholesky, Complex, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channel, ChannelInstance, FadingParams};
use crate::error::{Error, Result};
use crate::netgen::{
    generate, kmeans_partition, select_cluster, ClusterSelector, Clustering, NodeSet,
    ScenarioConfig,
};
use crate::rng::RngStream;

/// Estimation route that produced a capacity value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Fise,
    ClosedForm,
    ContinuousUniform,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Fise => "fise",
            Method::ClosedForm => "closed_form",
            Method::ContinuousUniform => "continuous_uniform",
        }
    }

    /// Whether the estimator consumes the assembled channel matrices.
    pub fn needs_channel(&self) -> bool {
        matches!(self, Method::Exact | Method::Fise)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A capacity value (per BS, in the configured log base) plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub method: Method,
    pub diagnostics: BTreeMap<String, f64>,
}

impl CapacityEstimate {
    /// Capacity values are nonnegative by construction; tiny negative
    /// rounding residue is clipped.
    pub fn new(value: f64, method: Method) -> Self {
        CapacityEstimate {
            value: value.max(0.0),
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// `2 sum ln Re(l_ii)` over the Cholesky diagonal: the log-determinant of
/// the factored Hermitian matrix, immune to overflow at large dimension.
pub fn cholesky_log_det(chol: &Cholesky<Complex<f64>, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Exact average capacity per BS for one channel draw:
/// `(1/J_m) [log det(Xi + P H H*) - log det(Xi)]` with `H = L o G`.
pub fn exact_capacity_once(
    ch: &ChannelInstance,
    params: &FadingParams,
) -> Result<CapacityEstimate> {
    let j_m = ch.bs_count();
    let h = ch.gain_matrix();
    let signal = &ch.interference + (&h * h.adjoint()) * Complex::new(params.tx_power_w, 0.0);
    let chol_signal = Cholesky::new(signal).ok_or(Error::Factorization {
        context: "signal-plus-interference matrix is not positive definite",
    })?;
    let chol_noise = ch.interference_cholesky()?;
    let ln_ratio = cholesky_log_det(&chol_signal) - cholesky_log_det(&chol_noise);
    let value = params.log_base.from_ln(ln_ratio) / j_m as f64;
    Ok(CapacityEstimate::new(value, Method::Exact)
        .with_diagnostic("bs_count", j_m as f64)
        .with_diagnostic("user_count", ch.user_count() as f64))
}

/// Everything an estimator needs from one replication.
#[derive(Debug)]
pub struct Draw {
    pub nodes: NodeSet,
    pub clustering: Clustering,
    /// Index of the selected target cluster.
    pub cluster: usize,
    /// Total number of users in the whole network.
    pub total_users: usize,
    /// Assembled channel, present when the estimator set requires it.
    pub channel: Option<ChannelInstance>,
}

impl Draw {
    pub fn channel(&self) -> &ChannelInstance {
        self.channel
            .as_ref()
            .expect("draw realized without channel assembly")
    }
}

/// Substream tags separating the stochastic stages of one replication.
mod tags {
    pub const LAYOUT: u64 = 0x4c41_594f_5554;
    pub const CLUSTERING: u64 = 0x434c_5553_5445;
    pub const CHANNEL: u64 = 0x4348_414e;
    pub const RETRY: u64 = 0x0052_4554_5259;
}

/// Generate a layout, cluster it, select the target cluster, and (when
/// requested) assemble its channel.
pub fn realize_draw(
    scenario: &ScenarioConfig,
    selector: ClusterSelector,
    params: &FadingParams,
    stream: RngStream,
    need_channel: bool,
) -> Result<Draw> {
    let nodes = generate(scenario, stream.substream(tags::LAYOUT))?;
    let clustering = kmeans_partition(
        &nodes,
        scenario.clusters,
        stream.substream(tags::CLUSTERING),
    )?;
    let cluster = select_cluster(&clustering, selector, scenario.center());
    if clustering.bs_count(cluster) == 0 || clustering.user_count(cluster) == 0 {
        return Err(Error::EmptyCluster {
            cluster,
            bs_count: clustering.bs_count(cluster),
            user_count: clustering.user_count(cluster),
        });
    }
    let total_users = nodes.users.len();
    let channel = if need_channel {
        Some(build_channel(
            &nodes,
            &clustering,
            cluster,
            params,
            stream.substream(tags::CHANNEL),
        )?)
    } else {
        None
    };
    Ok(Draw {
        nodes,
        clustering,
        cluster,
        total_users,
        channel,
    })
}

const MAX_DEGENERATE_DRAW_RETRIES: u32 = 10;

/// Realize a draw and run `body` on it, resampling the whole layout from a
/// derived retry stream whenever the draw turns out degenerate (empty
/// target cluster, or a layout outside the spiked-Fisher frame). The retry
/// keeps all estimators of a replication on the same resampled ensemble.
pub fn with_draw_retry<T>(
    scenario: &ScenarioConfig,
    selector: ClusterSelector,
    params: &FadingParams,
    rep_stream: RngStream,
    need_channel: bool,
    body: impl Fn(Draw) -> Result<T>,
) -> Result<T> {
    let mut attempt = 0u32;
    loop {
        let stream = if attempt == 0 {
            rep_stream
        } else {
            rep_stream.substream(tags::RETRY ^ attempt as u64)
        };
        let outcome =
            realize_draw(scenario, selector, params, stream, need_channel).and_then(&body);
        match outcome {
            Err(ref e) if e.is_degenerate_draw() && attempt < MAX_DEGENERATE_DRAW_RETRIES => {
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Realize a draw, resampling the whole layout on degenerate draws.
pub fn draw_with_retry(
    scenario: &ScenarioConfig,
    selector: ClusterSelector,
    params: &FadingParams,
    rep_stream: RngStream,
    need_channel: bool,
) -> Result<Draw> {
    with_draw_retry(scenario, selector, params, rep_stream, need_channel, Ok)
}

/// Mean and sample standard deviation over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub reps: usize,
}

impl McSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        McSummary {
            mean,
            std_dev,
            reps: n,
        }
    }
}

/// Monte-Carlo capacity over `reps` replications: replication `i` draws
/// its layout, clustering, and channel from `base_stream + i`, applies the
/// estimator, and the results are merged in replication order regardless
/// of worker scheduling.
pub fn monte_carlo_capacity<F>(
    scenario: &ScenarioConfig,
    selector: ClusterSelector,
    params: &FadingParams,
    reps: usize,
    base_stream: RngStream,
    need_channel: bool,
    estimator: F,
) -> Result<McSummary>
where
    F: Fn(&Draw) -> Result<CapacityEstimate> + Sync,
{
    if reps == 0 {
        return Err(Error::invalid_argument("reps", "must be >= 1"));
    }
    scenario.validate()?;
    params.validate()?;
    let values: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = base_stream.replication(rep);
            with_draw_retry(
                scenario,
                selector,
                params,
                rep_stream,
                need_channel,
                |draw| estimator(&draw).map(|est| est.value),
            )
            .map_err(|e| Error::Replication {
                index: rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McSummary::from_values(&values))
}
