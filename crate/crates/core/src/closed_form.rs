//! Diagonal-limit capacity estimators for clusters with user/BS ratio > 1.
//!
//! With many users per BS the whitened channel Gram matrix converges to a
//! diagonal whose entries are per-BS signal-to-interference ratios built
//! from squared large-scale gains. Capacity then reduces to an average of
//! scalar logs (no matrices), and the estimate is provably invariant under
//! uniform scaling of the user density once noise is negligible. A
//! continuous companion replaces the discrete user sums with integrals of a
//! squared-gain kernel over the network and cluster regions, which drops
//! the power and noise constants entirely.

use crate::capacity::{CapacityEstimate, Method};
use crate::channel::{large_scale_gain, FadingParams};
use crate::error::{Error, Result};
use crate::geom::{voronoi_cell, Point, Region};
use crate::netgen::{Clustering, NodeSet};

/// Squared large-scale gain summed over in/out-of-cluster users for one BS.
fn gain_power_sums(
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    bs: &Point,
    params: &FadingParams,
) -> (f64, f64) {
    let mut inside = 0.0;
    let mut outside = 0.0;
    let members = &clustering.user_members[m];
    let mut next_member = members.iter().peekable();
    for (k, user) in nodes.users.iter().enumerate() {
        let gain = large_scale_gain(bs.distance(user), params);
        let squared = gain * gain;
        // `user_members` is sorted by construction; walk it in step.
        if next_member.peek() == Some(&&k) {
            inside += squared;
            next_member.next();
        } else {
            outside += squared;
        }
    }
    (inside, outside)
}

/// Limiting diagonal entry for BS `j` (index within cluster `m`):
/// `sum_in gain^2 / (N0 + P sum_out gain^2)`.
pub fn diagonal_sinr_ratio(
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    j: usize,
    params: &FadingParams,
) -> f64 {
    let bs = &nodes.bs[clustering.bs_members[m][j]];
    let (inside, outside) = gain_power_sums(nodes, clustering, m, bs, params);
    inside / (params.noise_power_w + params.tx_power_w * outside)
}

/// Closed-form capacity estimate:
/// `(1/J_m) sum_j log(1 + P r_jj)` in the configured base.
pub fn closed_form_capacity(
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    params: &FadingParams,
) -> Result<CapacityEstimate> {
    let bs_members = &clustering.bs_members[m];
    if bs_members.is_empty() {
        return Err(Error::EmptyCluster {
            cluster: m,
            bs_count: 0,
            user_count: clustering.user_count(m),
        });
    }
    let mut ln_sum = 0.0;
    for &bs_idx in bs_members {
        let bs = &nodes.bs[bs_idx];
        let (inside, outside) = gain_power_sums(nodes, clustering, m, bs, params);
        let ratio = inside / (params.noise_power_w + params.tx_power_w * outside);
        ln_sum += (1.0 + params.tx_power_w * ratio).ln();
    }
    let value = params.log_base.from_ln(ln_sum) / bs_members.len() as f64;
    Ok(CapacityEstimate::new(value, Method::ClosedForm)
        .with_diagnostic("bs_count", bs_members.len() as f64)
        .with_diagnostic("user_count", clustering.user_count(m) as f64))
}

/// Capacity change under a uniform scaling of the user density: every
/// user-sum term (signal and interference alike) is multiplied by `scale`
/// and the absolute difference of the two estimates is returned. With zero
/// noise the scaling cancels analytically and the gap is zero.
pub fn stability_gap(
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    params: &FadingParams,
    scale: f64,
) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::invalid_argument(
            "scale",
            format!("density scale must be positive, got {scale}"),
        ));
    }
    let bs_members = &clustering.bs_members[m];
    if bs_members.is_empty() {
        return Err(Error::EmptyCluster {
            cluster: m,
            bs_count: 0,
            user_count: clustering.user_count(m),
        });
    }
    let mut ln_base = 0.0;
    let mut ln_scaled = 0.0;
    for &bs_idx in bs_members {
        let bs = &nodes.bs[bs_idx];
        let (inside, outside) = gain_power_sums(nodes, clustering, m, bs, params);
        let p = params.tx_power_w;
        let n0 = params.noise_power_w;
        ln_base += (1.0 + p * inside / (n0 + p * outside)).ln();
        ln_scaled += (1.0 + p * (scale * inside) / (n0 + p * (scale * outside))).ln();
    }
    let j_m = bs_members.len() as f64;
    Ok((params.log_base.from_ln(ln_base) / j_m - params.log_base.from_ln(ln_scaled) / j_m).abs())
}

/// Squared large-scale gain as a radial kernel `gamma * d^-epsilon` with
/// piecewise-constant band coefficients.
#[derive(Debug, Clone, Copy)]
pub struct DistanceKernel {
    near_threshold_m: f64,
    far_threshold_m: f64,
}

impl DistanceKernel {
    pub fn new(params: &FadingParams) -> Self {
        DistanceKernel {
            near_threshold_m: params.near_threshold_m,
            far_threshold_m: params.far_threshold_m,
        }
    }

    /// Band coefficients `(gamma, epsilon)` at distance `d`.
    pub fn band(&self, d: f64) -> (f64, f64) {
        let d1 = self.far_threshold_m;
        if d > d1 {
            (1.0, 3.5)
        } else if d > self.near_threshold_m {
            (d1.powf(-1.5), 2.0)
        } else {
            (d1.powf(-1.5) * self.near_threshold_m.powi(-2), 0.0)
        }
    }

    /// `gamma * d^-epsilon`; equals the squared large-scale gain band by
    /// band.
    pub fn eval(&self, d: f64) -> f64 {
        let (gamma, epsilon) = self.band(d);
        if epsilon == 0.0 {
            gamma
        } else {
            gamma * d.powf(-epsilon)
        }
    }

    /// Closed-form radial cumulative `int_0^rho eval(r) r dr`; finite even
    /// for `rho = inf` because the far-field tail decays like `r^-3.5`.
    pub fn radial_cumulative(&self, rho: f64) -> f64 {
        let d0 = self.near_threshold_m;
        let d1 = self.far_threshold_m;
        let near_gamma = d1.powf(-1.5) * d0.powi(-2);
        let mid_gamma = d1.powf(-1.5);
        if rho <= d0 {
            return near_gamma * rho * rho / 2.0;
        }
        let mut total = near_gamma * d0 * d0 / 2.0;
        if rho <= d1 {
            return total + mid_gamma * (rho / d0).ln();
        }
        total += mid_gamma * (d1 / d0).ln();
        if rho.is_infinite() {
            total + d1.powf(-1.5) / 1.5
        } else {
            total + (d1.powf(-1.5) - rho.powf(-1.5)) / 1.5
        }
    }
}

const ANGULAR_BASE_NODES: usize = 64;
const ANGULAR_MAX_NODES: usize = 1 << 20;
const ANGULAR_REL_TOL: f64 = 1e-4;

/// `int_region kernel(|x - y|) dy` for `x` inside the convex region.
///
/// The radial direction integrates in closed form, leaving a periodic
/// angular integral of the cumulative kernel at the ray exit. The angular
/// grid doubles until two refinements agree to `1e-4` relative.
pub fn kernel_region_integral(region: &Region, x: &Point, kernel: &DistanceKernel) -> Result<f64> {
    if !region.contains(x) {
        return Err(Error::invalid_argument(
            "x",
            "kernel integration point must lie inside the region",
        ));
    }
    let mut n = ANGULAR_BASE_NODES;
    let mut previous = f64::NAN;
    loop {
        let step = std::f64::consts::TAU / n as f64;
        let value: f64 = (0..n)
            .map(|i| {
                let theta = (i as f64 + 0.5) * step;
                let exit = region.ray_exit(x, theta.cos(), theta.sin());
                kernel.radial_cumulative(exit)
            })
            .sum::<f64>()
            * step;
        if (value - previous).abs() <= ANGULAR_REL_TOL * value.abs() {
            return Ok(value);
        }
        if n >= ANGULAR_MAX_NODES {
            return Err(Error::QuadratureNonConvergence {
                context: "angular kernel integral did not settle within the refinement cap",
            });
        }
        previous = value;
        n *= 2;
    }
}

/// Continuous-density capacity estimate for a BS at `bs_position`:
/// `log[ int_D0 f / int_{D0 \ Dm} f ]` with the squared-gain kernel `f`.
/// Power and noise do not enter; only the geometry and the thresholds do.
pub fn continuous_uniform_capacity(
    network: &Region,
    cluster_region: &Region,
    bs_position: Point,
    params: &FadingParams,
) -> Result<CapacityEstimate> {
    if !cluster_region.contains(&bs_position) || !network.contains(&bs_position) {
        return Err(Error::invalid_argument(
            "bs_position",
            "BS must lie inside both the cluster region and the network",
        ));
    }
    let kernel = DistanceKernel::new(params);
    let network_integral = kernel_region_integral(network, &bs_position, &kernel)?;
    let cluster_integral = kernel_region_integral(cluster_region, &bs_position, &kernel)?;
    let outside = network_integral - cluster_integral;
    if !(outside > 0.0) {
        return Err(Error::invalid_argument(
            "cluster_region",
            "cluster region must be a strict subset of the network",
        ));
    }
    let value = params
        .log_base
        .from_ln(network_integral.ln() - outside.ln());
    Ok(CapacityEstimate::new(value, Method::ContinuousUniform)
        .with_diagnostic("network_integral", network_integral)
        .with_diagnostic("cluster_integral", cluster_integral))
}

/// Continuous-density estimate for a whole cluster: the cluster region is
/// the centroid's Voronoi cell clipped to the network, and per-BS values
/// are averaged over the cluster's BSs that fall inside that cell.
pub fn continuous_uniform_cluster_mean(
    network: &Region,
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    params: &FadingParams,
) -> Result<CapacityEstimate> {
    let cell = voronoi_cell(&clustering.centroids, m).intersect(network);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut network_integral = 0.0;
    let mut cluster_integral = 0.0;
    for &bs_idx in &clustering.bs_members[m] {
        let bs = nodes.bs[bs_idx];
        if !cell.contains(&bs) {
            // Empty-cluster repair can strand a BS outside its centroid's
            // cell; the continuous picture has no region for it.
            continue;
        }
        let est = continuous_uniform_capacity(network, &cell, bs, params)?;
        total += est.value;
        network_integral += est.diagnostics["network_integral"];
        cluster_integral += est.diagnostics["cluster_integral"];
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyCluster {
            cluster: m,
            bs_count: clustering.bs_count(m),
            user_count: clustering.user_count(m),
        });
    }
    let n = count as f64;
    Ok(CapacityEstimate::new(total / n, Method::ContinuousUniform)
        .with_diagnostic("bs_count", n)
        .with_diagnostic("network_integral", network_integral / n)
        .with_diagnostic("cluster_integral", cluster_integral / n))
}
