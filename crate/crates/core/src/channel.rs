//! Per-cluster channel assembly.
//!
//! For a target cluster this module builds the large-scale gain matrix from
//! BS/user distances, draws the small-scale fading matrix, and assembles the
//! noise-plus-interference matrix `N0 I + P sum h h*` over every user
//! outside the cluster. It also provides the optimal diagonal approximation
//! of the Hadamard-product channel (row means of the gain matrix) and the
//! trace of the whitened SINR matrix, computed with one factorization and
//! triangular solves rather than an explicit inverse square root.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::{Clustering, NodeSet};
use crate::rng::{one_complex_gaussian, RngStream};

/// Logarithm base used for every capacity value in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    /// Base 2: capacity in bits/s/Hz.
    #[default]
    Bits,
    /// Base e: capacity in nats/s/Hz.
    Nats,
}

impl LogBase {
    /// Convert a natural-log value into this base.
    #[inline]
    pub fn from_ln(&self, ln_value: f64) -> f64 {
        match self {
            LogBase::Bits => ln_value / std::f64::consts::LN_2,
            LogBase::Nats => ln_value,
        }
    }

    /// log of `x` in this base.
    #[inline]
    pub fn log(&self, x: f64) -> f64 {
        self.from_ln(x.ln())
    }
}

/// Propagation and power constants shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    /// Near-field threshold `d0` in meters.
    pub near_threshold_m: f64,
    /// Far-field threshold `d1` in meters.
    pub far_threshold_m: f64,
    /// Per-user transmit power in watts.
    pub tx_power_w: f64,
    /// Noise power in watts.
    pub noise_power_w: f64,
    #[serde(default)]
    pub log_base: LogBase,
}

impl FadingParams {
    /// Defaults matching the reference network setting: d0 = 10 m,
    /// d1 = 50 m, P = 1 W, N0 = 1e-12 W, capacity in bits.
    pub fn default_network() -> Self {
        FadingParams {
            near_threshold_m: 10.0,
            far_threshold_m: 50.0,
            tx_power_w: 1.0,
            noise_power_w: 1.0e-12,
            log_base: LogBase::Bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near_threshold_m > 0.0 && self.far_threshold_m > self.near_threshold_m) {
            return Err(Error::invalid_config(
                "fading.near_threshold_m",
                format!(
                    "thresholds must satisfy 0 < d0 < d1, got d0 = {}, d1 = {}",
                    self.near_threshold_m, self.far_threshold_m
                ),
            ));
        }
        if !(self.tx_power_w > 0.0) {
            return Err(Error::invalid_config(
                "fading.tx_power_w",
                format!("must be positive, got {}", self.tx_power_w),
            ));
        }
        if !(self.noise_power_w >= 0.0) {
            return Err(Error::invalid_config(
                "fading.noise_power_w",
                format!("must be nonnegative, got {}", self.noise_power_w),
            ));
        }
        Ok(())
    }
}

/// Three-band distance-based gain: `d^-1.75` in the far field,
/// `d1^-0.75 d^-1` between the thresholds, capped at `d1^-0.75 d0^-1`
/// inside the near field. Continuous and nonincreasing in `d`.
pub fn large_scale_gain(d: f64, params: &FadingParams) -> f64 {
    let d0 = params.near_threshold_m;
    let d1 = params.far_threshold_m;
    if d > d1 {
        d.powf(-1.75)
    } else if d > d0 {
        d1.powf(-0.75) / d
    } else {
        d1.powf(-0.75) / d0
    }
}

/// One realization of the target cluster's channel.
#[derive(Debug, Clone)]
pub struct ChannelInstance {
    /// `J_m x K_m` large-scale gains over in-cluster BS/user pairs.
    pub large_scale: DMatrix<f64>,
    /// `J_m x K_m` small-scale fading, i.i.d. standard complex Gaussian.
    pub small_scale: DMatrix<Complex<f64>>,
    /// `J_m x J_m` Hermitian noise-plus-interference matrix.
    pub interference: DMatrix<Complex<f64>>,
    /// Row means of `large_scale`: the optimal diagonal approximation.
    pub row_mean_gain: DVector<f64>,
}

impl ChannelInstance {
    pub fn bs_count(&self) -> usize {
        self.large_scale.nrows()
    }

    pub fn user_count(&self) -> usize {
        self.large_scale.ncols()
    }

    /// Hadamard-product channel matrix `L o G`.
    pub fn gain_matrix(&self) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(self.bs_count(), self.user_count(), |j, k| {
            self.small_scale[(j, k)].scale(self.large_scale[(j, k)])
        })
    }

    /// Cholesky factor of the interference matrix.
    pub fn interference_cholesky(&self) -> Result<Cholesky<Complex<f64>, Dyn>> {
        Cholesky::new(self.interference.clone()).ok_or(Error::Factorization {
            context: "noise-plus-interference matrix is not positive definite",
        })
    }
}

/// Assemble the channel for cluster `m`: in-cluster gain and fading
/// matrices, plus the interference sum over every out-of-cluster user in
/// the network with fresh small-scale fading per interferer.
pub fn build_channel(
    nodes: &NodeSet,
    clustering: &Clustering,
    m: usize,
    params: &FadingParams,
    stream: RngStream,
) -> Result<ChannelInstance> {
    params.validate()?;
    let bs_idx = &clustering.bs_members[m];
    let user_idx = &clustering.user_members[m];
    if bs_idx.is_empty() || user_idx.is_empty() {
        return Err(Error::EmptyCluster {
            cluster: m,
            bs_count: bs_idx.len(),
            user_count: user_idx.len(),
        });
    }
    let j_m = bs_idx.len();
    let k_m = user_idx.len();
    let mut rng = stream.rng();

    let large_scale = DMatrix::from_fn(j_m, k_m, |j, k| {
        let d = nodes.bs[bs_idx[j]].distance(&nodes.users[user_idx[k]]);
        large_scale_gain(d, params)
    });

    let mut small_scale = DMatrix::zeros(j_m, k_m);
    for j in 0..j_m {
        for k in 0..k_m {
            small_scale[(j, k)] = one_complex_gaussian(&mut rng);
        }
    }

    // Upper-triangular accumulation of sum h h* over outside users, then a
    // conjugate mirror: Hermitian by construction.
    let in_cluster: std::collections::HashSet<usize> = user_idx.iter().copied().collect();
    let mut acc = DMatrix::<Complex<f64>>::zeros(j_m, j_m);
    let mut h = vec![Complex::new(0.0, 0.0); j_m];
    for (k, user) in nodes.users.iter().enumerate() {
        if in_cluster.contains(&k) {
            continue;
        }
        for (j, slot) in h.iter_mut().enumerate() {
            let gain = large_scale_gain(nodes.bs[bs_idx[j]].distance(user), params);
            *slot = one_complex_gaussian(&mut rng).scale(gain);
        }
        for i in 0..j_m {
            let hi = h[i];
            for j in i..j_m {
                acc[(i, j)] += hi * h[j].conj();
            }
        }
    }
    let mut interference = DMatrix::zeros(j_m, j_m);
    for i in 0..j_m {
        for j in i..j_m {
            let v = acc[(i, j)].scale(params.tx_power_w);
            interference[(i, j)] = v;
            interference[(j, i)] = v.conj();
        }
        interference[(i, i)] += Complex::new(params.noise_power_w, 0.0);
    }

    let row_mean_gain = row_means(&large_scale);

    Ok(ChannelInstance {
        large_scale,
        small_scale,
        interference,
        row_mean_gain,
    })
}

/// Row means of a gain matrix: the diagonal that minimizes the expected
/// Frobenius error of replacing `L o G` by `diag(c) G`.
pub fn row_means(large_scale: &DMatrix<f64>) -> DVector<f64> {
    let k = large_scale.ncols() as f64;
    DVector::from_fn(large_scale.nrows(), |j, _| {
        large_scale.row(j).iter().sum::<f64>() / k
    })
}

/// Minimum of `E || L o G - diag(c) G ||_F^2` over diagonals `c`, attained
/// at the row means: `sum_j [ sum_k l_jk^2 - (sum_k l_jk)^2 / K ]`.
pub fn hadamard_approx_error(large_scale: &DMatrix<f64>) -> f64 {
    let k = large_scale.ncols() as f64;
    (0..large_scale.nrows())
        .map(|j| {
            let row = large_scale.row(j);
            let sum: f64 = row.iter().sum();
            let sum_sq: f64 = row.iter().map(|l| l * l).sum();
            sum_sq - sum * sum / k
        })
        .sum()
}

/// Trace of the whitened SINR matrix
/// `P Xi^-1/2 Ltilde G G* Ltilde* Xi^-1/2`, computed as
/// `P sum_k (Ltilde g_k)* Xi^-1 (Ltilde g_k)` via one Cholesky
/// factorization and `K_m` triangular solves.
pub fn sinr_trace(ch: &ChannelInstance, params: &FadingParams) -> Result<f64> {
    let chol = ch.interference_cholesky()?;
    let lower = chol.l();
    let mut total = 0.0;
    for k in 0..ch.user_count() {
        let v = DVector::from_fn(ch.bs_count(), |j, _| {
            ch.small_scale[(j, k)].scale(ch.row_mean_gain[j])
        });
        let y = lower
            .solve_lower_triangular(&v)
            .ok_or(Error::Factorization {
                context: "triangular solve against the interference factor",
            })?;
        total += y.norm_squared();
    }
    Ok(params.tx_power_w * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{generate, kmeans_partition, ScenarioConfig, ScenarioKind};
    use nalgebra::SymmetricEigen;

    fn params() -> FadingParams {
        FadingParams::default_network()
    }

    fn small_disk_draw(seed: u64) -> (NodeSet, Clustering) {
        let cfg = ScenarioConfig {
            scale_m: 1000.0,
            user_bs_ratio: 0.5,
            clusters: 4,
            kind: ScenarioKind::Disk {
                bs_intensity_per_m2: 60.0 / (std::f64::consts::PI * 1.0e6),
            },
        };
        let stream = RngStream::new(seed, 0);
        let nodes = generate(&cfg, stream.substream(1)).unwrap();
        let clustering = kmeans_partition(&nodes, 4, stream.substream(2)).unwrap();
        (nodes, clustering)
    }

    #[test]
    fn gain_branch_values() {
        let p = params();
        // Continuity at d = d1: both branches give 50^-1.75.
        let at_d1 = large_scale_gain(50.0, &p);
        assert!((at_d1 - 50.0_f64.powf(-1.75)).abs() < 1e-18);
        assert!((at_d1 - 50.0_f64.powf(-0.75) / 50.0).abs() < 1e-18);
        assert!((at_d1 - 1.064e-3).abs() < 1e-6);
        // Near-field cap below d0.
        let near = large_scale_gain(5.0, &p);
        assert!((near - 50.0_f64.powf(-0.75) / 10.0).abs() < 1e-18);
        assert!((near - 5.32e-3).abs() < 1e-5);
        // Far field.
        let far = large_scale_gain(1000.0, &p);
        assert!((far - 1000.0_f64.powf(-1.75)).abs() < 1e-18);
        assert!((far - 5.62e-6).abs() < 1e-8);
    }

    #[test]
    fn gain_is_continuous_at_thresholds() {
        let p = params();
        for &d in &[p.near_threshold_m, p.far_threshold_m] {
            let below = large_scale_gain(d * (1.0 - 1e-12), &p);
            let above = large_scale_gain(d * (1.0 + 1e-12), &p);
            let at = large_scale_gain(d, &p);
            assert!((below - at).abs() / at < 1e-9);
            assert!((above - at).abs() / at < 1e-9);
        }
    }

    #[test]
    fn interference_reduces_to_noise_without_outside_users() {
        // Single cluster holding every node: the interference sum is empty.
        let (nodes, _) = small_disk_draw(14);
        let clustering = kmeans_partition(&nodes, 1, RngStream::new(14, 3)).unwrap();
        let ch = build_channel(&nodes, &clustering, 0, &params(), RngStream::new(14, 4)).unwrap();
        let n0 = params().noise_power_w;
        for i in 0..ch.bs_count() {
            for j in 0..ch.bs_count() {
                let expected = if i == j { n0 } else { 0.0 };
                assert_eq!(ch.interference[(i, j)], Complex::new(expected, 0.0));
            }
        }
    }

    #[test]
    fn single_interferer_gives_rank_one_update() {
        let (nodes, _) = small_disk_draw(15);
        // Rebuild as one cluster, then carve out a single outside user.
        let mut clustering = kmeans_partition(&nodes, 1, RngStream::new(15, 3)).unwrap();
        let outsider = clustering.user_members[0].pop().unwrap();
        let ch = build_channel(&nodes, &clustering, 0, &params(), RngStream::new(15, 4)).unwrap();

        let n0 = params().noise_power_w;
        let mut update = ch.interference.clone();
        for i in 0..ch.bs_count() {
            update[(i, i)] -= Complex::new(n0, 0.0);
        }
        // Rank 1: one dominant singular value, trace P * sum |h_j|^2 > 0.
        let svd = update.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[0] > 0.0);
        assert!(sv[1] < sv[0] * 1e-10, "second singular value {}", sv[1]);
        let trace: f64 = (0..ch.bs_count()).map(|i| update[(i, i)].re).sum();
        assert!((trace - sv[0]).abs() / sv[0] < 1e-10);
        let _ = outsider;
    }

    #[test]
    fn interference_is_hermitian_with_noise_floor() {
        let (nodes, clustering) = small_disk_draw(16);
        let ch = build_channel(&nodes, &clustering, 0, &params(), RngStream::new(16, 4)).unwrap();
        let adjoint = ch.interference.adjoint();
        assert_eq!(ch.interference, adjoint, "exact Hermitian assembly");
        let eig = SymmetricEigen::new(ch.interference.clone());
        let min = eig.eigenvalues.min();
        assert!(
            min >= params().noise_power_w - 1e-12,
            "min eigenvalue {min}"
        );
    }

    #[test]
    fn approx_error_zero_for_constant_rows() {
        let l = DMatrix::from_row_slice(2, 3, &[2.0, 2.0, 2.0, 7.0, 7.0, 7.0]);
        assert_eq!(hadamard_approx_error(&l), 0.0);
    }

    #[test]
    fn approx_error_known_value() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        // (1 + 4 - 9/2) + (9 + 25 - 64/2) = 0.5 + 2 = 2.5
        assert!((hadamard_approx_error(&l) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn row_mean_diagonal_minimizes_monte_carlo_error() {
        // Brute-force sweep: scaling the row-mean diagonal away from 1
        // only increases the sampled Frobenius error.
        let l = DMatrix::from_fn(4, 6, |j, k| 0.3 + ((j * 7 + k * 3) % 5) as f64 * 0.2);
        let means = row_means(&l);
        let draws = 10_000;
        let stream = RngStream::new(77, 0);
        let gs: Vec<DMatrix<Complex<f64>>> = (0..draws)
            .map(|i| {
                let flat = stream.replication(i).sample_complex_gaussian(4 * 6);
                DMatrix::from_vec(4, 6, flat)
            })
            .collect();
        let cost = |scale: f64| -> f64 {
            gs.iter()
                .map(|g| {
                    let mut err = 0.0;
                    for j in 0..4 {
                        for k in 0..6 {
                            let delta = g[(j, k)].scale(l[(j, k)] - scale * means[j]);
                            err += delta.norm_sqr();
                        }
                    }
                    err
                })
                .sum::<f64>()
                / draws as f64
        };
        let at_mean = cost(1.0);
        for &s in &[0.8, 0.9, 1.1, 1.2] {
            assert!(cost(s) > at_mean, "scale {s} beats the row means");
        }
        // The sampled minimum agrees with the analytic formula within 3
        // standard errors of the Monte-Carlo mean.
        let analytic = hadamard_approx_error(&l);
        let per_draw: Vec<f64> = gs
            .iter()
            .map(|g| {
                let mut err = 0.0;
                for j in 0..4 {
                    for k in 0..6 {
                        let delta = g[(j, k)].scale(l[(j, k)] - means[j]);
                        err += delta.norm_sqr();
                    }
                }
                err
            })
            .collect();
        let mean: f64 = per_draw.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            per_draw.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - analytic).abs() < 3.0 * se,
            "MC {mean} vs analytic {analytic} (se {se})"
        );
    }

    #[test]
    fn sinr_trace_identity_whitening() {
        // Xi = I and Ltilde = I reduce the trace to P ||G||_F^2.
        let j = 6;
        let k = 4;
        let stream = RngStream::new(31, 0);
        let g = DMatrix::from_vec(j, k, stream.sample_complex_gaussian(j * k));
        let mut p = params();
        p.noise_power_w = 1.0;
        let ch = ChannelInstance {
            large_scale: DMatrix::from_element(j, k, 1.0),
            small_scale: g.clone(),
            interference: DMatrix::identity(j, j),
            row_mean_gain: DVector::from_element(j, 1.0),
        };
        let trace = sinr_trace(&ch, &p).unwrap();
        let expected = p.tx_power_w * g.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((trace - expected).abs() / expected < 1e-12);

        // Xi = c I scales the trace by 1/c.
        let c = 4.0;
        let scaled = ChannelInstance {
            interference: DMatrix::identity(j, j).map(|v: Complex<f64>| v.scale(c)),
            ..ch
        };
        let trace_scaled = sinr_trace(&scaled, &p).unwrap();
        assert!((trace_scaled - expected / c).abs() / (expected / c) < 1e-12);
    }

    #[test]
    fn sinr_trace_matches_dense_oracle() {
        // Explicitly form P_m through the eigen square root of Xi.
        let (nodes, clustering) = small_disk_draw(18);
        let m = clustering
            .bs_members
            .iter()
            .enumerate()
            .find(|(i, b)| !b.is_empty() && !clustering.user_members[*i].is_empty())
            .map(|(i, _)| i)
            .unwrap();
        let ch = build_channel(&nodes, &clustering, m, &params(), RngStream::new(18, 5)).unwrap();
        let trace = sinr_trace(&ch, &params()).unwrap();

        let eig = SymmetricEigen::new(ch.interference.clone());
        let inv_sqrt_vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| 1.0 / v.sqrt()).collect();
        let u = &eig.eigenvectors;
        let inv_sqrt =
            u * DMatrix::from_diagonal(
                &DVector::from_vec(inv_sqrt_vals).map(|v| Complex::new(v, 0.0)),
            ) * u.adjoint();
        let ltilde_g = DMatrix::from_fn(ch.bs_count(), ch.user_count(), |j, k| {
            ch.small_scale[(j, k)].scale(ch.row_mean_gain[j])
        });
        let whitened = &inv_sqrt * &ltilde_g;
        let pm = (&whitened * whitened.adjoint()).scale(params().tx_power_w);
        let oracle: f64 = (0..ch.bs_count()).map(|i| pm[(i, i)].re).sum();
        assert!(
            (trace - oracle).abs() / oracle < 1e-9,
            "trace {trace} vs oracle {oracle}"
        );
    }

    proptest::proptest! {
        #[test]
        fn gain_is_nonincreasing(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
            let p = params();
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(large_scale_gain(near, &p) >= large_scale_gain(far, &p));
        }
    }
}
