//! Benchmark fixtures shared by the criterion targets.

use udcap_core::capacity::{draw_with_retry, Draw};
use udcap_core::channel::FadingParams;
use udcap_core::netgen::{ClusterSelector, ScenarioConfig, ScenarioKind};
use udcap_core::rng::RngStream;

/// A disk-scenario draw whose target cluster has roughly `bs_count` BSs.
///
/// Cluster count is fixed at 9, so the expected network size scales with
/// the requested cluster size.
pub fn disk_draw(bs_count: usize, user_bs_ratio: f64, seed: u64) -> (Draw, FadingParams, usize) {
    let fading = FadingParams::default_network();
    let scenario = ScenarioConfig {
        scale_m: 1000.0,
        user_bs_ratio,
        clusters: 9,
        kind: ScenarioKind::Disk {
            bs_intensity_per_m2: (bs_count * 9) as f64 / (std::f64::consts::PI * 1.0e6),
        },
    };
    let draw = draw_with_retry(
        &scenario,
        ClusterSelector::Closest,
        &fading,
        RngStream::new(seed, 0),
        true,
    )
    .expect("bench draw");
    let total_users = draw.total_users;
    (draw, fading, total_users)
}
