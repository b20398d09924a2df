//! Compare the fast estimators against the exact log-det baseline on a
//! disk network, printing one line per user/BS ratio.
//!
//! ```text
//! cargo run --release --example estimator_comparison
//! ```

use udcap_core::capacity::{exact_capacity_once, monte_carlo_capacity};
use udcap_core::channel::FadingParams;
use udcap_core::closed_form::closed_form_capacity;
use udcap_core::fise::fise_capacity;
use udcap_core::netgen::{ClusterSelector, ScenarioConfig, ScenarioKind};
use udcap_core::rng::RngStream;

fn main() {
    let fading = FadingParams::default_network();
    let reps = 50;
    println!("ratio  exact   (std)    fast    rel_err  method");
    for &beta in &[0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0] {
        let scenario = ScenarioConfig {
            scale_m: 1000.0,
            user_bs_ratio: beta,
            clusters: 25,
            kind: ScenarioKind::Disk {
                bs_intensity_per_m2: 1.0e-3,
            },
        };
        let base = RngStream::new(1, 0);
        let exact = monte_carlo_capacity(
            &scenario,
            ClusterSelector::Closest,
            &fading,
            reps,
            base,
            true,
            |d| exact_capacity_once(d.channel(), &fading),
        )
        .unwrap();
        let (fast, method) = if beta <= 1.0 {
            let fise = monte_carlo_capacity(
                &scenario,
                ClusterSelector::Closest,
                &fading,
                reps,
                base,
                true,
                |d| fise_capacity(d.channel(), d.total_users, &fading),
            )
            .unwrap();
            (fise, "fise")
        } else {
            let cf = monte_carlo_capacity(
                &scenario,
                ClusterSelector::Closest,
                &fading,
                reps,
                base,
                false,
                |d| closed_form_capacity(&d.nodes, &d.clustering, d.cluster, &fading),
            )
            .unwrap();
            (cf, "closed_form")
        };
        println!(
            "{beta:<5}  {:.4} ({:.4})  {:.4}  {:6.2}%  {method}",
            exact.mean,
            exact.std_dev,
            fast.mean,
            (fast.mean - exact.mean).abs() / exact.mean * 100.0,
        );
    }
}
