//! Experiment orchestration: config parsing, replication control, method
//! dispatch, error metrics, and CSV/JSON result emission.
//!
//! One experiment sweeps a grid of user/BS ratios. For each grid point,
//! every requested method is evaluated on the *same* replicated draws
//! (layout, clustering, channel), so cross-method errors are not inflated
//! by independent sampling noise. In `auto` mode the spiked-Fisher
//! estimator handles ratios at or below one, while ratios above one reuse
//! a single closed-form estimate computed at a reference ratio, matching
//! the stability property of the diagonal limit.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    exact_capacity_once, with_draw_retry, CapacityEstimate, Draw, McSummary, Method,
};
use crate::channel::FadingParams;
use crate::closed_form::{closed_form_capacity, continuous_uniform_cluster_mean};
use crate::error::{Error, Result};
use crate::fise::fise_capacity;
use crate::netgen::{ClusterSelector, ScenarioConfig, ScenarioKind};
use crate::rng::RngStream;

/// Method selection in a config or on the CLI. `Auto` dispatches on the
/// grid ratio: spiked-Fisher at or below one, closed form above one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Exact,
    Fise,
    ClosedForm,
    Continuous,
    Auto,
}

impl MethodChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MethodChoice::Exact => "exact",
            MethodChoice::Fise => "fise",
            MethodChoice::ClosedForm => "closed_form",
            MethodChoice::Continuous => "continuous",
            MethodChoice::Auto => "auto",
        }
    }

    fn fixed_method(&self) -> Option<Method> {
        match self {
            MethodChoice::Exact => Some(Method::Exact),
            MethodChoice::Fise => Some(Method::Fise),
            MethodChoice::ClosedForm => Some(Method::ClosedForm),
            MethodChoice::Continuous => Some(Method::ContinuousUniform),
            MethodChoice::Auto => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default = "FadingParams::default_network")]
    pub fading: FadingParams,
    /// User/BS ratios to sweep; each overrides `scenario.user_bs_ratio`.
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_selector")]
    pub cluster: ClusterSelector,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodChoice>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// When false, the wall_time_s column is emitted as zero so repeated
    /// runs produce byte-identical output files.
    #[serde(default = "default_timing")]
    pub timing: bool,
}

fn default_selector() -> ClusterSelector {
    ClusterSelector::Closest
}

fn default_beta_grid() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0]
}

fn default_methods() -> Vec<MethodChoice> {
    vec![MethodChoice::Exact, MethodChoice::Auto]
}

fn default_reps() -> usize {
    50
}

fn default_timing() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.fading.validate()?;
        if self.beta_grid.is_empty() {
            return Err(Error::invalid_config("beta_grid", "must not be empty"));
        }
        for &beta in &self.beta_grid {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::invalid_config(
                    "beta_grid",
                    format!("ratios must be positive and finite, got {beta}"),
                ));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::invalid_config("methods", "must not be empty"));
        }
        if self.reps == 0 {
            return Err(Error::invalid_config("reps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Desk-scale disk preset: about 300 BSs in a 1 km disk, 9 clusters.
pub fn desk_disk_preset() -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig {
            scale_m: 1000.0,
            user_bs_ratio: 0.5,
            clusters: 9,
            kind: ScenarioKind::Disk {
                bs_intensity_per_m2: 300.0 / (std::f64::consts::PI * 1.0e6),
            },
        },
        fading: FadingParams::default_network(),
        beta_grid: vec![0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0],
        cluster: ClusterSelector::Closest,
        methods: vec![MethodChoice::Exact, MethodChoice::Auto],
        reps: 50,
        seed: 1,
        out: None,
        format: OutputFormat::Csv,
        timing: true,
    }
}

/// Desk-scale square preset with truncated-normal node placement.
pub fn desk_square_preset() -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig {
            scale_m: 1000.0,
            user_bs_ratio: 0.5,
            clusters: 9,
            kind: ScenarioKind::Square {
                bs_count: 300,
                mean_m: 0.0,
                std_dev_m: 600.0,
            },
        },
        ..desk_disk_preset()
    }
}

/// One output row: a (scenario, beta, cluster, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub beta: f64,
    pub cluster: String,
    pub method: String,
    pub capacity_mean: f64,
    pub capacity_std: f64,
    /// `|mean - exact_mean| / exact_mean`; present iff `exact` is among
    /// the configured methods.
    pub rel_err: Option<f64>,
    pub wall_time_s: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Evaluate one method on one realized draw.
pub fn estimate_method(
    method: Method,
    draw: &Draw,
    scenario: &ScenarioConfig,
    fading: &FadingParams,
) -> Result<CapacityEstimate> {
    match method {
        Method::Exact => exact_capacity_once(draw.channel(), fading),
        Method::Fise => fise_capacity(draw.channel(), draw.total_users, fading),
        Method::ClosedForm => {
            closed_form_capacity(&draw.nodes, &draw.clustering, draw.cluster, fading)
        }
        Method::ContinuousUniform => continuous_uniform_cluster_mean(
            &scenario.region(),
            &draw.nodes,
            &draw.clustering,
            draw.cluster,
            fading,
        ),
    }
}

#[derive(Debug, Clone, Copy)]
struct MethodOutcome {
    summary: McSummary,
    seconds: f64,
}

/// Run every method in `methods` against the same replicated draws.
/// Per-method values merge in replication order, so the outcome does not
/// depend on worker scheduling; `seconds` accumulates estimator-only time.
fn run_shared(
    scenario: &ScenarioConfig,
    selector: ClusterSelector,
    fading: &FadingParams,
    reps: usize,
    base_stream: RngStream,
    methods: &[Method],
) -> Result<Vec<MethodOutcome>> {
    let need_channel = methods.iter().any(Method::needs_channel);
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            with_draw_retry(
                scenario,
                selector,
                fading,
                base_stream.replication(rep),
                need_channel,
                |draw| {
                    methods
                        .iter()
                        .map(|&method| {
                            let start = Instant::now();
                            let est = estimate_method(method, &draw, scenario, fading)?;
                            Ok((est.value, start.elapsed().as_secs_f64()))
                        })
                        .collect::<Result<Vec<(f64, f64)>>>()
                },
            )
            .map_err(|e| Error::Replication {
                index: rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((0..methods.len())
        .map(|mi| {
            let values: Vec<f64> = per_rep.iter().map(|rep| rep[mi].0).collect();
            let seconds: f64 = per_rep.iter().map(|rep| rep[mi].1).sum();
            MethodOutcome {
                summary: McSummary::from_values(&values),
                seconds,
            }
        })
        .collect())
}

mod tags {
    /// Offset separating per-beta replication streams.
    pub const BETA_GRID: u64 = 0x4245_5441;
    /// Stream for the auto-mode closed-form reference run.
    pub const AUTO_REFERENCE: u64 = 0x4155_544f;
}

/// Reference ratio for the auto-mode closed-form substitution: the middle
/// element of the sorted above-one part of the grid.
fn auto_reference_beta(beta_grid: &[f64]) -> Option<f64> {
    let mut above: Vec<f64> = beta_grid.iter().copied().filter(|&b| b > 1.0).collect();
    if above.is_empty() {
        return None;
    }
    above.sort_by(|a, b| a.partial_cmp(b).unwrap());
    above.dedup();
    Some(above[(above.len() - 1) / 2])
}

/// Run the configured experiment grid and return one row per
/// (beta, method) cell, in config order, reproducible bit-for-bit from the
/// seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0);
    let has_exact = cfg.methods.contains(&MethodChoice::Exact);
    let has_auto = cfg.methods.contains(&MethodChoice::Auto);

    // Auto mode computes the closed form once at the reference ratio and
    // reuses that estimate for every above-one grid point.
    let auto_reference: Option<MethodOutcome> = match auto_reference_beta(&cfg.beta_grid) {
        Some(ref_beta) if has_auto => {
            let scenario = cfg.scenario.with_user_bs_ratio(ref_beta);
            let outcomes = run_shared(
                &scenario,
                cfg.cluster,
                &cfg.fading,
                cfg.reps,
                root.substream(tags::AUTO_REFERENCE),
                &[Method::ClosedForm],
            )?;
            Some(outcomes[0])
        }
        _ => None,
    };

    let mut rows = Vec::new();
    for (beta_index, &beta) in cfg.beta_grid.iter().enumerate() {
        let scenario = cfg.scenario.with_user_bs_ratio(beta);
        let base = root.substream(tags::BETA_GRID ^ beta_index as u64);

        // Resolve choices, marking which ones run here and which reuse the
        // auto reference outcome.
        let resolved: Vec<(MethodChoice, Method, bool)> = cfg
            .methods
            .iter()
            .map(|&choice| match choice.fixed_method() {
                Some(m) => (choice, m, false),
                None if beta <= 1.0 => (choice, Method::Fise, false),
                None => (choice, Method::ClosedForm, true),
            })
            .collect();

        let mut to_run: Vec<Method> = Vec::new();
        for &(_, method, substituted) in &resolved {
            if !substituted && !to_run.contains(&method) {
                to_run.push(method);
            }
        }
        let outcomes = run_shared(&scenario, cfg.cluster, &cfg.fading, cfg.reps, base, &to_run)?;
        let outcome_for = |method: Method| -> MethodOutcome {
            let idx = to_run.iter().position(|&m| m == method).unwrap();
            outcomes[idx]
        };
        let exact_mean = has_exact.then(|| outcome_for(Method::Exact).summary.mean);

        for &(_, method, substituted) in &resolved {
            let outcome = if substituted {
                auto_reference.expect("reference run exists when auto sees beta > 1")
            } else {
                outcome_for(method)
            };
            let rel_err = exact_mean.map(|exact| (outcome.summary.mean - exact).abs() / exact);
            rows.push(ResultRow {
                scenario: cfg.scenario.kind.name().to_string(),
                beta,
                cluster: cfg.cluster.name().to_string(),
                method: method.name().to_string(),
                capacity_mean: outcome.summary.mean,
                capacity_std: outcome.summary.std_dev,
                rel_err,
                wall_time_s: if cfg.timing { outcome.seconds } else { 0.0 },
                reps: cfg.reps,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "scenario,beta,cluster,method,capacity_mean,capacity_std,rel_err,wall_time_s,reps,seed";

/// Ten significant digits, scientific notation; round-trips through `f64`
/// parsing at that precision.
fn sig10(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.scenario,
            row.beta,
            row.cluster,
            row.method,
            sig10(row.capacity_mean),
            sig10(row.capacity_std),
            row.rel_err.map(sig10).unwrap_or_default(),
            sig10(row.wall_time_s),
            row.reps,
            row.seed,
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ResultRow], out: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, rows)?;
    writeln!(out)?;
    Ok(())
}

/// Write rows to `path` in the requested format.
pub fn emit_results(rows: &[ResultRow], path: &Path, format: OutputFormat) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(rows, &mut file)?,
        OutputFormat::Json => write_json(rows, &mut file)?,
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny, fast config for orchestration tests.
    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioConfig {
                scale_m: 1000.0,
                user_bs_ratio: 0.5,
                clusters: 5,
                kind: ScenarioKind::Disk {
                    bs_intensity_per_m2: 100.0 / (std::f64::consts::PI * 1.0e6),
                },
            },
            fading: FadingParams::default_network(),
            beta_grid: vec![0.5],
            cluster: ClusterSelector::Closest,
            methods: vec![MethodChoice::Exact],
            reps: 2,
            seed: 7,
            out: None,
            format: OutputFormat::Csv,
            timing: false,
        }
    }

    #[test]
    fn validation_reports_field_names() {
        let mut cfg = tiny_config();
        cfg.beta_grid.clear();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("beta_grid"), "{err}");

        let mut cfg = tiny_config();
        cfg.reps = 0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("reps"), "{err}");

        let mut cfg = tiny_config();
        cfg.methods.clear();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("methods"), "{err}");
    }

    #[test]
    fn exact_rows_have_zero_rel_err() {
        let cfg = tiny_config();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].method, "exact");
        assert_eq!(rows[0].rel_err, Some(0.0));
        assert_eq!(rows[0].reps, 2);

        // Same config, same rows.
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn auto_dispatches_on_beta() {
        let mut cfg = tiny_config();
        cfg.methods = vec![MethodChoice::Auto];
        cfg.beta_grid = vec![0.5, 4.0];
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "fise");
        assert_eq!(rows[1].method, "closed_form");
    }

    #[test]
    fn auto_substitutes_one_closed_form_above_one() {
        let mut cfg = tiny_config();
        cfg.methods = vec![MethodChoice::Auto];
        cfg.beta_grid = vec![2.0, 3.0, 4.0];
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        // One estimate computed at the reference ratio, reused everywhere.
        assert_eq!(rows[0].capacity_mean, rows[1].capacity_mean);
        assert_eq!(rows[1].capacity_mean, rows[2].capacity_mean);
        assert_eq!(rows[0].capacity_std, rows[2].capacity_std);
        assert!(rows.iter().all(|r| r.method == "closed_form"));
    }

    #[test]
    fn reference_beta_is_the_middle_of_the_above_one_grid() {
        assert_eq!(auto_reference_beta(&[2.0, 3.0, 4.0]), Some(3.0));
        assert_eq!(auto_reference_beta(&[0.5, 4.0, 2.0, 3.0]), Some(3.0));
        assert_eq!(auto_reference_beta(&[0.25, 0.5]), None);
        assert_eq!(auto_reference_beta(&[2.0]), Some(2.0));
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let empty: Vec<ResultRow> = Vec::new();
        let mut buf = Vec::new();
        write_csv(&empty, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);

        let row = ResultRow {
            scenario: "disk".into(),
            beta: 0.5,
            cluster: "closest".into(),
            method: "exact".into(),
            capacity_mean: std::f64::consts::PI,
            capacity_std: 0.012345678912345,
            rel_err: None,
            wall_time_s: 1.5,
            reps: 50,
            seed: 9,
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "disk");
        assert_eq!(fields[6], "", "absent rel_err is an empty field");
        let parsed_mean: f64 = fields[4].parse().unwrap();
        let rel = (parsed_mean - row.capacity_mean).abs() / row.capacity_mean;
        assert!(rel < 1e-9, "10 significant digits survive the round trip");
        let parsed_std: f64 = fields[5].parse().unwrap();
        assert!((parsed_std - row.capacity_std).abs() / row.capacity_std < 1e-9);
    }

    #[test]
    fn json_uses_csv_field_names() {
        let row = ResultRow {
            scenario: "square".into(),
            beta: 2.0,
            cluster: "median".into(),
            method: "closed_form".into(),
            capacity_mean: 1.25,
            capacity_std: 0.0,
            rel_err: Some(0.07),
            wall_time_s: 0.0,
            reps: 1,
            seed: 3,
        };
        let mut buf = Vec::new();
        write_json(&[row], &mut buf).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let obj = &parsed[0];
        for key in CSV_HEADER.split(',') {
            assert!(obj.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(obj["rel_err"], 0.07);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = desk_disk_preset();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
