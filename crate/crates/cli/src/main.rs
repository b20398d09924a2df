//! `udcap` — capacity experiments on clustered ultra-dense networks.
//!
//! Runs a grid of user/BS ratios over a network scenario, estimating the
//! per-cluster uplink capacity with the exact log-det baseline, the
//! spiked-Fisher estimator, the closed-form diagonal limit, or the
//! continuous-density form, and emits one CSV/JSON row per (ratio, method)
//! cell. Configuration comes from a JSON file, built-in desk-scale presets,
//! or both (flags override file values).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use udcap_core::harness::{
    desk_disk_preset, desk_square_preset, emit_results, run_experiment, write_csv, write_json,
    ExperimentConfig, MethodChoice, OutputFormat,
};
use udcap_core::netgen::{ClusterSelector, ScenarioKind};
use udcap_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    /// Circular network, Poisson node counts, uniform placement.
    Disk,
    /// Square network, fixed BS count, truncated-normal placement.
    Square,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClusterArg {
    Closest,
    Median,
    Furthest,
}

impl From<ClusterArg> for ClusterSelector {
    fn from(arg: ClusterArg) -> Self {
        match arg {
            ClusterArg::Closest => ClusterSelector::Closest,
            ClusterArg::Median => ClusterSelector::Median,
            ClusterArg::Furthest => ClusterSelector::Furthest,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Fise,
    #[value(name = "closed_form")]
    ClosedForm,
    Continuous,
    Auto,
}

impl From<MethodArg> for MethodChoice {
    fn from(arg: MethodArg) -> Self {
        match arg {
            MethodArg::Exact => MethodChoice::Exact,
            MethodArg::Fise => MethodChoice::Fise,
            MethodArg::ClosedForm => MethodChoice::ClosedForm,
            MethodArg::Continuous => MethodChoice::Continuous,
            MethodArg::Auto => MethodChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "udcap",
    version,
    about = "Per-cluster uplink capacity estimation for ultra-dense networks",
    after_help = "Worker count follows the rayon default; set RAYON_NUM_THREADS to override."
)]
struct Cli {
    /// JSON experiment config; flags below override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Scenario family. Without --config this picks the desk-scale preset;
    /// with --config it replaces the scenario section by that preset when
    /// the configured kind differs.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,

    /// Comma-separated user/BS ratio grid, e.g. 0.25,0.5,1,4.
    #[arg(long, value_delimiter = ',', value_name = "RATIO,..")]
    beta: Option<Vec<f64>>,

    /// Replications per grid point.
    #[arg(long)]
    reps: Option<usize>,

    /// Root seed; identical seeds reproduce identical outputs.
    #[arg(long)]
    seed: Option<u64>,

    /// Target cluster by centroid distance rank from the network center.
    #[arg(long, value_enum)]
    cluster: Option<ClusterArg>,

    /// Comma-separated estimation methods.
    #[arg(long, value_enum, value_delimiter = ',', value_name = "METHOD,..")]
    method: Option<Vec<MethodArg>>,

    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Emit wall_time_s as zero so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let preset = |arg: ScenarioArg| match arg {
        ScenarioArg::Disk => desk_disk_preset(),
        ScenarioArg::Square => desk_square_preset(),
    };
    let mut cfg = match (&cli.config, cli.scenario) {
        (Some(path), _) => ExperimentConfig::from_json_file(path)?,
        (None, Some(arg)) => preset(arg),
        (None, None) => desk_disk_preset(),
    };
    if let Some(arg) = cli.scenario {
        let wanted = preset(arg);
        let same_kind = matches!(
            (&cfg.scenario.kind, &wanted.scenario.kind),
            (ScenarioKind::Disk { .. }, ScenarioKind::Disk { .. })
                | (ScenarioKind::Square { .. }, ScenarioKind::Square { .. })
        );
        if !same_kind {
            cfg.scenario = wanted.scenario;
        }
    }
    if let Some(betas) = &cli.beta {
        cfg.beta_grid = betas.clone();
    }
    if let Some(reps) = cli.reps {
        cfg.reps = reps;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cluster) = cli.cluster {
        cfg.cluster = cluster.into();
    }
    if let Some(methods) = &cli.method {
        cfg.methods = methods.iter().map(|&m| m.into()).collect();
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = cli.format {
        cfg.format = match format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if cli.no_timing {
        cfg.timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    let rows = run_experiment(&cfg)?;
    match &cfg.out {
        Some(path) => emit_results(&rows, path, cfg.format)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match cfg.format {
                OutputFormat::Csv => write_csv(&rows, &mut lock)?,
                OutputFormat::Json => write_json(&rows, &mut lock)?,
            }
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match &err {
                Error::InvalidConfig { .. } | Error::InvalidArgument { .. } | Error::Json(_) => {
                    "config"
                }
                _ => "runtime",
            };
            let line = serde_json::json!({ "error": err.to_string(), "kind": kind });
            eprintln!("{line}");
            if kind == "config" {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
