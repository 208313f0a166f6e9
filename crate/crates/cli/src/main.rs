// SPDX-License-Identifier: Apache-2.0

//! `permachain` command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use permachain::config::ConfigError;
use permachain::nodes::NodeTableError;
use permachain::report::ReportError;
use permachain::workload::ScheduleError;
use permachain::{LoadSchedule, NodeTable, Protocol, RunConfig, Scenario, SimError, SimReport};
use thiserror::Error;

const SEED_ENV: &str = "PERMACHAIN_SEED";

/// Bundled scenario presets, in listing order.
const PRESETS: &[(&str, &str)] = &[
    ("situation1", include_str!("../scenarios/situation1.json")),
    ("situation2", include_str!("../scenarios/situation2.json")),
    ("situation3", include_str!("../scenarios/situation3.json")),
    ("situation4", include_str!("../scenarios/situation4.json")),
    ("pbft-viewchange", include_str!("../scenarios/pbft-viewchange.json")),
    ("poa-baseline", include_str!("../scenarios/poa-baseline.json")),
    ("poet-baseline", include_str!("../scenarios/poet-baseline.json")),
];

/// Deterministic simulator for permissioned blockchain consensus.
#[derive(Debug, Parser)]
#[command(name = "permachain", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH", required_unless_present_any = ["scenario", "list_scenarios"])]
    config: Option<PathBuf>,
    /// Node table (.json or .csv). Overrides the path in the config.
    #[arg(long, value_name = "PATH")]
    nodes: Option<PathBuf>,
    /// Transaction load schedule (JSON). Overrides the path in the config.
    #[arg(long, value_name = "PATH")]
    transactions: Option<PathBuf>,
    /// Directory for report.json and timeseries.csv.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// RNG seed. Takes precedence over the config and PERMACHAIN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["pbft", "poa", "poet"])]
    protocol: Option<String>,
    /// Run a bundled preset instead of a config file.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    scenario: Option<String>,
    /// Also write the per-node height timeseries as CSV.
    #[arg(long)]
    emit_csv: bool,
    /// Print the bundled presets and exit.
    #[arg(long)]
    list_scenarios: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NodeTableError> for CliError {
    fn from(e: NodeTableError) -> Self {
        match e {
            NodeTableError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(format!("node table: {e}")),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(format!("transactions: {e}")),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            SimError::Schedule(s) => s.into(),
            SimError::UnknownOrigin(_) => CliError::Validation(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn has_seed(config: &serde_json::Value) -> bool {
    config.get("seed").is_some()
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Resolves a path from the config relative to the config's directory.
fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

struct Inputs {
    config: RunConfig,
    nodes: NodeTable,
    schedule: LoadSchedule,
}

fn preset(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Validation(format!(
                "unknown scenario {name:?} (available: {})",
                names.join(", ")
            ))
        })
}

fn load_inputs(args: &Args) -> Result<Inputs, CliError> {
    let (raw_config, mut config, nodes, schedule) = if let Some(name) = &args.scenario {
        let text = preset(name)?;
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Internal(format!("preset {name}: {e}")))?;
        let scenario = Scenario::from_json_str(text)
            .map_err(|e| CliError::Internal(format!("preset {name}: {e}")))?;
        let raw_config = raw.get("config").cloned().unwrap_or_default();
        (raw_config, scenario.config, Some(scenario.nodes), Some(scenario.schedule))
    } else {
        let path = args.config.as_deref().expect("clap requires --config");
        let text = read(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(ConfigError::from(e).to_string()))?;
        let mut config = RunConfig::from_json_str(&text)?;
        config.nodes = config.nodes.map(|p| relative_to(path, &p));
        config.transactions = config.transactions.map(|p| relative_to(path, &p));
        (raw, config, None, None)
    };

    if let Some(p) = &args.protocol {
        config.protocol = p.parse::<Protocol>()?;
    }
    match (args.seed, has_seed(&raw_config), env_seed()?) {
        (Some(seed), _, _) => config.seed = seed,
        (None, false, Some(seed)) => config.seed = seed,
        _ => {}
    }
    if let Some(p) = &args.nodes {
        config.nodes = Some(p.clone());
    }
    if let Some(p) = &args.transactions {
        config.transactions = Some(p.clone());
    }
    config.validate()?;

    let nodes = match (&args.nodes, nodes) {
        (None, Some(table)) => table,
        _ => {
            let path = config.nodes.as_deref().ok_or_else(|| {
                CliError::Validation("no node table: pass --nodes or set `nodes` in the config".into())
            })?;
            NodeTable::load(path, config.authority_rule)?
        }
    };
    let schedule = match (&args.transactions, schedule) {
        (None, Some(s)) if args.nodes.is_none() => s,
        (None, Some(s)) => {
            s.validate_nodes(&nodes)?;
            s
        }
        _ => {
            let path = config.transactions.as_deref().ok_or_else(|| {
                CliError::Validation(
                    "no transaction schedule: pass --transactions or set `transactions` in the config".into(),
                )
            })?;
            LoadSchedule::load(path, &nodes)?
        }
    };
    Ok(Inputs {
        config,
        nodes,
        schedule,
    })
}

fn summary(report: &SimReport) -> String {
    let benign_committed = report
        .benign()
        .map(|n| n.tx_count)
        .max()
        .unwrap_or(0);
    let heights: Vec<String> = report
        .nodes
        .iter()
        .map(|n| {
            let mark = if n.byzantine.is_honest() { "" } else { "*" };
            format!("{}{}:{}", n.node.0, mark, n.block_count)
        })
        .collect();
    format!(
        "{} days={} txs_committed={}/{} benign_committed={} heights=[{}] view_changes={}",
        report.config.protocol,
        report.totals.days,
        report.totals.txs_committed,
        report.totals.txs_scheduled,
        benign_committed,
        heights.join(" "),
        report.totals.view_changes,
    )
}

fn run(args: &Args) -> Result<(), CliError> {
    if args.list_scenarios {
        for (name, text) in PRESETS {
            let s = Scenario::from_json_str(text)
                .map_err(|e| CliError::Internal(format!("preset {name}: {e}")))?;
            println!("{name:<16} {}", s.description);
        }
        return Ok(());
    }
    let inputs = load_inputs(args)?;
    let sim = permachain::Simulation::new(inputs.config, inputs.nodes, inputs.schedule)?;
    let result = sim.run_all()?;
    let report = &result.report;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    report.emit_json(&args.out.join("report.json"))?;
    if args.emit_csv {
        report.emit_timeseries_csv(&args.out.join("timeseries.csv"))?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", summary(report));
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("permachain: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
