//! Command-line interface: scenario runs, plan compilation and the
//! embedded example scenarios.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::contactplan::export_plan;
use crate::scenario::{
    builtin_names, builtin_toml, parse_duration, run_scenario, RunOptions, ScenarioConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "ipnsim",
    about = "Deterministic interplanetary DTN network simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and print its closing summary.
    Run(RunArgs),
    /// Compile a scenario's contact plan and print it.
    Plan(SourceArgs),
    /// List the built-in scenarios.
    Scenarios,
    /// Print a built-in scenario file, ready to edit.
    ExportScenario(ExportArgs),
}

/// Where a scenario comes from: a built-in name or a file on disk.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Name of a built-in scenario (see `scenarios`).
    #[arg(long)]
    scenario: Option<String>,
    /// Path to a scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Stop the run early, e.g. "12h" or "30d" (default: the horizon).
    #[arg(long)]
    until: Option<String>,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory to write metrics.jsonl and summary.csv into.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log the route chosen for every forwarding decision.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Name of the built-in scenario to print.
    name: String,
}

fn load_scenario(src: &SourceArgs) -> Result<ScenarioConfig, String> {
    let text = match (&src.scenario, &src.config) {
        (Some(name), None) => builtin_toml(name)
            .map(str::to_string)
            .ok_or_else(|| {
                format!(
                    "no built-in scenario \"{name}\" (available: {})",
                    builtin_names().join(", ")
                )
            })?,
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        _ => return Err("pass exactly one of --scenario <name> or --config <path>".to_string()),
    };
    ScenarioConfig::from_toml_str(&text).map_err(|e| e.to_string())
}

fn cmd_run(args: &RunArgs) -> Result<(), String> {
    let sc = load_scenario(&args.source)?;
    let until_s = args
        .until
        .as_deref()
        .map(|s| parse_duration(s).map_err(|e| format!("--until: {e}")))
        .transpose()?;
    let opts = RunOptions {
        seed: args.seed,
        until_s,
        trace: args.trace,
    };
    let out = run_scenario(&sc, &opts).map_err(|e| e.to_string())?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        let metrics = dir.join("metrics.jsonl");
        fs::write(&metrics, &out.metrics_jsonl)
            .map_err(|e| format!("cannot write {}: {e}", metrics.display()))?;
        let summary = dir.join("summary.csv");
        fs::write(&summary, &out.summary_csv)
            .map_err(|e| format!("cannot write {}: {e}", summary.display()))?;
    }
    print!("{}", out.summary_csv);
    Ok(())
}

fn cmd_plan(src: &SourceArgs) -> Result<(), String> {
    let sc = load_scenario(src)?;
    let plan = sc.compute_plan().map_err(|e| e.to_string())?;
    print!("{}", export_plan(&plan));
    Ok(())
}

fn cmd_scenarios() -> Result<(), String> {
    for name in builtin_names() {
        let sc = ScenarioConfig::from_toml_str(builtin_toml(name).expect("listed builtin"))
            .map_err(|e| format!("builtin {name}: {e}"))?;
        println!("{name}: {}", sc.description);
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<(), String> {
    let text = builtin_toml(&args.name).ok_or_else(|| {
        format!(
            "no built-in scenario \"{}\" (available: {})",
            args.name,
            builtin_names().join(", ")
        )
    })?;
    print!("{text}");
    Ok(())
}

/// Entry point used by the binary. Returns the process exit code: 0 on
/// success, 1 on any scenario or I/O failure (clap itself exits 2 on
/// usage errors).
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plan(src) => cmd_plan(src),
        Command::Scenarios => cmd_scenarios(),
        Command::ExportScenario(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
