use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edu_bandit::report::{
    write_action_counts_csv, write_curves_csv, write_raw_csv, write_summary_json,
    write_sweep_summary_csv, SweepRow,
};
use edu_bandit::{aggregate, run_aggregate, run_experiment, AgentKind, Choice, Experiment};
use serde::Serialize;

mod config;

use config::{resolve, ExperimentArgs, Resolved};

#[derive(Debug, Parser)]
#[command(
    name = "edu-bandit",
    version,
    about = "Bandit simulations of student intervention recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write curves, summary and action counts
    Run(ExperimentArgs),
    /// Run every agent on every student category
    Sweep(ExperimentArgs),
    /// Print the resolved experiment without running it
    Validate(ExperimentArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime(e: edu_bandit::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}

fn write_experiment(
    spec: &Experiment,
    r: &Resolved,
    curves: &Path,
    raw: Option<&Path>,
) -> Result<edu_bandit::Aggregate, CliError> {
    let result = match raw {
        Some(raw_path) => {
            let runs = run_experiment(spec, r.workers).map_err(runtime)?;
            write_raw_csv(&runs, raw_path).map_err(runtime)?;
            aggregate(&runs, spec).map_err(runtime)?
        }
        None => run_aggregate(spec, r.workers).map_err(runtime)?,
    };
    write_curves_csv(&result, curves).map_err(runtime)?;
    Ok(result)
}

fn cmd_run(args: &ExperimentArgs) -> Result<(), CliError> {
    let r = resolve(args, false)?;
    prepare_out(&r.out)?;
    let raw = r.emit_raw.then(|| r.out.join("raw.csv"));
    let result = write_experiment(&r.spec, &r, &r.out.join("curves.csv"), raw.as_deref())?;
    write_summary_json(&result, &r.spec, &r.out.join("summary.json")).map_err(runtime)?;
    write_action_counts_csv(&result, &r.out.join("actions.csv")).map_err(runtime)?;
    println!(
        "{} on {}: mean_reward_rate {:.6} (band {:.6}-{:.6}), outputs in {}",
        r.spec.agent,
        r.spec.environment.name(),
        result.mean_reward_rate,
        result.rate_ci.0,
        result.rate_ci.1,
        r.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &ExperimentArgs) -> Result<(), CliError> {
    let r = resolve(args, true)?;
    prepare_out(&r.out)?;
    let mut rows = Vec::new();
    for agent in AgentKind::ALL {
        for cat in 1..=4u8 {
            let spec = Experiment {
                agent,
                environment: Choice::Category(cat),
                ..r.spec.clone()
            };
            let stem = format!("{agent}_cat{cat}");
            let raw = r.emit_raw.then(|| r.out.join(format!("{stem}_raw.csv")));
            let result = write_experiment(
                &spec,
                &r,
                &r.out.join(format!("{stem}.csv")),
                raw.as_deref(),
            )?;
            println!(
                "{agent:>14} cat{cat}: mean_reward_rate {:.6}",
                result.mean_reward_rate
            );
            rows.push(SweepRow {
                agent,
                environment: format!("cat{cat}"),
                mean_reward_rate: result.mean_reward_rate,
                rate_ci: result.rate_ci,
            });
        }
    }
    write_sweep_summary_csv(&rows, &r.out.join("sweep_summary.csv")).map_err(runtime)?;
    Ok(())
}

#[derive(Serialize)]
struct ResolvedEcho<'a> {
    agent: AgentKind,
    epsilon: f64,
    ucb_c: f64,
    env: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<&'a [f64]>,
    horizon: usize,
    runs: u64,
    seed: u64,
    ci_level: f64,
    gamma: f64,
    out: String,
    emit_raw: bool,
    workers: Option<usize>,
}

fn cmd_validate(args: &ExperimentArgs) -> Result<(), CliError> {
    let r = resolve(args, false)?;
    let s = &r.spec;
    let echo = ResolvedEcho {
        agent: s.agent,
        epsilon: s.params.epsilon,
        ucb_c: s.params.ucb_c,
        env: s.environment.name(),
        weights: match &s.environment {
            Choice::Cohort(c) => Some(c.weights()),
            _ => None,
        },
        horizon: s.horizon,
        runs: s.n_runs,
        seed: s.base_seed,
        ci_level: s.ci_level,
        gamma: s.gamma,
        out: r.out.display().to_string(),
        emit_raw: r.emit_raw,
        workers: r.workers,
    };
    let text = serde_json::to_string_pretty(&echo).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edu-bandit: {e}");
            e.exit_code()
        }
    }
}
