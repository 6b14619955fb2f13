//! Flag and config-file resolution into an experiment spec.
//!
//! Precedence is flags, then the JSON config file, then built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use edu_bandit::{AgentKind, Choice, Cohort, Experiment, Params};
use serde::Deserialize;

use crate::CliError;

pub const OUT_DIR_ENV: &str = "EDU_BANDIT_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// random | epsilon-greedy | ucb
    #[arg(long)]
    pub agent: Option<String>,
    /// Exploration probability (epsilon-greedy only)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// UCB1 exploration constant (ucb only)
    #[arg(long = "ucb-c")]
    pub ucb_c: Option<f64>,
    /// cat1 | cat2 | cat3 | cat4 | cohort
    #[arg(long)]
    pub env: Option<String>,
    /// Cohort weights per category, comma separated; normalized to sum 1
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub weights: Option<Vec<f64>>,
    /// Episodes per run
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of independent runs
    #[arg(long)]
    pub runs: Option<u64>,
    /// Base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence band level in (0, 1)
    #[arg(long = "ci-level")]
    pub ci_level: Option<f64>,
    /// Discount for the reported discounted return
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Output directory (default: $EDU_BANDIT_OUT, else ./results)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-run raw CSV (run,episode,action,reward)
    #[arg(long = "emit-raw")]
    pub emit_raw: bool,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON file supplying defaults for any of the above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub agent: Option<String>,
    pub epsilon: Option<f64>,
    pub ucb_c: Option<f64>,
    pub env: Option<String>,
    pub weights: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub ci_level: Option<f64>,
    pub gamma: Option<f64>,
    pub out: Option<PathBuf>,
    pub emit_raw: Option<bool>,
    pub workers: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: Experiment,
    pub out: PathBuf,
    pub emit_raw: bool,
    pub workers: Option<usize>,
}

/// Flag value wins over config value.
struct Layer<'a> {
    flags: &'a ExperimentArgs,
    file: ConfigFile,
}

impl Layer<'_> {
    fn agent(&self) -> Option<String> {
        self.flags.agent.clone().or_else(|| self.file.agent.clone())
    }
    fn env(&self) -> Option<String> {
        self.flags.env.clone().or_else(|| self.file.env.clone())
    }
    fn epsilon(&self) -> Option<f64> {
        self.flags.epsilon.or(self.file.epsilon)
    }
    fn ucb_c(&self) -> Option<f64> {
        self.flags.ucb_c.or(self.file.ucb_c)
    }
    fn weights(&self) -> Option<Vec<f64>> {
        self.flags
            .weights
            .clone()
            .or_else(|| self.file.weights.clone())
    }
}

pub fn parse_env(name: &str) -> Result<Option<u8>, CliError> {
    match name {
        "cat1" => Ok(Some(1)),
        "cat2" => Ok(Some(2)),
        "cat3" => Ok(Some(3)),
        "cat4" => Ok(Some(4)),
        "cohort" => Ok(None),
        other => Err(CliError::Usage(format!(
            "unknown environment '{other}' (expected cat1, cat2, cat3, cat4 or cohort)"
        ))),
    }
}

/// Resolve settings for `run`/`validate` (`sweep = false`) or `sweep`.
pub fn resolve(args: &ExperimentArgs, sweep: bool) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if sweep {
        for (flag, given) in [
            ("--agent", args.agent.is_some()),
            ("--env", args.env.is_some()),
            ("--weights", args.weights.is_some()),
        ] {
            if given {
                return Err(CliError::Usage(format!(
                    "{flag} is not used by sweep, which runs every agent on every category"
                )));
            }
        }
    }
    let layer = Layer { flags: args, file };

    let agent: AgentKind = if sweep {
        AgentKind::EpsilonGreedy
    } else {
        layer
            .agent()
            .as_deref()
            .unwrap_or("epsilon-greedy")
            .parse()
            .map_err(|e: edu_bandit::Error| CliError::Usage(e.to_string()))?
    };
    if !sweep {
        if layer.epsilon().is_some() && agent != AgentKind::EpsilonGreedy {
            return Err(CliError::Usage(format!(
                "--epsilon is not valid for {agent}"
            )));
        }
        if layer.ucb_c().is_some() && agent != AgentKind::Ucb {
            return Err(CliError::Usage(format!("--ucb-c is not valid for {agent}")));
        }
    }

    let env_name = if sweep {
        "cat1".to_string()
    } else {
        layer.env().unwrap_or_else(|| "cat1".to_string())
    };
    let environment = match parse_env(&env_name)? {
        Some(cat) => {
            if !sweep && layer.weights().is_some() {
                return Err(CliError::Usage(
                    "--weights is only valid with --env cohort".into(),
                ));
            }
            Choice::Category(cat)
        }
        None => match layer.weights() {
            Some(w) => Choice::Cohort(Cohort::normalized(&w).map_err(usage)?),
            None => Choice::Cohort(Cohort::default()),
        },
    };

    let defaults = Params::default();
    let params = Params {
        epsilon: layer.epsilon().unwrap_or(defaults.epsilon),
        ucb_c: layer.ucb_c().unwrap_or(defaults.ucb_c),
    };
    let mut spec = Experiment::new(agent, environment).with_params(params);
    if let Some(h) = args.horizon.or(layer.file.horizon) {
        spec.horizon = h;
    }
    if let Some(n) = args.runs.or(layer.file.runs) {
        spec.n_runs = n;
    }
    if let Some(s) = args.seed.or(layer.file.seed) {
        spec.base_seed = s;
    }
    if let Some(c) = args.ci_level.or(layer.file.ci_level) {
        spec.ci_level = c;
    }
    if let Some(g) = args.gamma.or(layer.file.gamma) {
        spec.gamma = g;
    }
    spec.validate().map_err(usage)?;

    let workers = args.workers.or(layer.file.workers);
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let out = args
        .out
        .clone()
        .or_else(|| layer.file.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    Ok(Resolved {
        spec,
        out,
        emit_raw: args.emit_raw || layer.file.emit_raw.unwrap_or(false),
        workers,
    })
}

fn usage(e: edu_bandit::Error) -> CliError {
    CliError::Usage(e.to_string())
}
