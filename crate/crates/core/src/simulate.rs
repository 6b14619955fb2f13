//! Single runs and repeated experiments.
//!
//! A run is a pure function of `(ExperimentSpec, run_index)`: its agent and
//! environment draws come from `RngStream::for_run(base_seed, run_index)` and,
//! in cohort mode, category draws come from the separate
//! `RngStream::for_cohort` lane. Experiments therefore give bit-identical
//! results for any worker count or execution order.

use std::panic::{self, AssertUnwindSafe};

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{AgentKind, AgentParams, AgentState, Policy};
use crate::env::{make_category_env, CohortSpec, EnvironmentSpec, CATEGORY_COUNT};
use crate::error::{Error, Result};
use crate::report::{Accumulator, AggregateResult};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub const DEFAULT_HORIZON: usize = 500;
pub const DEFAULT_RUNS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentChoice<F> {
    /// One of the four built-in student categories.
    Category(u8),
    /// Students drawn from the cohort mixture, one independent agent per
    /// category. Each student is routed by their (correct) category label.
    Cohort(CohortSpec<F>),
    /// Arbitrary Bernoulli arms.
    Custom(EnvironmentSpec<F>),
}

impl<F: Scalar> EnvironmentChoice<F> {
    pub fn name(&self) -> String {
        match self {
            EnvironmentChoice::Category(c) => format!("cat{c}"),
            EnvironmentChoice::Cohort(_) => "cohort".to_string(),
            EnvironmentChoice::Custom(env) => env.label.clone(),
        }
    }

    /// Number of distinct arm labels produced by runs in this environment.
    pub fn arm_count(&self) -> usize {
        match self {
            EnvironmentChoice::Category(_) | EnvironmentChoice::Cohort(_) => crate::env::ARM_COUNT,
            EnvironmentChoice::Custom(env) => env.arm_count(),
        }
    }

    /// Expected per-episode reward of always playing the best arm, under
    /// perfect routing in cohort mode.
    pub fn optimal_mean(&self) -> Result<F> {
        match self {
            EnvironmentChoice::Category(c) => Ok(make_category_env::<F>(*c)?.optimal_value().0),
            EnvironmentChoice::Custom(env) => Ok(env.optimal_value().0),
            EnvironmentChoice::Cohort(cohort) => {
                let mut total = F::zero();
                for (i, &w) in cohort.weights().iter().enumerate() {
                    let env = make_category_env::<F>(i as u8 + 1)?;
                    total = total + w * env.optimal_value().0;
                }
                Ok(total)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec<F> {
    pub agent: AgentKind,
    pub params: AgentParams<F>,
    pub environment: EnvironmentChoice<F>,
    /// Episodes per run.
    pub horizon: usize,
    pub n_runs: u64,
    pub base_seed: u64,
    pub ci_level: F,
    /// Discount for the reported discounted return; 1 means undiscounted.
    pub gamma: F,
}

impl<F: Scalar> ExperimentSpec<F> {
    pub fn new(agent: AgentKind, environment: EnvironmentChoice<F>) -> Self {
        ExperimentSpec {
            agent,
            params: AgentParams::default(),
            environment,
            horizon: DEFAULT_HORIZON,
            n_runs: DEFAULT_RUNS,
            base_seed: DEFAULT_SEED,
            ci_level: F::of(DEFAULT_CI_LEVEL),
            gamma: F::one(),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_runs(mut self, n_runs: u64) -> Self {
        self.n_runs = n_runs;
        self
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_params(mut self, params: AgentParams<F>) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.horizon >= u32::MAX as usize {
            return Err(Error::invalid("horizon too large"));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("run count must be at least 1"));
        }
        if !(self.ci_level > F::zero() && self.ci_level < F::one()) {
            return Err(Error::invalid(format!(
                "ci level {} outside (0, 1)",
                self.ci_level
            )));
        }
        if !(self.gamma >= F::zero() && self.gamma <= F::one()) {
            return Err(Error::invalid(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        self.params.validate()?;
        if let EnvironmentChoice::Category(c) = self.environment {
            make_category_env::<F>(c)?;
        }
        Ok(())
    }

    /// Build the agent this spec describes for one environment.
    pub fn make_agent(&self, env: &EnvironmentSpec<F>) -> Result<AgentState<F>> {
        AgentState::new(self.agent, env.arm_count(), self.params)
    }
}

/// Per-episode record of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// 0-based arm per episode.
    pub actions: Vec<u32>,
    pub rewards: Vec<u8>,
    /// Running pass count; `cumulative[t]` includes episode `t`.
    pub cumulative: Vec<u32>,
    /// Category id per episode, cohort mode only.
    pub categories: Option<Vec<u8>>,
}

impl Trajectory {
    fn with_capacity(horizon: usize, cohort: bool) -> Self {
        Trajectory {
            actions: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
            cumulative: Vec::with_capacity(horizon),
            categories: cohort.then(|| Vec::with_capacity(horizon)),
        }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn total_reward(&self) -> u32 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

/// Run `run_index` of `spec` with the agent kind the spec names.
pub fn run_trajectory<F: Scalar>(spec: &ExperimentSpec<F>, run_index: u64) -> Result<Trajectory> {
    spec.validate()?;
    check_run_index(spec, run_index)?;
    simulate_run(spec, run_index, &|env: &EnvironmentSpec<F>| {
        spec.make_agent(env)
    })
}

/// Run `run_index` of `spec` with policies built by `make_policy`, one per
/// environment (four in cohort mode).
pub fn run_trajectory_with<F, P, M>(
    spec: &ExperimentSpec<F>,
    run_index: u64,
    make_policy: &M,
) -> Result<Trajectory>
where
    F: Scalar,
    P: Policy,
    M: Fn(&EnvironmentSpec<F>) -> Result<P>,
{
    spec.validate()?;
    check_run_index(spec, run_index)?;
    simulate_run(spec, run_index, make_policy)
}

fn check_run_index<F: Scalar>(spec: &ExperimentSpec<F>, run_index: u64) -> Result<()> {
    if run_index >= spec.n_runs {
        return Err(Error::invalid(format!(
            "run index {run_index} out of range 0..{}",
            spec.n_runs
        )));
    }
    Ok(())
}

fn simulate_run<F, P, M>(
    spec: &ExperimentSpec<F>,
    run_index: u64,
    make_policy: &M,
) -> Result<Trajectory>
where
    F: Scalar,
    P: Policy,
    M: Fn(&EnvironmentSpec<F>) -> Result<P>,
{
    let mut rng = RngStream::for_run(spec.base_seed, run_index);
    match &spec.environment {
        EnvironmentChoice::Category(c) => {
            let env = make_category_env::<F>(*c)?;
            single_env_run(spec.horizon, &env, make_policy(&env)?, &mut rng)
        }
        EnvironmentChoice::Custom(env) => {
            single_env_run(spec.horizon, env, make_policy(env)?, &mut rng)
        }
        EnvironmentChoice::Cohort(cohort) => {
            let envs = (1..=CATEGORY_COUNT as u8)
                .map(make_category_env::<F>)
                .collect::<Result<Vec<_>>>()?;
            let policies = envs.iter().map(make_policy).collect::<Result<Vec<_>>>()?;
            let mut cohort_rng = RngStream::for_cohort(spec.base_seed, run_index);
            cohort_run(
                spec.horizon,
                cohort,
                &envs,
                policies,
                &mut rng,
                &mut cohort_rng,
            )
        }
    }
}

fn single_env_run<F: Scalar, P: Policy>(
    horizon: usize,
    env: &EnvironmentSpec<F>,
    mut policy: P,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    check_policy_arms(&policy, env)?;
    let mut traj = Trajectory::with_capacity(horizon, false);
    let mut total = 0u32;
    for _ in 0..horizon {
        let action = policy.select_action(rng);
        let reward = env.step(action, rng)?;
        policy.update(action, reward)?;
        total += u32::from(reward.value());
        traj.actions.push(action as u32);
        traj.rewards.push(reward.value());
        traj.cumulative.push(total);
    }
    Ok(traj)
}

fn cohort_run<F: Scalar, P: Policy>(
    horizon: usize,
    cohort: &CohortSpec<F>,
    envs: &[EnvironmentSpec<F>],
    mut policies: Vec<P>,
    rng: &mut RngStream,
    cohort_rng: &mut RngStream,
) -> Result<Trajectory> {
    for (p, env) in policies.iter().zip(envs) {
        check_policy_arms(p, env)?;
    }
    let mut traj = Trajectory::with_capacity(horizon, true);
    let mut total = 0u32;
    for _ in 0..horizon {
        let category = cohort.sample_category(cohort_rng);
        let slot = usize::from(category - 1);
        let action = policies[slot].select_action(rng);
        let reward = envs[slot].step(action, rng)?;
        policies[slot].update(action, reward)?;
        total += u32::from(reward.value());
        traj.actions.push(action as u32);
        traj.rewards.push(reward.value());
        traj.cumulative.push(total);
        if let Some(cats) = traj.categories.as_mut() {
            cats.push(category);
        }
    }
    Ok(traj)
}

fn check_policy_arms<F: Scalar, P: Policy>(policy: &P, env: &EnvironmentSpec<F>) -> Result<()> {
    if policy.arm_count() != env.arm_count() {
        return Err(Error::invalid(format!(
            "policy has {} arms, environment {} has {}",
            policy.arm_count(),
            env.label,
            env.arm_count()
        )));
    }
    Ok(())
}

fn guarded<T>(run_index: u64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(payload) => {
            let reason = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            Err(Error::RunFailed { run_index, reason })
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(0) => Err(Error::invalid("worker count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// All runs of `spec`, in run-index order.
///
/// `workers = None` uses the global rayon pool; `Some(1)` is serial.
pub fn run_experiment<F: Scalar>(
    spec: &ExperimentSpec<F>,
    workers: Option<usize>,
) -> Result<Vec<Trajectory>> {
    run_experiment_with(spec, workers, &|env: &EnvironmentSpec<F>| {
        spec.make_agent(env)
    })
}

pub fn run_experiment_with<F, P, M>(
    spec: &ExperimentSpec<F>,
    workers: Option<usize>,
    make_policy: &M,
) -> Result<Vec<Trajectory>>
where
    F: Scalar,
    P: Policy,
    M: Fn(&EnvironmentSpec<F>) -> Result<P> + Sync,
{
    spec.validate()?;
    with_workers(workers, || {
        (0..spec.n_runs)
            .into_par_iter()
            .map(|i| guarded(i, || simulate_run(spec, i, make_policy)))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Runs per folding task in streaming aggregation.
const CHUNK_RUNS: u64 = 64;

/// Run `spec` and fold every run straight into an [`AggregateResult`]
/// without keeping trajectories.
pub fn run_aggregate<F: Scalar>(
    spec: &ExperimentSpec<F>,
    workers: Option<usize>,
) -> Result<AggregateResult<F>> {
    run_aggregate_with(spec, workers, &|env: &EnvironmentSpec<F>| {
        spec.make_agent(env)
    })
}

pub fn run_aggregate_with<F, P, M>(
    spec: &ExperimentSpec<F>,
    workers: Option<usize>,
    make_policy: &M,
) -> Result<AggregateResult<F>>
where
    F: Scalar,
    P: Policy,
    M: Fn(&EnvironmentSpec<F>) -> Result<P> + Sync,
{
    spec.validate()?;
    let arms = spec.environment.arm_count();
    let chunks = spec.n_runs.div_ceil(CHUNK_RUNS);
    let acc = with_workers(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulator::new(spec.horizon, arms, spec.gamma);
                let end = ((c + 1) * CHUNK_RUNS).min(spec.n_runs);
                for i in c * CHUNK_RUNS..end {
                    let traj = guarded(i, || simulate_run(spec, i, make_policy))?;
                    acc.add(i, &traj)?;
                }
                Ok(acc)
            })
            .try_reduce(
                || Accumulator::new(spec.horizon, arms, spec.gamma),
                |mut a, b| {
                    a.merge(b)?;
                    Ok(a)
                },
            )
    })??;
    acc.finish(spec)
}
