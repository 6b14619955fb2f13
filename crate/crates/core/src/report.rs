//! Aggregation of runs into curves, confidence bands and choice frequencies,
//! plus the CSV and JSON writers.
//!
//! Bands are empirical percentiles across runs at each episode, with linear
//! interpolation between order statistics (position `(n - 1) * q`). Runs are
//! folded into per-episode histograms of the cumulative reward, which are
//! integer counts, so partial aggregates merge exactly in any order and the
//! percentiles are the same as sorting every run's value.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::agent::AgentKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulate::{EnvironmentChoice, ExperimentSpec, Trajectory};

pub const ENGINE_NAME: &str = "edu-bandit";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CURVES_HEADER: &str = "episode,mean_cum_reward,ci_lower,ci_upper,mean_regret";
pub const RAW_HEADER: &str = "run,episode,action,reward";

/// Mergeable partial aggregate over a subset of runs.
#[derive(Debug, Clone)]
pub struct Accumulator<F> {
    horizon: usize,
    gamma: F,
    n_runs: u64,
    cum_sum: Vec<u64>,
    /// `hist[t][v]` = runs whose cumulative reward at episode `t` is `v`.
    hist: Vec<Vec<u32>>,
    action_counts: Vec<u64>,
    /// Discounted return per run, keyed by run index.
    discounted: Vec<(u64, F)>,
}

impl<F: Scalar> Accumulator<F> {
    pub fn new(horizon: usize, arm_count: usize, gamma: F) -> Self {
        Accumulator {
            horizon,
            gamma,
            n_runs: 0,
            cum_sum: vec![0; horizon],
            hist: (0..horizon).map(|t| vec![0; t + 2]).collect(),
            action_counts: vec![0; arm_count],
            discounted: Vec::new(),
        }
    }

    pub fn n_runs(&self) -> u64 {
        self.n_runs
    }

    pub fn add(&mut self, run_index: u64, traj: &Trajectory) -> Result<()> {
        if traj.horizon() != self.horizon
            || traj.rewards.len() != self.horizon
            || traj.cumulative.len() != self.horizon
        {
            return Err(Error::invalid(format!(
                "trajectory horizon {} does not match {}",
                traj.horizon(),
                self.horizon
            )));
        }
        for (t, &c) in traj.cumulative.iter().enumerate() {
            let bin = self.hist[t].get_mut(c as usize).ok_or_else(|| {
                Error::invalid(format!("cumulative {c} exceeds episode {}", t + 1))
            })?;
            *bin += 1;
            self.cum_sum[t] += u64::from(c);
        }
        for &a in &traj.actions {
            let slot = self
                .action_counts
                .get_mut(a as usize)
                .ok_or_else(|| Error::invalid(format!("action {a} out of range")))?;
            *slot += 1;
        }
        let mut weight = F::one();
        let mut ret = F::zero();
        for &r in &traj.rewards {
            if r == 1 {
                ret = ret + weight;
            }
            weight = weight * self.gamma;
        }
        self.discounted.push((run_index, ret));
        self.n_runs += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: Accumulator<F>) -> Result<()> {
        if other.horizon != self.horizon || other.action_counts.len() != self.action_counts.len() {
            return Err(Error::invalid("cannot merge aggregates of different shape"));
        }
        self.n_runs += other.n_runs;
        for (a, b) in self.cum_sum.iter_mut().zip(other.cum_sum) {
            *a += b;
        }
        for (ha, hb) in self.hist.iter_mut().zip(other.hist) {
            for (a, b) in ha.iter_mut().zip(hb) {
                *a += b;
            }
        }
        for (a, b) in self.action_counts.iter_mut().zip(other.action_counts) {
            *a += b;
        }
        self.discounted.extend(other.discounted);
        Ok(())
    }

    pub fn finish(mut self, spec: &ExperimentSpec<F>) -> Result<AggregateResult<F>> {
        if self.n_runs == 0 {
            return Err(Error::invalid("no runs to aggregate"));
        }
        let optimal = spec.environment.optimal_mean()?;
        let n = self.n_runs;
        let nf = F::of_count(n);
        let lo_q = (1.0 - spec.ci_level.as_f64()) / 2.0;
        let hi_q = 1.0 - lo_q;

        let mean_cumulative: Vec<F> = self.cum_sum.iter().map(|&s| F::of_count(s) / nf).collect();
        let ci_lower: Vec<F> = self
            .hist
            .iter()
            .map(|h| F::of(histogram_quantile(h, n, lo_q)))
            .collect();
        let ci_upper: Vec<F> = self
            .hist
            .iter()
            .map(|h| F::of(histogram_quantile(h, n, hi_q)))
            .collect();
        let mean_regret = mean_cumulative
            .iter()
            .enumerate()
            .map(|(t, &m)| F::of_count(t as u64 + 1) * optimal - m)
            .collect();

        let horizon = F::of_count(self.horizon as u64);
        let last = self.horizon - 1;
        let mean_reward_rate = mean_cumulative[last] / horizon;
        let rate_ci = (ci_lower[last] / horizon, ci_upper[last] / horizon);

        self.discounted.sort_by_key(|&(i, _)| i);
        let discounted_return_mean = self
            .discounted
            .iter()
            .fold(F::zero(), |acc, &(_, r)| acc + r)
            / nf;

        Ok(AggregateResult {
            episodes: self.horizon,
            n_runs: n,
            action_frequency: frequencies(&self.action_counts),
            action_counts: self.action_counts,
            mean_cumulative,
            ci_lower,
            ci_upper,
            mean_reward_rate,
            rate_ci,
            mean_regret,
            optimal_mean: optimal,
            discounted_return_mean,
        })
    }
}

/// Aggregated view of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult<F> {
    pub episodes: usize,
    pub n_runs: u64,
    pub mean_cumulative: Vec<F>,
    pub ci_lower: Vec<F>,
    pub ci_upper: Vec<F>,
    /// Mean over runs of end-of-run reward rate.
    pub mean_reward_rate: F,
    pub rate_ci: (F, F),
    pub action_counts: Vec<u64>,
    pub action_frequency: Vec<F>,
    /// Diagnostic: shortfall against always playing the best arm.
    pub mean_regret: Vec<F>,
    pub optimal_mean: F,
    pub discounted_return_mean: F,
}

impl<F: Scalar> AggregateResult<F> {
    pub fn final_band_width(&self) -> F {
        self.ci_upper[self.episodes - 1] - self.ci_lower[self.episodes - 1]
    }
}

/// Aggregate finished trajectories. Runs are keyed by their position.
pub fn aggregate<F: Scalar>(
    trajectories: &[Trajectory],
    spec: &ExperimentSpec<F>,
) -> Result<AggregateResult<F>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::invalid("no trajectories to aggregate"))?;
    let horizon = first.horizon();
    if horizon == 0 {
        return Err(Error::invalid("trajectories are empty"));
    }
    if let Some(t) = trajectories.iter().find(|t| t.horizon() != horizon) {
        return Err(Error::invalid(format!(
            "mismatched horizons: {} and {}",
            horizon,
            t.horizon()
        )));
    }
    let arms = spec.environment.arm_count();
    let mut acc = Accumulator::new(horizon, arms, spec.gamma);
    for (i, t) in trajectories.iter().enumerate() {
        acc.add(i as u64, t)?;
    }
    acc.finish(spec)
}

/// Share of pulls per arm, pooled over all episodes of all runs.
pub fn action_distribution(trajectories: &[Trajectory], arm_count: usize) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories"));
    }
    let mut counts = vec![0u64; arm_count];
    for &a in trajectories.iter().flat_map(|t| &t.actions) {
        *counts
            .get_mut(a as usize)
            .ok_or_else(|| Error::invalid(format!("action {a} out of range")))? += 1;
    }
    Ok(frequencies(&counts))
}

fn frequencies<F: Scalar>(counts: &[u64]) -> Vec<F> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![F::zero(); counts.len()];
    }
    counts
        .iter()
        .map(|&c| F::of_count(c) / F::of_count(total))
        .collect()
}

/// `k`-th smallest value (0-based) of the sample described by `hist`.
fn order_statistic(hist: &[u32], k: u64) -> f64 {
    let mut seen = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        seen += u64::from(c);
        if seen > k {
            return v as f64;
        }
    }
    (hist.len() - 1) as f64
}

fn histogram_quantile(hist: &[u32], n: u64, q: f64) -> f64 {
    let h = (n - 1) as f64 * q;
    let lo = h.floor();
    let frac = h - lo;
    let lo = lo as u64;
    let x_lo = order_statistic(hist, lo);
    if frac == 0.0 || lo + 1 >= n {
        return x_lo;
    }
    let x_hi = order_statistic(hist, lo + 1);
    x_lo + frac * (x_hi - x_lo)
}

/// Linear-interpolated empirical quantile of an already sorted sample.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - h.floor();
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Curves CSV: one row per episode, 1-based, six decimals, LF endings.
pub fn write_curves_csv<F: Scalar>(result: &AggregateResult<F>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{CURVES_HEADER}").map_err(io)?;
    for t in 0..result.episodes {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            t + 1,
            result.mean_cumulative[t],
            result.ci_lower[t],
            result.ci_upper[t],
            result.mean_regret[t]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One parsed row of a curves CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    pub mean_cum_reward: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub mean_regret: f64,
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    if header != CURVES_HEADER {
        return Err(Error::invalid(format!(
            "unexpected curves header '{header}'"
        )));
    }
    let bad = |line: &str| Error::invalid(format!("malformed curves row '{line}'"));
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(&line));
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|_| bad(&line));
        rows.push(CurveRow {
            episode: fields[0].parse().map_err(|_| bad(&line))?,
            mean_cum_reward: num(1)?,
            ci_lower: num(2)?,
            ci_upper: num(3)?,
            mean_regret: num(4)?,
        });
    }
    Ok(rows)
}

/// Raw per-run CSV with 1-based run, episode and action labels.
pub fn write_raw_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{RAW_HEADER}").map_err(io)?;
    for (run, t) in trajectories.iter().enumerate() {
        for (ep, (&a, &r)) in t.actions.iter().zip(&t.rewards).enumerate() {
            writeln!(w, "{},{},{},{}", run + 1, ep + 1, a + 1, r).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Pull counts per 1-based action, with their shares.
pub fn write_action_counts_csv<F: Scalar>(result: &AggregateResult<F>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "action,count,frequency").map_err(io)?;
    for (a, (&c, f)) in result
        .action_counts
        .iter()
        .zip(&result.action_frequency)
        .enumerate()
    {
        writeln!(w, "{},{},{:.6}", a + 1, c, f).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Serialize)]
struct SpecEcho<'a, F> {
    agent: AgentKind,
    epsilon: F,
    ucb_c: F,
    environment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    cohort_weights: Option<&'a [F]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arm_pass_prob: Option<&'a [F]>,
    horizon: usize,
    n_runs: u64,
    base_seed: u64,
    ci_level: F,
    gamma: F,
}

#[derive(Debug, Serialize)]
struct Summary<'a, F> {
    engine: &'static str,
    engine_version: &'static str,
    base_seed: u64,
    spec: SpecEcho<'a, F>,
    episodes: usize,
    n_runs: u64,
    mean_reward_rate: F,
    rate_ci: [F; 2],
    action_frequency: BTreeMap<usize, F>,
    action_counts: BTreeMap<usize, u64>,
    discounted_return_mean: F,
    optimal_mean: F,
    final_mean_regret: F,
}

pub fn summary_json<F: Scalar>(
    result: &AggregateResult<F>,
    spec: &ExperimentSpec<F>,
) -> Result<String> {
    let (cohort_weights, arm_pass_prob) = match &spec.environment {
        EnvironmentChoice::Cohort(c) => (Some(c.weights()), None),
        EnvironmentChoice::Custom(env) => (None, Some(env.arm_pass_prob.as_slice())),
        EnvironmentChoice::Category(_) => (None, None),
    };
    let summary = Summary {
        engine: ENGINE_NAME,
        engine_version: ENGINE_VERSION,
        base_seed: spec.base_seed,
        spec: SpecEcho {
            agent: spec.agent,
            epsilon: spec.params.epsilon,
            ucb_c: spec.params.ucb_c,
            environment: spec.environment.name(),
            cohort_weights,
            arm_pass_prob,
            horizon: spec.horizon,
            n_runs: spec.n_runs,
            base_seed: spec.base_seed,
            ci_level: spec.ci_level,
            gamma: spec.gamma,
        },
        episodes: result.episodes,
        n_runs: result.n_runs,
        mean_reward_rate: result.mean_reward_rate,
        rate_ci: [result.rate_ci.0, result.rate_ci.1],
        action_frequency: result
            .action_frequency
            .iter()
            .enumerate()
            .map(|(a, &f)| (a + 1, f))
            .collect(),
        action_counts: result
            .action_counts
            .iter()
            .enumerate()
            .map(|(a, &c)| (a + 1, c))
            .collect(),
        discounted_return_mean: result.discounted_return_mean,
        optimal_mean: result.optimal_mean,
        final_mean_regret: result.mean_regret[result.episodes - 1],
    };
    serde_json::to_string_pretty(&summary).map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_summary_json<F: Scalar>(
    result: &AggregateResult<F>,
    spec: &ExperimentSpec<F>,
    path: &Path,
) -> Result<()> {
    let mut text = summary_json(result, spec)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row of the agent x environment sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<F> {
    pub agent: AgentKind,
    pub environment: String,
    pub mean_reward_rate: F,
    pub rate_ci: (F, F),
}

pub fn write_sweep_summary_csv<F: Scalar>(rows: &[SweepRow<F>], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "agent,environment,mean_reward_rate,rate_ci_lower,rate_ci_upper"
    )
    .map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6}",
            r.agent, r.environment, r.mean_reward_rate, r.rate_ci.0, r.rate_ci.1
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
