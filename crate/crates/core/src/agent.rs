//! Bandit policies: uniform random, epsilon-greedy and UCB1.
//!
//! Draw accounting per `select_action` call is fixed by kind so runs stay
//! aligned on their streams: random uses one uniform draw, epsilon-greedy two
//! (exploration coin, then arm/tie-break draw, both taken every step), UCB one
//! (tie-break draw, taken even during the initial round).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::Reward;
use crate::error::{Error, Result};
use crate::rng::{index_from_uniform, RngStream};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Random,
    EpsilonGreedy,
    Ucb,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Random, AgentKind::EpsilonGreedy, AgentKind::Ucb];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::EpsilonGreedy => "epsilon-greedy",
            AgentKind::Ucb => "ucb",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AgentKind::Random),
            "epsilon-greedy" | "epsilon_greedy" | "egreedy" => Ok(AgentKind::EpsilonGreedy),
            "ucb" | "ucb1" => Ok(AgentKind::Ucb),
            other => Err(Error::invalid(format!(
                "unknown agent '{other}' (expected random, epsilon-greedy or ucb)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentParams<F> {
    /// Exploration probability for epsilon-greedy.
    pub epsilon: F,
    /// Exploration constant of the UCB1 bonus.
    pub ucb_c: F,
}

impl<F: Scalar> Default for AgentParams<F> {
    fn default() -> Self {
        AgentParams {
            epsilon: F::of(DEFAULT_EPSILON),
            ucb_c: F::SQRT_2(),
        }
    }
}

impl<F: Scalar> AgentParams<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= F::zero() && self.epsilon <= F::one()) {
            return Err(Error::invalid(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.ucb_c < F::zero() || !self.ucb_c.is_finite() {
            return Err(Error::invalid(format!(
                "ucb_c {} must be finite and nonnegative",
                self.ucb_c
            )));
        }
        Ok(())
    }
}

/// Anything that can pick arms and learn from pass/fail outcomes.
pub trait Policy {
    fn arm_count(&self) -> usize;

    /// Pick an arm. Must not change the policy's learning state.
    fn select_action(&self, rng: &mut RngStream) -> usize;

    fn update(&mut self, action: usize, reward: Reward) -> Result<()>;
}

/// Learning state of one agent on one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<F> {
    kind: AgentKind,
    params: AgentParams<F>,
    pull_count: Vec<u64>,
    value_estimate: Vec<F>,
    total_steps: u64,
}

impl<F: Scalar> AgentState<F> {
    pub fn new(kind: AgentKind, arm_count: usize, params: AgentParams<F>) -> Result<Self> {
        if arm_count == 0 {
            return Err(Error::invalid("agent needs at least one arm"));
        }
        params.validate()?;
        Ok(AgentState {
            kind,
            params,
            pull_count: vec![0; arm_count],
            value_estimate: vec![F::zero(); arm_count],
            total_steps: 0,
        })
    }

    /// Rebuild a state from explicit counts and estimates.
    pub fn from_parts(
        kind: AgentKind,
        params: AgentParams<F>,
        pull_count: Vec<u64>,
        value_estimate: Vec<F>,
    ) -> Result<Self> {
        if pull_count.len() != value_estimate.len() {
            return Err(Error::invalid(
                "pull_count and value_estimate lengths differ",
            ));
        }
        let mut state = Self::new(kind, pull_count.len(), params)?;
        state.total_steps = pull_count.iter().sum();
        state.pull_count = pull_count;
        state.value_estimate = value_estimate;
        Ok(state)
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn params(&self) -> &AgentParams<F> {
        &self.params
    }

    pub fn pull_count(&self) -> &[u64] {
        &self.pull_count
    }

    pub fn value_estimate(&self) -> &[F] {
        &self.value_estimate
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    fn greedy(&self, u: f64) -> usize {
        pick_max(self.value_estimate.iter().copied(), u)
    }

    fn ucb(&self, u: f64) -> usize {
        if let Some(unpulled) = self.pull_count.iter().position(|&n| n == 0) {
            return unpulled;
        }
        let log_t = F::of_count(self.total_steps).ln();
        let c = self.params.ucb_c;
        let scores = self
            .value_estimate
            .iter()
            .zip(&self.pull_count)
            .map(|(&q, &n)| q + c * (log_t / F::of_count(n)).sqrt());
        pick_max(scores, u)
    }
}

impl<F: Scalar> Policy for AgentState<F> {
    fn arm_count(&self) -> usize {
        self.pull_count.len()
    }

    fn select_action(&self, rng: &mut RngStream) -> usize {
        let k = self.arm_count();
        match self.kind {
            AgentKind::Random => rng.index(k),
            AgentKind::EpsilonGreedy => {
                let coin = rng.uniform();
                let u = rng.uniform();
                if coin < self.params.epsilon.as_f64() {
                    index_from_uniform(u, k)
                } else {
                    self.greedy(u)
                }
            }
            AgentKind::Ucb => {
                let u = rng.uniform();
                self.ucb(u)
            }
        }
    }

    fn update(&mut self, action: usize, reward: Reward) -> Result<()> {
        if action >= self.arm_count() {
            return Err(Error::invalid(format!(
                "action {action} out of range 0..{}",
                self.arm_count()
            )));
        }
        self.pull_count[action] += 1;
        self.total_steps += 1;
        let n = F::of_count(self.pull_count[action]);
        let r = F::of_count(u64::from(reward.value()));
        let q = &mut self.value_estimate[action];
        *q = *q + (r - *q) / n;
        Ok(())
    }
}

/// Index of a maximal element, ties broken uniformly using `u` in `[0, 1)`.
fn pick_max<F: Scalar>(scores: impl Iterator<Item = F> + Clone, u: f64) -> usize {
    let mut best = F::neg_infinity();
    let mut ties = 0usize;
    for s in scores.clone() {
        if s > best {
            best = s;
            ties = 1;
        } else if s == best {
            ties += 1;
        }
    }
    let mut nth = index_from_uniform(u, ties.max(1));
    for (i, s) in scores.enumerate() {
        if s == best {
            if nth == 0 {
                return i;
            }
            nth -= 1;
        }
    }
    0
}

/// Always recommends the same arm. Baseline for oracle comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArm {
    pub arm: usize,
    pub arm_count: usize,
}

impl Policy for FixedArm {
    fn arm_count(&self) -> usize {
        self.arm_count
    }

    fn select_action(&self, rng: &mut RngStream) -> usize {
        rng.uniform();
        self.arm
    }

    fn update(&mut self, action: usize, _reward: Reward) -> Result<()> {
        if action >= self.arm_count {
            return Err(Error::invalid(format!("action {action} out of range")));
        }
        Ok(())
    }
}
