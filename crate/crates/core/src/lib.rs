//! Bernoulli multi-armed bandit simulation of intervention recommendation.
//!
//! Four student categories each form a stateless bandit whose arms are the
//! candidate interventions; pulling an arm passes the student with a fixed
//! probability. Random, epsilon-greedy and UCB1 agents are run for many
//! seeded, independent repetitions and aggregated into mean cumulative-reward
//! curves with percentile bands, reward rates and choice frequencies.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod agent;
pub mod env;
pub mod error;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use agent::{AgentKind, AgentParams, AgentState, FixedArm, Policy};
pub use env::{make_category_env, CohortSpec, EnvironmentSpec, Reward};
pub use error::{Error, Result};
pub use report::{action_distribution, aggregate, AggregateResult};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use simulate::{
    run_aggregate, run_aggregate_with, run_experiment, run_experiment_with, run_trajectory,
    run_trajectory_with, EnvironmentChoice, ExperimentSpec, Trajectory,
};

pub type Environment = EnvironmentSpec<f64>;
pub type Cohort = CohortSpec<f64>;
pub type Params = AgentParams<f64>;
pub type Agent = AgentState<f64>;
pub type Experiment = ExperimentSpec<f64>;
pub type Aggregate = AggregateResult<f64>;
pub type Choice = EnvironmentChoice<f64>;
