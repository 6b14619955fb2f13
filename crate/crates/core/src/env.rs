//! Bernoulli intervention environments and the student cohort mixture.
//!
//! Each student category is a stateless bandit: the category is the only
//! state and it never changes within an environment. Arm `k` (0-based) is
//! recommendation `k + 1`, and pulling it passes the student with the arm's
//! probability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub const CATEGORY_COUNT: usize = 4;
pub const ARM_COUNT: usize = 4;

/// Pass probability per recommendation, one row per student category.
const CATEGORY_PASS_PROB: [[f64; ARM_COUNT]; CATEGORY_COUNT] = [
    [1.0, 1.0, 1.0, 1.0],
    [0.5, 0.5, 1.0, 0.7],
    [0.0, 0.0, 1.0, 0.25],
    [0.0, 0.0, 0.5, 0.0],
];

/// Nominal share of the cohort per category, in percent. Sums to 90.
pub const NOMINAL_COHORT_PERCENT: [f64; CATEGORY_COUNT] = [55.0, 20.0, 10.0, 5.0];

/// Pass/fail outcome of one recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum Reward {
    Fail = 0,
    Pass = 1,
}

impl Reward {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Reward::Fail),
            1 => Ok(Reward::Pass),
            other => Err(Error::invalid(format!(
                "reward must be 0 or 1, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentSpec<F> {
    /// Student category 1..=4, or 0 for a custom environment.
    pub category_id: u8,
    pub arm_pass_prob: Vec<F>,
    pub label: String,
}

impl<F: Scalar> EnvironmentSpec<F> {
    /// Custom environment with arbitrary per-arm pass probabilities.
    pub fn new(arm_pass_prob: Vec<F>, label: impl Into<String>) -> Result<Self> {
        if arm_pass_prob.is_empty() {
            return Err(Error::invalid("environment needs at least one arm"));
        }
        if let Some((i, p)) = arm_pass_prob
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= F::zero() && **p <= F::one()))
        {
            return Err(Error::invalid(format!(
                "arm {} pass probability {p} outside [0, 1]",
                i + 1
            )));
        }
        Ok(EnvironmentSpec {
            category_id: 0,
            arm_pass_prob,
            label: label.into(),
        })
    }

    pub fn arm_count(&self) -> usize {
        self.arm_pass_prob.len()
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action < self.arm_count() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "action {action} out of range 0..{}",
                self.arm_count()
            )))
        }
    }

    /// Sample a pass/fail outcome for `action`. Always consumes exactly one
    /// uniform draw, including for arms with probability 0 or 1.
    pub fn step(&self, action: usize, rng: &mut RngStream) -> Result<Reward> {
        self.check_action(action)?;
        Ok(self.step_unchecked(action, rng))
    }

    #[inline]
    pub(crate) fn step_unchecked(&self, action: usize, rng: &mut RngStream) -> Reward {
        let u = rng.uniform();
        if u < self.arm_pass_prob[action].as_f64() {
            Reward::Pass
        } else {
            Reward::Fail
        }
    }

    pub fn expected_reward(&self, action: usize) -> Result<F> {
        self.check_action(action)?;
        Ok(self.arm_pass_prob[action])
    }

    /// Best achievable expected reward and every arm attaining it.
    pub fn optimal_value(&self) -> (F, Vec<usize>) {
        let best = self
            .arm_pass_prob
            .iter()
            .copied()
            .fold(F::neg_infinity(), F::max);
        let arms = self
            .arm_pass_prob
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == best)
            .map(|(i, _)| i)
            .collect();
        (best, arms)
    }
}

/// Built-in environment for student category `category_id` (1..=4).
pub fn make_category_env<F: Scalar>(category_id: u8) -> Result<EnvironmentSpec<F>> {
    let row = usize::from(category_id)
        .checked_sub(1)
        .and_then(|i| CATEGORY_PASS_PROB.get(i))
        .ok_or_else(|| {
            Error::invalid(format!(
                "category id {category_id} not in valid range 1..=4"
            ))
        })?;
    Ok(EnvironmentSpec {
        category_id,
        arm_pass_prob: row.iter().map(|&p| F::of(p)).collect(),
        label: format!("cat{category_id}"),
    })
}

/// Probability that a sampled student belongs to each category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSpec<F> {
    weights: Vec<F>,
}

impl<F: Scalar> CohortSpec<F> {
    /// Weights must be nonnegative and already sum to 1.
    pub fn new(weights: Vec<F>) -> Result<Self> {
        if weights.len() != CATEGORY_COUNT {
            return Err(Error::invalid(format!(
                "cohort needs {CATEGORY_COUNT} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| *w < F::zero() || !w.is_finite()) {
            return Err(Error::invalid(
                "cohort weights must be finite and nonnegative",
            ));
        }
        let sum = weights.iter().fold(F::zero(), |a, &w| a + w);
        if (sum - F::one()).abs() > sum_tolerance::<F>() {
            return Err(Error::invalid(format!(
                "cohort weights sum to {sum}, not 1"
            )));
        }
        Ok(CohortSpec { weights })
    }

    /// Scale nonnegative weights so they sum to 1.
    pub fn normalized(weights: &[F]) -> Result<Self> {
        if weights.iter().any(|w| *w < F::zero() || !w.is_finite()) {
            return Err(Error::invalid(
                "cohort weights must be finite and nonnegative",
            ));
        }
        let sum = weights.iter().fold(F::zero(), |a, &w| a + w);
        if sum <= F::zero() {
            return Err(Error::invalid("cohort weights must not all be zero"));
        }
        Self::new(weights.iter().map(|&w| w / sum).collect())
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Draw a category id (1..=4). Consumes one uniform draw.
    pub fn sample_category(&self, rng: &mut RngStream) -> u8 {
        let w: [f64; CATEGORY_COUNT] = std::array::from_fn(|i| self.weights[i].as_f64());
        rng.categorical(&w) as u8 + 1
    }
}

impl<F: Scalar> Default for CohortSpec<F> {
    /// Nominal 55/20/10/5 split normalized over its total of 90.
    fn default() -> Self {
        let nominal: Vec<F> = NOMINAL_COHORT_PERCENT.iter().map(|&w| F::of(w)).collect();
        Self::normalized(&nominal).expect("nominal cohort weights are valid")
    }
}

fn sum_tolerance<F: Scalar>() -> F {
    F::of(1e-12).max(F::epsilon() * F::of(8.0))
}
