use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{sign, BetaPrior, Environment, StepResult, Theta, ThetaDistribution};
use crate::error::{FpoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliffWalkerConfig {
    pub step_size: f64,
    pub noise_scale: f64,
    /// The cliff edge sits at `cliff_base + θ`.
    pub cliff_base: f64,
    /// Reward for walking off the edge. `0` gives the variant without rare events.
    pub fall_reward: f64,
    pub horizon: usize,
    /// Start states are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub prior_a: f64,
    pub prior_b: f64,
}

impl Default for CliffWalkerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.025,
            noise_scale: 0.005,
            cliff_base: 1.0,
            fall_reward: -5000.0,
            horizon: 500,
            init_scale: 0.05,
            prior_a: 2.0,
            prior_b: 1.0,
        }
    }
}

impl CliffWalkerConfig {
    pub fn without_rare_events() -> Self {
        Self {
            fall_reward: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FpoError::InvalidConfig(format!("cliff walker: {msg}")));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be non-negative");
        }
        if !(self.fall_reward <= 0.0) {
            return bad("fall_reward must be non-positive");
        }
        if !(self.init_scale >= 0.0) || !(self.step_size > 0.0) {
            return bad("step_size must be positive and init_scale non-negative");
        }
        if !(self.prior_a > 0.0 && self.prior_b > 0.0) {
            return bad("prior parameters must be positive");
        }
        Ok(())
    }
}

pub fn cliff_reset<R: Rng + ?Sized>(config: &CliffWalkerConfig, rng: &mut R) -> f64 {
    if config.init_scale == 0.0 {
        return 0.0;
    }
    rng.random_range(-config.init_scale..=config.init_scale)
}

/// Deterministic part of the cliff-walker transition, with the Gaussian
/// perturbation `eps` supplied by the caller.
pub fn cliff_transition(
    state: f64,
    action: f64,
    theta: Theta,
    eps: f64,
    config: &CliffWalkerConfig,
) -> StepResult<f64> {
    let next_state = state + config.step_size * sign(action) + config.noise_scale * eps;
    if next_state < config.cliff_base + theta.0 {
        StepResult {
            next_state,
            reward: next_state,
            terminal: false,
        }
    } else {
        StepResult {
            next_state,
            reward: config.fall_reward,
            terminal: true,
        }
    }
}

pub fn cliff_step<R: Rng + ?Sized>(
    state: f64,
    action: f64,
    theta: Theta,
    config: &CliffWalkerConfig,
    rng: &mut R,
) -> StepResult<f64> {
    let eps: f64 = rng.sample(StandardNormal);
    cliff_transition(state, action, theta, eps, config)
}

/// One-dimensional walker that is rewarded for standing close to a cliff
/// whose position depends on θ.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffWalker {
    pub config: CliffWalkerConfig,
}

impl CliffWalker {
    pub fn new(config: CliffWalkerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn prior_beta(&self) -> BetaPrior {
        BetaPrior::new(self.config.prior_a, self.config.prior_b).expect("validated")
    }
}

impl Environment for CliffWalker {
    type State = f64;

    fn obs_dim(&self) -> usize {
        1
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        cliff_reset(&self.config, rng)
    }

    fn observe(&self, state: &f64, obs: &mut [f64]) {
        obs[0] = *state;
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &f64,
        action: &[f64],
        theta: Theta,
        rng: &mut R,
    ) -> StepResult<f64> {
        cliff_step(*state, action[0], theta, &self.config, rng)
    }

    fn prior(&self) -> ThetaDistribution {
        ThetaDistribution::Beta(self.prior_beta())
    }
}
