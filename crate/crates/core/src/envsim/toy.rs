use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiscreteDistribution, Environment, StepResult, Theta, ThetaDistribution};
use crate::error::{FpoError, Result};

/// Point mass that must hold a target velocity. With probability `p_high`
/// (θ = 1) the target is `target_high` and matching it pays a large bonus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyVelocityConfig {
    pub target_low: f64,
    pub target_high: f64,
    pub p_high: f64,
    pub bonus: f64,
    pub horizon: usize,
    /// Velocity change per step is `accel · tanh(action)`.
    pub accel: f64,
    pub max_velocity: f64,
    /// Position integrates velocity with this time step.
    pub dt: f64,
}

impl Default for ToyVelocityConfig {
    fn default() -> Self {
        Self {
            target_low: 2.0,
            target_high: 4.0,
            p_high: 0.02,
            bonus: 400.0,
            horizon: 100,
            accel: 0.1,
            max_velocity: 6.0,
            dt: 0.01,
        }
    }
}

impl ToyVelocityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FpoError::InvalidConfig(format!("toy velocity: {msg}")));
        if !(0.0..=1.0).contains(&self.p_high) {
            return bad("p_high must lie in [0, 1]");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.max_velocity > 0.0 && self.accel > 0.0 && self.dt >= 0.0) {
            return bad("max_velocity and accel must be positive, dt non-negative");
        }
        Ok(())
    }

    pub fn target(&self, theta: Theta) -> f64 {
        if theta.0 >= 0.5 {
            self.target_high
        } else {
            self.target_low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ToyState {
    pub position: f64,
    pub velocity: f64,
}

pub fn toy_step(
    state: ToyState,
    action: f64,
    theta: Theta,
    config: &ToyVelocityConfig,
) -> StepResult<ToyState> {
    let velocity = (state.velocity + config.accel * action.tanh()).clamp(0.0, config.max_velocity);
    let position = state.position + config.dt * velocity;
    let mut reward = -(velocity - config.target(theta)).abs();
    if theta.0 >= 0.5 {
        let d = velocity - config.target_high;
        reward += config.bonus * (-d * d).exp();
    }
    StepResult {
        next_state: ToyState { position, velocity },
        reward,
        terminal: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyVelocity {
    pub config: ToyVelocityConfig,
}

impl ToyVelocity {
    pub fn new(config: ToyVelocityConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Environment for ToyVelocity {
    type State = ToyState;

    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset<R: Rng + ?Sized>(&self, _rng: &mut R) -> ToyState {
        ToyState::default()
    }

    fn observe(&self, state: &ToyState, obs: &mut [f64]) {
        obs[0] = state.position;
        obs[1] = state.velocity;
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &ToyState,
        action: &[f64],
        theta: Theta,
        _rng: &mut R,
    ) -> StepResult<ToyState> {
        toy_step(*state, action[0], theta, &self.config)
    }

    fn prior(&self) -> ThetaDistribution {
        ThetaDistribution::Discrete(
            DiscreteDistribution::bernoulli(self.config.p_high).expect("validated"),
        )
    }

    fn rare_events_are_negative(&self) -> bool {
        false
    }
}
