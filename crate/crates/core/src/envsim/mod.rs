//! θ-parameterised episodic environments and distributions over θ.
//!
//! The policy never observes θ: [`Environment::observe`] only sees the
//! environment state. θ is passed to [`Environment::step`] by the rollout loop.

mod cliff;
mod prior;
mod toy;

pub use cliff::{cliff_reset, cliff_step, cliff_transition, CliffWalker, CliffWalkerConfig};
pub use prior::{BetaPrior, DiscreteDistribution, ThetaDistribution};
pub use toy::{toy_step, ToyState, ToyVelocity, ToyVelocityConfig};

use rand::Rng;

/// A realisation of the environment variable.
#[derive(
    Debug, Clone, Copy, PartialEq, PartialOrd, Default, serde::Serialize, serde::Deserialize,
)]
pub struct Theta(pub f64);

impl Theta {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<S> {
    pub next_state: S,
    pub reward: f64,
    /// Environmental termination. Reaching the horizon is not terminal.
    pub terminal: bool,
}

pub trait Environment: Send + Sync {
    type State: Clone + std::fmt::Debug;

    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    /// Writes the policy observation of `state` into `obs` (length `obs_dim`).
    fn observe(&self, state: &Self::State, obs: &mut [f64]);
    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &[f64],
        theta: Theta,
        rng: &mut R,
    ) -> StepResult<Self::State>;
    /// The true distribution p(θ).
    fn prior(&self) -> ThetaDistribution;
    /// Sign of the significant rare events: `true` when they carry unusually
    /// low return (cliff falls), `false` when unusually high (toy bonus).
    fn rare_events_are_negative(&self) -> bool {
        true
    }
}

/// `sign` with `sign(0) = +1`.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
