//! Batch collection under a θ distribution, advantage estimation with a
//! θ-aware linear baseline, and the KL-constrained natural-gradient update.

mod advantages;
mod trpo;

pub use advantages::{compute_advantages, discounted_returns, Advantages, ValueBaseline};
pub use trpo::{
    conjugate_gradient, fisher_vector_product, kl_constrained_update, mean_kl, policy_gradient,
    surrogate_gain, trust_region_search, TrustRegionStep, UpdateOutcome,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::{Environment, Theta, ThetaDistribution};
use crate::error::{FpoError, Result};
use crate::policy::{GaussianMlp, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolGradConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub kl_limit: f64,
    /// Environment steps collected per iteration.
    pub batch_size: usize,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    pub baseline_ridge: f64,
    pub normalise_advantages: bool,
}

impl Default for PolGradConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 1.0,
            kl_limit: 0.01,
            batch_size: 10_000,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_ratio: 0.5,
            max_backtracks: 10,
            baseline_ridge: 1e-5,
            normalise_advantages: true,
        }
    }
}

impl PolGradConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FpoError::InvalidConfig(format!("policy gradient: {msg}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.kl_limit > 0.0) {
            return bad("kl_limit must be positive");
        }
        if self.batch_size == 0 || self.cg_iters == 0 || self.max_backtracks == 0 {
            return bad("batch_size, cg_iters and max_backtracks must be positive");
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad("backtrack_ratio must lie in (0, 1)");
        }
        if !(self.cg_damping >= 0.0 && self.baseline_ridge > 0.0) {
            return bad("cg_damping must be non-negative and baseline_ridge positive");
        }
        Ok(())
    }
}

/// One episode: per-step observation, action, reward and termination flag,
/// plus the θ it was played under.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    pub theta: Theta,
}

impl Trajectory {
    pub fn new(obs_dim: usize, act_dim: usize, theta: Theta) -> Self {
        Self {
            obs_dim,
            act_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            theta,
        }
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, terminal: bool) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(action.len(), self.act_dim);
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.terminals.push(terminal);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn obs(&self, t: usize) -> &[f64] {
        &self.obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.act_dim..(t + 1) * self.act_dim]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn terminals(&self) -> &[bool] {
        &self.terminals
    }

    /// Undiscounted return.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn terminated(&self) -> bool {
        self.terminals.last().copied().unwrap_or(false)
    }
}

/// Plays one episode of `policy` at fixed `theta`, calling `on_step` with
/// `(obs, action, reward, terminal)` for every step. Returns the undiscounted
/// return. The episode ends at the horizon or on environmental termination.
pub fn run_episode<E, R>(
    env: &E,
    policy: &GaussianMlp,
    theta: Theta,
    ws: &mut Workspace,
    rng: &mut R,
    on_step: impl FnMut(&[f64], &[f64], f64, bool),
) -> f64
where
    E: Environment,
    R: Rng + ?Sized,
{
    run_episode_for(env, policy, theta, env.horizon(), ws, rng, on_step)
}

/// [`run_episode`] truncated at `horizon` steps.
pub fn run_episode_for<E, R>(
    env: &E,
    policy: &GaussianMlp,
    theta: Theta,
    horizon: usize,
    ws: &mut Workspace,
    rng: &mut R,
    mut on_step: impl FnMut(&[f64], &[f64], f64, bool),
) -> f64
where
    E: Environment,
    R: Rng + ?Sized,
{
    let mut obs = vec![0.0; env.obs_dim()];
    let mut action = vec![0.0; env.act_dim()];
    let mut state = env.reset(rng);
    let mut total = 0.0;
    for _ in 0..horizon {
        env.observe(&state, &mut obs);
        policy.act_into(&obs, ws, rng, &mut action);
        let step = env.step(&state, &action, theta, rng);
        total += step.reward;
        on_step(&obs, &action, step.reward, step.terminal);
        if step.terminal {
            break;
        }
        state = step.next_state;
    }
    total
}

pub fn rollout<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &GaussianMlp,
    theta: Theta,
    ws: &mut Workspace,
    rng: &mut R,
) -> Trajectory {
    let mut traj = Trajectory::new(env.obs_dim(), env.act_dim(), theta);
    run_episode(env, policy, theta, ws, rng, |o, a, r, d| {
        traj.push(o, a, r, d)
    });
    traj
}

/// Trajectories gathered for one policy update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub trajectories: Vec<Trajectory>,
}

impl Batch {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_steps() == 0
    }

    /// Every `(observation, action)` pair in batch order.
    pub fn steps(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.trajectories
            .iter()
            .flat_map(|t| (0..t.len()).map(move |i| (t.obs(i), t.action(i))))
    }

    pub fn extend(&mut self, other: Batch) {
        self.trajectories.extend(other.trajectories);
    }
}

/// Draws θ from `q` and plays one episode per draw until at least
/// `batch_size` steps have been collected.
pub fn collect_batch<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &GaussianMlp,
    q: &ThetaDistribution,
    batch_size: usize,
    rng: &mut R,
) -> Batch {
    let mut ws = policy.workspace();
    let mut batch = Batch::default();
    let mut steps = 0;
    while steps < batch_size.max(1) {
        let theta = q.sample(rng);
        let traj = rollout(env, policy, theta, &mut ws, rng);
        steps += traj.len();
        batch.trajectories.push(traj);
    }
    batch
}
