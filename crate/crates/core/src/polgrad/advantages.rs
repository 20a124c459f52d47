use super::{Batch, Trajectory};
use crate::error::{FpoError, Result};
use crate::linalg::Cholesky;

/// `G_t = Σ_k γ^k r_{t+k}` with no bootstrap past the final step.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Linear value model over `(obs, obs², θ, t/H, (t/H)², 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBaseline {
    weights: Vec<f64>,
    obs_dim: usize,
    horizon: usize,
}

impl ValueBaseline {
    /// Baseline that predicts zero everywhere.
    pub fn zero(obs_dim: usize, horizon: usize) -> Self {
        Self {
            weights: vec![0.0; 2 * obs_dim + 4],
            obs_dim,
            horizon,
        }
    }

    pub fn num_features(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn features_into(obs: &[f64], theta: f64, t: usize, horizon: usize, out: &mut [f64]) {
        let d = obs.len();
        let time = t as f64 / horizon.max(1) as f64;
        for (i, o) in obs.iter().enumerate() {
            out[i] = *o;
            out[d + i] = o * o;
        }
        out[2 * d] = theta;
        out[2 * d + 1] = time;
        out[2 * d + 2] = time * time;
        out[2 * d + 3] = 1.0;
    }

    pub fn predict(&self, obs: &[f64], theta: f64, t: usize) -> f64 {
        let mut f = vec![0.0; self.weights.len()];
        Self::features_into(obs, theta, t, self.horizon, &mut f);
        f.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    /// Ridge least-squares fit of `returns` (flat, batch order) on the
    /// features. The ridge is raised tenfold until the normal equations factor.
    pub fn fit(batch: &Batch, returns: &[f64], horizon: usize, ridge: f64) -> Result<Self> {
        let first = batch
            .trajectories
            .iter()
            .find(|t| !t.is_empty())
            .ok_or(FpoError::Empty("baseline batch"))?;
        let obs_dim = first.obs_dim();
        if returns.len() != batch.num_steps() {
            return Err(FpoError::DimensionMismatch {
                expected: batch.num_steps(),
                got: returns.len(),
            });
        }
        let k = 2 * obs_dim + 4;
        let mut xtx = vec![0.0; k * k];
        let mut xty = vec![0.0; k];
        let mut f = vec![0.0; k];
        let mut idx = 0;
        for traj in &batch.trajectories {
            for t in 0..traj.len() {
                Self::features_into(traj.obs(t), traj.theta.0, t, horizon, &mut f);
                let y = returns[idx];
                idx += 1;
                for i in 0..k {
                    xty[i] += f[i] * y;
                    for j in 0..=i {
                        xtx[i * k + j] += f[i] * f[j];
                    }
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                xtx[j * k + i] = xtx[i * k + j];
            }
        }
        let mut reg = ridge;
        for _ in 0..8 {
            let mut a = xtx.clone();
            for i in 0..k {
                a[i * k + i] += reg;
            }
            if let Some(chol) = Cholesky::factor(&a, k) {
                let weights = chol.solve(&xty);
                if weights.iter().all(|w| w.is_finite()) {
                    return Ok(Self {
                        weights,
                        obs_dim,
                        horizon,
                    });
                }
            }
            reg *= 10.0;
        }
        Err(FpoError::NotPositiveDefinite { jitter: reg })
    }

    fn predict_trajectory(&self, traj: &Trajectory) -> Vec<f64> {
        (0..traj.len())
            .map(|t| self.predict(traj.obs(t), traj.theta.0, t))
            .collect()
    }
}

/// Per-step discounted returns and advantages, flattened in batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Generalised advantage estimates. The value after the last step of every
/// trajectory is taken as zero, whether it ended by termination or at the
/// horizon; with `λ = 1` this gives `A_t = G_t − V(s_t)`. When `normalise`
/// is set, advantages are shifted and scaled to zero mean and unit variance
/// over the batch (all zeros if the variance vanishes).
pub fn compute_advantages(
    batch: &Batch,
    baseline: &ValueBaseline,
    gamma: f64,
    lambda: f64,
    normalise: bool,
) -> Advantages {
    let n = batch.num_steps();
    let mut returns = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    for traj in &batch.trajectories {
        returns.extend(discounted_returns(traj.rewards(), gamma));
        let values = baseline.predict_trajectory(traj);
        let len = traj.len();
        let mut adv = vec![0.0; len];
        let mut acc = 0.0;
        for t in (0..len).rev() {
            let next_value = if t + 1 < len { values[t + 1] } else { 0.0 };
            let delta = traj.rewards()[t] + gamma * next_value - values[t];
            acc = delta + gamma * lambda * acc;
            adv[t] = acc;
        }
        advantages.extend(adv);
    }
    if normalise && n > 0 {
        let mean = advantages.iter().sum::<f64>() / n as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        let scale = if std > 1e-8 * mean.abs().max(1.0) {
            1.0 / std
        } else {
            0.0
        };
        for a in &mut advantages {
            *a = (*a - mean) * scale;
        }
    }
    Advantages {
        returns,
        advantages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::Theta;

    fn traj(theta: f64, obs: &[f64], rewards: &[f64]) -> Trajectory {
        let mut t = Trajectory::new(1, 1, Theta(theta));
        for (o, r) in obs.iter().zip(rewards) {
            t.push(&[*o], &[0.0], *r, false);
        }
        t
    }

    #[test]
    fn geometric_returns() {
        assert_eq!(
            discounted_returns(&[1.0, 1.0, 1.0], 0.5),
            vec![1.75, 1.5, 1.0]
        );
    }

    #[test]
    fn myopic_advantages_are_rewards() {
        let batch = Batch::new(vec![traj(0.0, &[0.1, 0.2, 0.3], &[3.0, -1.0, 2.0])]);
        let zero = ValueBaseline::zero(1, 10);
        let adv = compute_advantages(&batch, &zero, 0.0, 1.0, false);
        assert_eq!(adv.advantages, vec![3.0, -1.0, 2.0]);
        let adv = compute_advantages(&batch, &zero, 0.5, 1.0, false);
        assert_eq!(adv.advantages, adv.returns);
    }

    #[test]
    fn normalisation() {
        let batch = Batch::new(vec![traj(0.0, &[0.1, 0.2], &[1.0, 1.0])]);
        let zero = ValueBaseline::zero(1, 10);
        let adv = compute_advantages(&batch, &zero, 0.0, 1.0, true);
        assert_eq!(adv.advantages, vec![0.0, 0.0]);

        let batch = Batch::new(vec![traj(0.0, &[0.1, 0.2, 0.3], &[1.0, 5.0, -2.0])]);
        let a = compute_advantages(&batch, &zero, 0.9, 1.0, true).advantages;
        let mean = a.iter().sum::<f64>() / 3.0;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_returns_fit_the_intercept() {
        let batch = Batch::new(vec![
            traj(0.2, &[0.1, 0.5, -0.3, 0.8], &[0.0; 4]),
            traj(0.9, &[1.1, 0.4, 0.0], &[0.0; 3]),
            traj(0.5, &[-0.7, 0.2, 0.6], &[0.0; 3]),
        ]);
        let returns = vec![7.5; 10];
        let b = ValueBaseline::fit(&batch, &returns, 10, 1e-8).unwrap();
        for (o, th, t) in [(0.1, 0.2, 0), (1.1, 0.9, 0), (-0.3, 0.2, 2), (3.0, 0.5, 7)] {
            assert!((b.predict(&[o], th, t) - 7.5).abs() < 1e-6);
        }
    }

    #[test]
    fn returns_linear_in_theta_have_zero_residual() {
        // y = 3θ − 2: recover it and compare with a direct normal-equation
        // solve on the single informative feature pair (θ, 1).
        let thetas = [0.05, 0.3, 0.41, 0.77, 0.93];
        let mut trajs = Vec::new();
        let mut returns = Vec::new();
        for (i, th) in thetas.iter().enumerate() {
            let obs: Vec<f64> = (0..4).map(|k| 0.1 * (i * 4 + k) as f64).collect();
            trajs.push(traj(*th, &obs, &[0.0; 4]));
            returns.extend(std::iter::repeat_n(3.0 * th - 2.0, 4));
        }
        let batch = Batch::new(trajs);
        let b = ValueBaseline::fit(&batch, &returns, 4, 1e-10).unwrap();
        let mut idx = 0;
        for t in &batch.trajectories {
            for s in 0..t.len() {
                assert!((b.predict(t.obs(s), t.theta.0, s) - returns[idx]).abs() < 1e-6);
                idx += 1;
            }
        }
    }

    #[test]
    fn ridge_handles_duplicated_rows() {
        let batch = Batch::new(vec![traj(0.5, &[0.2; 6], &[0.0; 6])]);
        let returns = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let b = ValueBaseline::fit(&batch, &returns, 6, 1e-5).unwrap();
        assert!(b.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(ValueBaseline::fit(&Batch::default(), &[], 10, 1e-5).is_err());
    }
}
