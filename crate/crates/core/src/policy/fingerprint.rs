use serde::{Deserialize, Serialize};

use crate::error::{FpoError, Result};
use crate::polgrad::Trajectory;
use crate::scalar::Scalar;

/// Lower bound on every fingerprint standard deviation.
pub const STD_FLOOR: f64 = 1e-3;

/// Low-dimensional stand-in for a policy: a diagonal Gaussian fitted to the
/// states it visits (or the actions it takes), tagged with the training
/// iteration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub iteration: usize,
}

impl<T: Scalar> Fingerprint<T> {
    /// Builds a fingerprint, flooring every standard deviation at [`STD_FLOOR`].
    pub fn new(mean: Vec<T>, std: Vec<T>, iteration: usize) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(FpoError::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if mean.is_empty() {
            return Err(FpoError::Empty("fingerprint dimensions"));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(FpoError::NonFinite("fingerprint"));
        }
        let floor = T::of(STD_FLOOR);
        let std = std.into_iter().map(|s| s.max(floor)).collect();
        Ok(Self {
            mean,
            std,
            iteration,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cast<U: Scalar>(&self) -> Fingerprint<U> {
        Fingerprint {
            mean: self.mean.iter().map(|v| U::of(v.as_f64())).collect(),
            std: self.std.iter().map(|v| U::of(v.as_f64())).collect(),
            iteration: self.iteration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerprintMode {
    State,
    Action,
}

/// Running per-dimension mean and population variance (Chan et al. merge).
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl FingerprintAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn push_trajectory(&mut self, traj: &Trajectory, mode: FingerprintMode) {
        for t in 0..traj.len() {
            match mode {
                FingerprintMode::State => self.push(traj.obs(t)),
                FingerprintMode::Action => self.push(traj.action(t)),
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self, iteration: usize) -> Result<Fingerprint<f64>> {
        if self.count == 0 {
            return Err(FpoError::Empty("fingerprint samples"));
        }
        let n = self.count as f64;
        let std = self.m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
        Fingerprint::new(self.mean.clone(), std, iteration)
    }
}

/// Fits the state (or action) fingerprint to everything visited in
/// `trajectories`, pooled.
pub fn fit_fingerprint(
    trajectories: &[Trajectory],
    mode: FingerprintMode,
    iteration: usize,
) -> Result<Fingerprint<f64>> {
    let dim = match (trajectories.first(), mode) {
        (None, _) => return Err(FpoError::Empty("trajectory set")),
        (Some(t), FingerprintMode::State) => t.obs_dim(),
        (Some(t), FingerprintMode::Action) => t.act_dim(),
    };
    let mut acc = FingerprintAccumulator::new(dim);
    for traj in trajectories {
        acc.push_trajectory(traj, mode);
    }
    acc.finish(iteration)
}
