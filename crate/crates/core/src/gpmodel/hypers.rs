use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DistanceCache, GpDataset, GpHypers, JITTER_FIRST, JITTER_MAX};
use crate::error::Result;
use crate::linalg::{dot, Cholesky};
use crate::scalar::Scalar;

pub const RESTARTS: usize = 8;
/// Log-space step sizes of the coordinate refinement, one round each.
const REFINE_STEPS: [f64; 3] = [1.0, 0.4, 0.15];
/// Minimum number of observations before hyperparameters are fitted.
pub const MIN_FIT_POINTS: usize = 3;

/// Box constraints on every hyperparameter, for standardised outputs,
/// unit-box ψ and iteration indices rescaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperBounds<T> {
    pub signal_var: (T, T),
    pub lengthscale_psi: (T, T),
    pub lengthscale_iter: (T, T),
    pub lengthscale_fpr: (T, T),
    pub noise_var: (T, T),
}

impl<T: Scalar> Default for HyperBounds<T> {
    fn default() -> Self {
        let p = |a: f64, b: f64| (T::of(a), T::of(b));
        Self {
            signal_var: p(0.05, 20.0),
            lengthscale_psi: p(0.05, 5.0),
            lengthscale_iter: p(0.02, 5.0),
            lengthscale_fpr: p(0.01, 5.0),
            noise_var: p(1e-6, 2.0),
        }
    }
}

impl<T: Scalar> HyperBounds<T> {
    /// Per-coordinate `(ln lo, ln hi)` matching [`GpHypers::to_log_vec`].
    pub fn log_box(&self, psi_dim: usize) -> Vec<(T, T)> {
        let ln = |(a, b): (T, T)| (a.ln(), b.ln());
        let mut v = vec![ln(self.signal_var)];
        v.extend(std::iter::repeat_n(ln(self.lengthscale_psi), psi_dim));
        v.extend([
            ln(self.lengthscale_iter),
            ln(self.lengthscale_fpr),
            ln(self.noise_var),
        ]);
        v
    }

    /// Geometric midpoint of every bound.
    pub fn midpoint(&self, psi_dim: usize) -> GpHypers<T> {
        let half = T::of(0.5);
        let mid: Vec<T> = self
            .log_box(psi_dim)
            .into_iter()
            .map(|(a, b)| (a + b) * half)
            .collect();
        GpHypers::from_log_vec(&mid)
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [
            self.signal_var,
            self.lengthscale_psi,
            self.lengthscale_iter,
            self.lengthscale_fpr,
            self.noise_var,
        ] {
            if !(lo > T::zero() && hi >= lo && hi.is_finite()) {
                return Err(crate::error::FpoError::InvalidConfig(
                    "GP hyperparameter bounds must satisfy 0 < lo <= hi".into(),
                ));
            }
        }
        Ok(())
    }
}

fn lml_cached<T: Scalar>(cache: &DistanceCache<T>, y: &[T], h: &GpHypers<T>) -> Option<T> {
    let n = cache.len();
    let gram = cache.gram(h);
    let (chol, _) =
        Cholesky::factor_with_jitter(&gram, n, T::of(JITTER_FIRST), T::of(JITTER_MAX)).ok()?;
    let alpha = chol.solve(y);
    let half = T::of(0.5);
    let value = -half * dot(y, &alpha)
        - half * chol.log_det()
        - half * T::of(n as f64) * T::of(2.0 * std::f64::consts::PI).ln();
    value.is_finite().then_some(value)
}

/// Log marginal likelihood of the standardised outputs.
pub fn log_marginal_likelihood<T: Scalar>(
    data: &GpDataset<T>,
    hypers: &GpHypers<T>,
    iter_scale: T,
) -> Result<T> {
    hypers.validate()?;
    let cache = DistanceCache::new(&data.inputs, iter_scale);
    lml_cached(&cache, &data.normalised_outputs(), hypers)
        .ok_or(crate::error::FpoError::NotPositiveDefinite { jitter: JITTER_MAX })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit<T> {
    pub hypers: GpHypers<T>,
    /// `None` when too few points were available and defaults were returned.
    pub log_likelihood: Option<T>,
    /// Every starting point with its log marginal likelihood.
    pub starts: Vec<(GpHypers<T>, T)>,
}

/// Maximises the log marginal likelihood over the bounded box by multi-start
/// coordinate search in log space. With fewer than [`MIN_FIT_POINTS`]
/// observations the geometric midpoint of the bounds is returned.
///
/// The first start is `warm_start` (clamped to the bounds) when given, the
/// midpoint otherwise; the remaining starts are log-uniform in the box.
pub fn fit_hypers<T: Scalar, R: Rng + ?Sized>(
    data: &GpDataset<T>,
    bounds: &HyperBounds<T>,
    iter_scale: T,
    warm_start: Option<&GpHypers<T>>,
    rng: &mut R,
) -> HyperFit<T> {
    fit_hypers_with(data, bounds, iter_scale, warm_start, RESTARTS, rng)
}

/// [`fit_hypers`] with an explicit number of starts (at least one).
pub fn fit_hypers_with<T: Scalar, R: Rng + ?Sized>(
    data: &GpDataset<T>,
    bounds: &HyperBounds<T>,
    iter_scale: T,
    warm_start: Option<&GpHypers<T>>,
    restarts: usize,
    rng: &mut R,
) -> HyperFit<T> {
    let restarts = restarts.max(1);
    let psi_dim = data.inputs.first().map_or(0, |x| x.psi.len());
    let midpoint = bounds.midpoint(psi_dim);
    if data.len() < MIN_FIT_POINTS {
        return HyperFit {
            hypers: midpoint,
            log_likelihood: None,
            starts: Vec::new(),
        };
    }
    let log_box = bounds.log_box(psi_dim);
    let clamp = |v: &mut Vec<T>| {
        for (x, (lo, hi)) in v.iter_mut().zip(&log_box) {
            *x = x.max(*lo).min(*hi);
        }
    };
    let cache = DistanceCache::new(&data.inputs, iter_scale);
    let y = data.normalised_outputs();
    let score =
        |v: &[T]| lml_cached(&cache, &y, &GpHypers::from_log_vec(v)).unwrap_or(T::neg_infinity());

    let mut starts: Vec<Vec<T>> = Vec::with_capacity(restarts);
    let mut first = warm_start.map_or_else(|| midpoint.to_log_vec(), |h| h.to_log_vec());
    if first.len() != log_box.len() {
        first = midpoint.to_log_vec();
    }
    clamp(&mut first);
    starts.push(first);
    while starts.len() < restarts {
        starts.push(
            log_box
                .iter()
                .map(|(lo, hi)| {
                    let u: f64 = rng.random();
                    *lo + (*hi - *lo) * T::of(u)
                })
                .collect(),
        );
    }

    let mut best: Option<(Vec<T>, T)> = None;
    let mut start_report = Vec::with_capacity(restarts);
    for start in starts {
        let start_value = score(&start);
        start_report.push((GpHypers::from_log_vec(&start), start_value));
        let (mut point, mut value) = (start, start_value);
        for step in REFINE_STEPS {
            let step = T::of(step);
            for c in 0..point.len() {
                for dir in [T::one(), -T::one()] {
                    let mut trial = point.clone();
                    trial[c] = trial[c] + dir * step;
                    clamp(&mut trial);
                    if trial[c] == point[c] {
                        continue;
                    }
                    let v = score(&trial);
                    if v > value {
                        point = trial;
                        value = v;
                        break;
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((point, value));
        }
    }
    let (point, value) = best.expect("at least one restart");
    if value == T::neg_infinity() {
        return HyperFit {
            hypers: midpoint,
            log_likelihood: None,
            starts: start_report,
        };
    }
    HyperFit {
        hypers: GpHypers::from_log_vec(&point),
        log_likelihood: Some(value),
        starts: start_report,
    }
}
