//! Upper-confidence-bound selection of ψ for the current policy.
//!
//! ψ is treated as an opaque box-bounded vector. The GP sees ψ in unit-box
//! coordinates; [`PsiBounds`] converts in both directions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FpoError, Result};
use crate::gpmodel::{GaussianProcess, MIN_FIT_POINTS};
use crate::policy::Fingerprint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> PsiPoint<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBounds<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> PsiBounds<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(FpoError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(FpoError::Empty("ψ bounds"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(FpoError::InvalidConfig("ψ bounds need lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, psi: &PsiPoint<T>) -> bool {
        psi.dim() == self.dim()
            && psi
                .values
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn to_unit(&self, psi: &PsiPoint<T>) -> Vec<T> {
        psi.values
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (lo, hi))| {
                if hi > lo {
                    (*v - *lo) / (*hi - *lo)
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    pub fn from_unit(&self, unit: &[T]) -> PsiPoint<T> {
        PsiPoint::new(
            unit.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(u, (lo, hi))| {
                    let u = u.max(T::zero()).min(T::one());
                    (*lo + u * (*hi - *lo)).max(*lo).min(*hi)
                })
                .collect(),
        )
    }

    pub fn midpoint(&self) -> PsiPoint<T> {
        self.from_unit(&vec![T::of(0.5); self.dim()])
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> PsiPoint<T> {
        let unit: Vec<T> = (0..self.dim())
            .map(|_| T::of(rng.random::<f64>()))
            .collect();
        self.from_unit(&unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub kappa: f64,
    pub n_candidates: usize,
    pub n_refine: usize,
    /// Each refinement round searches `shrink^round` of the box width.
    pub shrink: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            n_candidates: 500,
            n_refine: 3,
            shrink: 0.3,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(FpoError::InvalidConfig("kappa must be non-negative".into()));
        }
        if self.n_candidates == 0 || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(FpoError::InvalidConfig(
                "n_candidates must be positive and shrink in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// `μ + κσ`.
pub fn ucb<T: Scalar>(mu: T, sigma: T, kappa: T) -> T {
    mu + kappa * sigma
}

/// Scores a GP posterior `(mean, variance)`; larger is better.
pub trait Acquisition<T> {
    fn score(&self, mean: T, var: T) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ucb<T> {
    pub kappa: T,
}

impl<T: Scalar> Acquisition<T> for Ucb<T> {
    fn score(&self, mean: T, var: T) -> T {
        ucb(mean, var.max(T::zero()).sqrt(), self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub psi: PsiPoint<T>,
    /// Acquisition value at `psi`; `None` on a cold start.
    pub value: Option<T>,
    /// Every ψ scored during the search, with its acquisition value.
    pub evaluated: Vec<(PsiPoint<T>, T)>,
}

impl<T: Scalar> Selection<T> {
    pub fn is_cold_start(&self) -> bool {
        self.value.is_none()
    }
}

/// Picks the ψ maximising `acquisition` for the next update of the policy
/// with the given fingerprint at `iteration`: `n_candidates` uniform draws,
/// then `n_refine` rounds of shrinking coordinate search around the best.
/// Without a GP, or with fewer than three observations, ψ is uniform in the box.
pub fn select_psi_with<T, A, R>(
    gp: Option<&GaussianProcess<T>>,
    acquisition: &A,
    fingerprint: &Fingerprint<T>,
    iteration: usize,
    bounds: &PsiBounds<T>,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Result<Selection<T>>
where
    T: Scalar,
    A: Acquisition<T>,
    R: Rng + ?Sized,
{
    let gp = match gp {
        Some(gp) if gp.len() >= MIN_FIT_POINTS => gp,
        _ => {
            return Ok(Selection {
                psi: bounds.sample_uniform(rng),
                value: None,
                evaluated: Vec::new(),
            })
        }
    };
    let predictor = gp.with_context(iteration, fingerprint);
    let dim = bounds.dim();
    let mut evaluated = Vec::with_capacity(config.n_candidates + 2 * dim * config.n_refine);
    let score = |unit: &[T], evaluated: &mut Vec<(PsiPoint<T>, T)>| -> Result<T> {
        let (mu, var) = predictor.predict(unit)?;
        let value = acquisition.score(mu, var);
        evaluated.push((bounds.from_unit(unit), value));
        Ok(value)
    };

    let mut best_unit: Vec<T> = Vec::new();
    let mut best_value = T::neg_infinity();
    for _ in 0..config.n_candidates {
        let unit: Vec<T> = (0..dim).map(|_| T::of(rng.random::<f64>())).collect();
        let v = score(&unit, &mut evaluated)?;
        if v > best_value || best_unit.is_empty() {
            best_value = v;
            best_unit = unit;
        }
    }
    let mut radius = T::one();
    for _ in 0..config.n_refine {
        radius = radius * T::of(config.shrink);
        for d in 0..dim {
            for dir in [T::one(), -T::one()] {
                let mut trial = best_unit.clone();
                trial[d] = (trial[d] + dir * radius).max(T::zero()).min(T::one());
                if trial[d] == best_unit[d] {
                    continue;
                }
                let v = score(&trial, &mut evaluated)?;
                if v > best_value {
                    best_value = v;
                    best_unit = trial;
                }
            }
        }
    }
    Ok(Selection {
        psi: bounds.from_unit(&best_unit),
        value: Some(best_value),
        evaluated,
    })
}

/// [`select_psi_with`] using UCB with `config.kappa`.
pub fn select_psi<T: Scalar, R: Rng + ?Sized>(
    gp: Option<&GaussianProcess<T>>,
    fingerprint: &Fingerprint<T>,
    iteration: usize,
    bounds: &PsiBounds<T>,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Result<Selection<T>> {
    let acq = Ucb {
        kappa: T::of(config.kappa),
    };
    select_psi_with(gp, &acq, fingerprint, iteration, bounds, config, rng)
}
