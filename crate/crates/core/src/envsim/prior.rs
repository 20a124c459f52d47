use rand::Rng;
use rand_distr::Distribution;

use super::Theta;
use crate::error::{FpoError, Result};

/// Beta(a, b) distribution on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    a: f64,
    b: f64,
    ln_norm: f64,
    sampler: rand_distr::Beta<f64>,
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(FpoError::InvalidConfig(format!(
                "Beta parameters must be positive, got ({a}, {b})"
            )));
        }
        let ln_norm = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b);
        let sampler = rand_distr::Beta::new(a, b)
            .map_err(|e| FpoError::InvalidConfig(format!("Beta({a}, {b}): {e}")))?;
        Ok(Self {
            a,
            b,
            ln_norm,
            sampler,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn pdf(&self, theta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(FpoError::Domain {
                value: theta,
                domain: "[0, 1]",
            });
        }
        let log_terms = |x: f64, p: f64| if p == 1.0 { 0.0 } else { (p - 1.0) * x.ln() };
        Ok((self.ln_norm + log_terms(theta, self.a) + log_terms(1.0 - theta, self.b)).exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<Theta>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Theta>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(FpoError::DimensionMismatch {
                expected: support.len(),
                got: probs.len(),
            });
        }
        if support.is_empty() {
            return Err(FpoError::Empty("discrete support"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FpoError::InvalidConfig(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FpoError::InvalidConfig(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { support, probs })
    }

    /// Two-point distribution on {0, 1} with `P(θ = 1) = p_one`.
    pub fn bernoulli(p_one: f64) -> Result<Self> {
        Self::new(vec![Theta(0.0), Theta(1.0)], vec![1.0 - p_one, p_one])
    }

    pub fn support(&self) -> &[Theta] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (theta, p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *theta;
            }
        }
        // u landed in the round-off gap at the top; take the last atom with mass.
        let last = self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        self.support[last]
    }
}

/// Distribution over θ: either the true prior p(θ) or a training distribution q_ψ(θ).
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaDistribution {
    Beta(BetaPrior),
    Discrete(DiscreteDistribution),
    Point(Theta),
}

impl ThetaDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        match self {
            Self::Beta(b) => Theta(b.sample(rng)),
            Self::Discrete(d) => d.sample(rng),
            Self::Point(t) => *t,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Beta(b) => b.mean(),
            Self::Discrete(d) => d.support.iter().zip(&d.probs).map(|(t, p)| t.0 * p).sum(),
            Self::Point(t) => t.0,
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Self::Beta(_))
    }
}
