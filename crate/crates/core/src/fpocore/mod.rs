//! The training loop and its baselines.
//!
//! Every method shares batch collection, the policy update, `J` evaluation
//! and bookkeeping; they differ only in how the θ distribution for the next
//! batch is chosen and, for EPOpt, in which trajectories are kept.

mod trainer;

pub use trainer::{enum_gradient, epopt_filter, update_on_batch, Trainer};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::acquisition::{select_psi, AcquisitionConfig, PsiBounds, PsiPoint};
use crate::envsim::{BetaPrior, DiscreteDistribution, Theta, ThetaDistribution};
use crate::error::{FpoError, Result};
use crate::evalret::{QuadratureConfig, QuadratureResult};
use crate::gpmodel::{GaussianProcess, GpDataset, GpHypers, HyperBounds};
use crate::polgrad::PolGradConfig;
use crate::policy::{Fingerprint, FingerprintMode, GaussianMlp};
use crate::rng::{Rng, Streams};

/// Beta parameters selectable for a continuous θ.
pub const BETA_PSI_BOUNDS: (f64, f64) = (0.05, 20.0);

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// GP-UCB over ψ with the given fingerprint.
    Fpo(FingerprintMode),
    Naive,
    Enum,
    Random,
    Fixed(Vec<f64>),
    EpOpt {
        epsilon: f64,
    },
}

impl Method {
    pub fn uses_gp(&self) -> bool {
        matches!(self, Self::Fpo(_))
    }

    /// Fingerprint recorded for this method's policies.
    pub fn fingerprint_mode(&self) -> FingerprintMode {
        match self {
            Self::Fpo(mode) => *mode,
            _ => FingerprintMode::State,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fpo(FingerprintMode::State) => write!(f, "fpo-ucb-s"),
            Self::Fpo(FingerprintMode::Action) => write!(f, "fpo-ucb-a"),
            Self::Naive => write!(f, "naive"),
            Self::Enum => write!(f, "enum"),
            Self::Random => write!(f, "random"),
            Self::Fixed(x) => {
                let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                write!(f, "fixed({})", parts.join(","))
            }
            Self::EpOpt { epsilon } => write!(f, "epopt({epsilon})"),
        }
    }
}

impl FromStr for Method {
    type Err = FpoError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || FpoError::InvalidConfig(format!("unknown method `{s}`"));
        let args = |name: &str| -> Option<Result<Vec<f64>>> {
            let inner = s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                    .collect(),
            )
        };
        match s.as_str() {
            "fpo-ucb-s" | "fpo" => return Ok(Self::Fpo(FingerprintMode::State)),
            "fpo-ucb-a" => return Ok(Self::Fpo(FingerprintMode::Action)),
            "naive" => return Ok(Self::Naive),
            "enum" => return Ok(Self::Enum),
            "random" => return Ok(Self::Random),
            _ => {}
        }
        if let Some(x) = args("fixed") {
            return Ok(Self::Fixed(x?));
        }
        if let Some(x) = args("epopt") {
            let x = x?;
            if x.len() != 1 || !(x[0] > 0.0 && x[0] <= 1.0) {
                return Err(FpoError::InvalidConfig(
                    "epopt(ε) needs one ε in (0, 1]".into(),
                ));
            }
            return Ok(Self::EpOpt { epsilon: x[0] });
        }
        Err(bad())
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps a bounded ψ to the sampling distribution `q_ψ(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiMapping {
    /// `q_ψ = Beta(ψ₁, ψ₂)` on `[0, 1]`.
    Beta { bounds: PsiBounds<f64> },
    /// `ψ = P(θ = high)` on a two-point support.
    Bernoulli {
        low: Theta,
        high: Theta,
        bounds: PsiBounds<f64>,
    },
}

impl PsiMapping {
    /// The natural ψ family for a prior: Beta for a continuous θ, Bernoulli
    /// for a two-point θ.
    pub fn for_prior(prior: &ThetaDistribution) -> Result<Self> {
        match prior {
            ThetaDistribution::Beta(_) => Ok(Self::Beta {
                bounds: PsiBounds::new(vec![BETA_PSI_BOUNDS.0; 2], vec![BETA_PSI_BOUNDS.1; 2])?,
            }),
            ThetaDistribution::Discrete(d) if d.support().len() == 2 => Ok(Self::Bernoulli {
                low: d.support()[0],
                high: d.support()[1],
                bounds: PsiBounds::new(vec![0.0], vec![1.0])?,
            }),
            _ => Err(FpoError::InvalidConfig(
                "ψ needs a Beta or two-point θ prior".into(),
            )),
        }
    }

    pub fn bounds(&self) -> &PsiBounds<f64> {
        match self {
            Self::Beta { bounds } | Self::Bernoulli { bounds, .. } => bounds,
        }
    }

    pub fn distribution(&self, psi: &PsiPoint<f64>) -> Result<ThetaDistribution> {
        if psi.dim() != self.bounds().dim() {
            return Err(FpoError::DimensionMismatch {
                expected: self.bounds().dim(),
                got: psi.dim(),
            });
        }
        match self {
            Self::Beta { .. } => Ok(ThetaDistribution::Beta(BetaPrior::new(
                psi.values[0],
                psi.values[1],
            )?)),
            Self::Bernoulli { low, high, .. } => {
                let p = psi.values[0];
                if !(0.0..=1.0).contains(&p) {
                    return Err(FpoError::Domain {
                        value: p,
                        domain: "[0, 1]",
                    });
                }
                Ok(ThetaDistribution::Discrete(DiscreteDistribution::new(
                    vec![*low, *high],
                    vec![1.0 - p, p],
                )?))
            }
        }
    }

    /// ψ reproducing `prior` itself.
    pub fn prior_psi(&self, prior: &ThetaDistribution) -> Result<PsiPoint<f64>> {
        match (self, prior) {
            (Self::Beta { .. }, ThetaDistribution::Beta(b)) => {
                Ok(PsiPoint::new(vec![b.a(), b.b()]))
            }
            (Self::Bernoulli { high, .. }, ThetaDistribution::Discrete(d)) => {
                let p = d
                    .support()
                    .iter()
                    .zip(d.probs())
                    .filter(|(t, _)| *t == high)
                    .map(|(_, p)| *p)
                    .sum();
                Ok(PsiPoint::new(vec![p]))
            }
            _ => Err(FpoError::InvalidConfig(
                "prior does not match the ψ family".into(),
            )),
        }
    }

    /// Mean of θ under `q_ψ`: `ψ₁/(ψ₁+ψ₂)` for Beta, `low + ψ·(high − low)`
    /// for Bernoulli.
    pub fn sampling_mean(&self, psi: &PsiPoint<f64>) -> f64 {
        match self {
            Self::Beta { .. } => psi.values[0] / (psi.values[0] + psi.values[1]),
            Self::Bernoulli { low, high, .. } => low.0 + psi.values[0] * (high.0 - low.0),
        }
    }
}

/// Chooses the next ψ given the current GP (absent until it has data), the
/// current policy's fingerprint and the iteration.
pub trait PsiSelector: Send {
    fn select(
        &mut self,
        gp: Option<&GaussianProcess<f64>>,
        fingerprint: &Fingerprint<f64>,
        iteration: usize,
        bounds: &PsiBounds<f64>,
        rng: &mut Rng,
    ) -> Result<PsiPoint<f64>>;
}

/// UCB acquisition maximised by [`select_psi`].
#[derive(Debug, Clone, PartialEq)]
pub struct UcbSelector(pub AcquisitionConfig);

impl PsiSelector for UcbSelector {
    fn select(
        &mut self,
        gp: Option<&GaussianProcess<f64>>,
        fingerprint: &Fingerprint<f64>,
        iteration: usize,
        bounds: &PsiBounds<f64>,
        rng: &mut Rng,
    ) -> Result<PsiPoint<f64>> {
        Ok(select_psi(gp, fingerprint, iteration, bounds, &self.0, rng)?.psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpoConfig {
    pub method: Method,
    pub hidden: Vec<usize>,
    pub polgrad: PolGradConfig,
    pub acquisition: AcquisitionConfig,
    pub quadrature: QuadratureConfig,
    pub gp_bounds: HyperBounds<f64>,
    /// Starts of a full hyperparameter fit.
    pub hyper_restarts: usize,
    /// Between full fits, hyperparameters are only refined from the previous
    /// optimum. Every fit while the data set has at most this many rows, and
    /// every fit whose row count is a multiple of it, is a full one.
    pub full_refit_every: usize,
    /// Pair each GP target with the fingerprint of the updated policy rather
    /// than of the policy that was updated.
    pub pair_next_fingerprint: bool,
    pub epopt_rejection_start: usize,
    /// Keep the highest-return trajectories in EPOpt. Defaults to the
    /// environment's rare-event sign.
    pub epopt_high_reward: Option<bool>,
}

impl Default for FpoConfig {
    fn default() -> Self {
        Self {
            method: Method::Fpo(FingerprintMode::State),
            hidden: vec![5, 5],
            polgrad: PolGradConfig::default(),
            acquisition: AcquisitionConfig::default(),
            quadrature: QuadratureConfig::default(),
            gp_bounds: HyperBounds::default(),
            hyper_restarts: crate::gpmodel::RESTARTS,
            full_refit_every: 10,
            pair_next_fingerprint: false,
            epopt_rejection_start: 50,
            epopt_high_reward: None,
        }
    }
}

impl FpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.polgrad.validate()?;
        self.acquisition.validate()?;
        self.quadrature.validate()?;
        self.gp_bounds.validate()?;
        if self.hidden.contains(&0) {
            return Err(FpoError::InvalidConfig(
                "hidden layer sizes must be positive".into(),
            ));
        }
        if self.hyper_restarts == 0 || self.full_refit_every == 0 {
            return Err(FpoError::InvalidConfig(
                "hyper_restarts and full_refit_every must be positive".into(),
            ));
        }
        if let Method::EpOpt { epsilon } = self.method {
            if !(epsilon > 0.0 && epsilon <= 1.0) {
                return Err(FpoError::InvalidConfig("EPOpt ε must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Everything carried between iterations.
#[derive(Debug, Clone)]
pub struct FpoState {
    pub policy: GaussianMlp,
    /// Rows `((ψ_{i}, fingerprint(π_i), i), J(π_{i+1}))`; FPO only.
    pub gp_data: GpDataset<f64>,
    pub hypers: Option<GpHypers<f64>>,
    /// Completed policy updates.
    pub iteration: usize,
    /// Fingerprint of the current policy.
    pub last_fingerprint: Fingerprint<f64>,
    /// `ψ_0 … ψ_n`; the last entry drives the next batch.
    pub psi_history: Vec<PsiPoint<f64>>,
    /// `J(π_0) … J(π_n)`.
    pub j_history: Vec<f64>,
    pub streams: Streams,
}

/// What one iteration produced.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based index of the update; the policy after it is `π_iteration`.
    pub iteration: usize,
    /// ψ used for this iteration's batch.
    pub psi: Vec<f64>,
    pub j: f64,
    pub fingerprint: Fingerprint<f64>,
    pub kl: f64,
    pub accepted: bool,
    pub seconds: f64,
    /// θ of every trajectory in the batch, in collection order.
    pub batch_thetas: Vec<f64>,
    pub quadrature: Option<QuadratureResult<f64>>,
}
