use std::path::{Path, PathBuf};

use fpo_core::acquisition::AcquisitionConfig;
use fpo_core::envsim::{CliffWalker, CliffWalkerConfig, ToyVelocity, ToyVelocityConfig};
use fpo_core::evalret::QuadratureConfig;
use fpo_core::fpocore::{FpoConfig, Method, Trainer};
use fpo_core::polgrad::PolGradConfig;
use fpo_core::HyperBounds;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentConfig {
    CliffWalker(CliffWalkerConfig),
    ToyVelocity(ToyVelocityConfig),
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self::CliffWalker(CliffWalkerConfig::default())
    }
}

impl EnvironmentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CliffWalker(_) => "cliff-walker",
            Self::ToyVelocity(_) => "toy-velocity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: vec![5, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub bounds: HyperBounds,
    pub hyper_restarts: usize,
    pub full_refit_every: usize,
    pub pair_next_fingerprint: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        let d = FpoConfig::default();
        Self {
            bounds: d.gp_bounds,
            hyper_restarts: d.hyper_restarts,
            full_refit_every: d.full_refit_every,
            pair_next_fingerprint: d.pair_next_fingerprint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpOptConfig {
    pub rejection_start: usize,
    pub high_reward: Option<bool>,
}

impl Default for EpOptConfig {
    fn default() -> Self {
        let d = FpoConfig::default();
        Self {
            rejection_start: d.epopt_rejection_start,
            high_reward: d.epopt_high_reward,
        }
    }
}

/// A complete experiment: one method on one environment over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// Run directories are created under this root.
    pub output_dir: PathBuf,
    /// Write measured seconds per iteration instead of zero. Histories are
    /// then no longer byte-identical across reruns.
    pub record_wall_time: bool,
    pub environment: EnvironmentConfig,
    pub policy: PolicyConfig,
    pub polgrad: PolGradConfig,
    pub acquisition: AcquisitionConfig,
    pub quadrature: QuadratureConfig,
    pub gp: GpConfig,
    pub epopt: EpOptConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            method: Method::Fpo(fpo_core::policy::FingerprintMode::State),
            iterations: 300,
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("runs"),
            record_wall_time: false,
            environment: EnvironmentConfig::default(),
            policy: PolicyConfig::default(),
            polgrad: PolGradConfig {
                batch_size: 2000,
                ..Default::default()
            },
            acquisition: AcquisitionConfig::default(),
            quadrature: QuadratureConfig::default(),
            gp: GpConfig::default(),
            epopt: EpOptConfig::default(),
        }
    }
}

/// An environment ready to train on.
pub enum Env {
    Cliff(CliffWalker),
    Toy(ToyVelocity),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    /// TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn fpo_config(&self) -> FpoConfig {
        FpoConfig {
            method: self.method.clone(),
            hidden: self.policy.hidden.clone(),
            polgrad: self.polgrad.clone(),
            acquisition: self.acquisition.clone(),
            quadrature: self.quadrature.clone(),
            gp_bounds: self.gp.bounds.clone(),
            hyper_restarts: self.gp.hyper_restarts,
            full_refit_every: self.gp.full_refit_every,
            pair_next_fingerprint: self.gp.pair_next_fingerprint,
            epopt_rejection_start: self.epopt.rejection_start,
            epopt_high_reward: self.epopt.high_reward,
        }
    }

    pub fn build_env(&self) -> Result<Env, Error> {
        Ok(match &self.environment {
            EnvironmentConfig::CliffWalker(c) => Env::Cliff(CliffWalker::new(c.clone())?),
            EnvironmentConfig::ToyVelocity(c) => Env::Toy(ToyVelocity::new(c.clone())?),
        })
    }

    /// Checks everything that can be checked without running, including
    /// method and environment compatibility.
    pub fn validate(&self) -> Result<(), Error> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config("name must be a non-empty file name".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let fpo = self.fpo_config();
        match self.build_env()? {
            Env::Cliff(e) => Trainer::new(e, fpo, self.iterations).map(|_| ())?,
            Env::Toy(e) => Trainer::new(e, fpo, self.iterations).map(|_| ())?,
        }
        Ok(())
    }
}
