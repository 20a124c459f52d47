//! Fingerprint policy optimisation (FPO).
//!
//! Policy-gradient training in environments whose dynamics depend on a hidden
//! environment variable θ. Each iteration a Gaussian process over
//! `(ψ, training iteration, policy fingerprint) → J` picks the parameters ψ of
//! the distribution `q_ψ(θ)` used to sample the next training batch, so that
//! significant rare events are seen often enough to shape the policy.
//!
//! Numerical building blocks that do not depend on rollouts (quadrature,
//! Gaussian-process regression, Hellinger kernels, acquisition) are generic
//! over [`Scalar`] (`f32` or `f64`). Everything that touches the simulator runs
//! in `f64`; the aliases at the crate root name the concrete types used by the
//! training loop.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod acquisition;
pub mod envsim;
pub mod error;
pub mod evalret;
pub mod fpocore;
pub mod gpmodel;
pub mod linalg;
pub mod polgrad;
pub mod policy;
pub mod rng;
pub mod scalar;

pub use error::{FpoError, Result};
pub use scalar::Scalar;

/// Policy fingerprint as consumed by the training loop.
pub type Fingerprint = policy::Fingerprint<f64>;
/// Single-precision fingerprint.
pub type Fingerprint32 = policy::Fingerprint<f32>;
pub type GpInput = gpmodel::GpInput<f64>;
pub type GpDataset = gpmodel::GpDataset<f64>;
pub type GpHypers = gpmodel::GpHypers<f64>;
pub type HyperBounds = gpmodel::HyperBounds<f64>;
pub type GaussianProcess = gpmodel::GaussianProcess<f64>;
pub type GaussianProcess32 = gpmodel::GaussianProcess<f32>;
pub type PsiPoint = acquisition::PsiPoint<f64>;
pub type PsiBounds = acquisition::PsiBounds<f64>;
pub type QuadratureResult = evalret::QuadratureResult<f64>;
