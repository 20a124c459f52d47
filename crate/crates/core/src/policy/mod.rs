//! Gaussian MLP policy and policy fingerprints.

mod fingerprint;
mod mlp;

pub use fingerprint::{
    fit_fingerprint, Fingerprint, FingerprintAccumulator, FingerprintMode, STD_FLOOR,
};
pub use mlp::{
    diag_gaussian_kl, gaussian_log_density, GaussianMlp, Workspace, LOG_STD_MAX, LOG_STD_MIN,
};
