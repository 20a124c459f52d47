//! Gaussian-process surrogate over `(ψ, training iteration, fingerprint) → J`.
//!
//! The covariance is one signal variance times three squared-exponential
//! factors: on ψ (per-dimension lengthscales), on the rescaled iteration
//! index, and on the Hellinger distance between fingerprints.

mod hypers;

pub use hypers::{
    fit_hypers, fit_hypers_with, log_marginal_likelihood, HyperBounds, HyperFit, MIN_FIT_POINTS,
    RESTARTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{FpoError, Result};
use crate::linalg::{dot, Cholesky};
use crate::policy::Fingerprint;
use crate::scalar::Scalar;

const JITTER_FIRST: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// Squared Hellinger distance between two diagonal Gaussians, in `[0, 1]`.
pub fn hellinger_sq<T: Scalar>(f1: &Fingerprint<T>, f2: &Fingerprint<T>) -> Result<T> {
    if f1.dim() != f2.dim() {
        return Err(FpoError::DimensionMismatch {
            expected: f1.dim(),
            got: f2.dim(),
        });
    }
    let two = T::of(2.0);
    let quarter = T::of(0.25);
    let mut coeff = T::one();
    let mut exponent = T::zero();
    for i in 0..f1.dim() {
        let (s1, s2) = (f1.std[i], f2.std[i]);
        let var_sum = s1 * s1 + s2 * s2;
        coeff = coeff * (two * s1 * s2 / var_sum).sqrt();
        let d = f1.mean[i] - f2.mean[i];
        exponent = exponent + d * d / var_sum;
    }
    let bc = coeff * (-quarter * exponent).exp();
    Ok((T::one() - bc).max(T::zero()).min(T::one()))
}

/// One GP input: ψ (in unit-box coordinates), the iteration index of the
/// policy, and its fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpInput<T> {
    pub psi: Vec<T>,
    pub iteration: usize,
    pub fingerprint: Fingerprint<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHypers<T> {
    pub signal_var: T,
    pub lengthscales_psi: Vec<T>,
    pub lengthscale_iter: T,
    pub lengthscale_fpr: T,
    pub noise_var: T,
}

impl<T: Scalar> GpHypers<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.signal_var,
            self.lengthscale_iter,
            self.lengthscale_fpr,
            self.noise_var,
        ];
        if all
            .iter()
            .chain(&self.lengthscales_psi)
            .any(|v| !(*v > T::zero()) || !v.is_finite())
        {
            return Err(FpoError::InvalidConfig(
                "GP hyperparameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Packs into `[ln σ², ln ℓ_ψ…, ln ℓ_n, ln ℓ_fp, ln σ²_noise]`.
    pub fn to_log_vec(&self) -> Vec<T> {
        let mut v = vec![self.signal_var.ln()];
        v.extend(self.lengthscales_psi.iter().map(|l| l.ln()));
        v.extend([
            self.lengthscale_iter.ln(),
            self.lengthscale_fpr.ln(),
            self.noise_var.ln(),
        ]);
        v
    }

    pub fn from_log_vec(v: &[T]) -> Self {
        let d = v.len() - 4;
        Self {
            signal_var: v[0].exp(),
            lengthscales_psi: v[1..1 + d].iter().map(|x| x.exp()).collect(),
            lengthscale_iter: v[1 + d].exp(),
            lengthscale_fpr: v[2 + d].exp(),
            noise_var: v[3 + d].exp(),
        }
    }
}

/// Product covariance between two inputs. `iter_scale` multiplies iteration
/// indices before differencing (typically `1 / N_total`).
pub fn kernel<T: Scalar>(x1: &GpInput<T>, x2: &GpInput<T>, h: &GpHypers<T>, iter_scale: T) -> T {
    let half = T::of(0.5);
    let mut r = T::zero();
    for ((a, b), l) in x1.psi.iter().zip(&x2.psi).zip(&h.lengthscales_psi) {
        let d = (*a - *b) / *l;
        r = r + d * d;
    }
    let dn =
        (T::of(x1.iteration as f64) - T::of(x2.iteration as f64)) * iter_scale / h.lengthscale_iter;
    r = r + dn * dn;
    let h2 = hellinger_sq(&x1.fingerprint, &x2.fingerprint).unwrap_or(T::one());
    r = r + h2 / (h.lengthscale_fpr * h.lengthscale_fpr);
    h.signal_var * (-half * r).exp()
}

/// Observed `((ψ, π), J)` rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GpDataset<T> {
    pub inputs: Vec<GpInput<T>>,
    pub outputs: Vec<T>,
}

impl<T: Scalar> GpDataset<T> {
    pub fn new() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn push(&mut self, input: GpInput<T>, output: T) -> Result<()> {
        if !output.is_finite() {
            return Err(FpoError::NonFinite("GP output"));
        }
        if let Some(first) = self.inputs.first() {
            if first.psi.len() != input.psi.len() {
                return Err(FpoError::DimensionMismatch {
                    expected: first.psi.len(),
                    got: input.psi.len(),
                });
            }
        }
        self.inputs.push(input);
        self.outputs.push(output);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Output mean and (population) standard deviation; the scale falls back
    /// to 1 when the outputs are constant.
    pub fn normalisation(&self) -> (T, T) {
        let n = T::of(self.len().max(1) as f64);
        let mean = self.outputs.iter().copied().sum::<T>() / n;
        let var = self
            .outputs
            .iter()
            .map(|y| (*y - mean) * (*y - mean))
            .sum::<T>()
            / n;
        let std = var.sqrt();
        let scale = if std > T::of(1e-12) * mean.abs().max(T::one()) {
            std
        } else {
            T::one()
        };
        (mean, scale)
    }

    pub fn normalised_outputs(&self) -> Vec<T> {
        let (mean, std) = self.normalisation();
        self.outputs.iter().map(|y| (*y - mean) / std).collect()
    }
}

/// Pairwise input distances, reused across hyperparameter evaluations.
#[derive(Debug, Clone)]
pub struct DistanceCache<T> {
    n: usize,
    /// Per ψ dimension, squared differences (row-major `n × n`).
    psi_sq: Vec<Vec<T>>,
    iter_sq: Vec<T>,
    hellinger_sq: Vec<T>,
}

impl<T: Scalar> DistanceCache<T> {
    pub fn new(inputs: &[GpInput<T>], iter_scale: T) -> Self {
        let n = inputs.len();
        let dims = inputs.first().map_or(0, |x| x.psi.len());
        let mut psi_sq = vec![vec![T::zero(); n * n]; dims];
        let mut iter_sq = vec![T::zero(); n * n];
        let mut hell = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (&inputs[i], &inputs[j]);
                for d in 0..dims {
                    let v = (a.psi[d] - b.psi[d]) * (a.psi[d] - b.psi[d]);
                    psi_sq[d][i * n + j] = v;
                    psi_sq[d][j * n + i] = v;
                }
                let dn = (T::of(a.iteration as f64) - T::of(b.iteration as f64)) * iter_scale;
                iter_sq[i * n + j] = dn * dn;
                iter_sq[j * n + i] = dn * dn;
                let h = hellinger_sq(&a.fingerprint, &b.fingerprint).unwrap_or(T::one());
                hell[i * n + j] = h;
                hell[j * n + i] = h;
            }
        }
        Self {
            n,
            psi_sq,
            iter_sq,
            hellinger_sq: hell,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `K + σ²_noise I`.
    pub fn gram(&self, h: &GpHypers<T>) -> Vec<T> {
        let n = self.n;
        let half = T::of(0.5);
        let inv_psi: Vec<T> = h
            .lengthscales_psi
            .iter()
            .map(|l| T::one() / (*l * *l))
            .collect();
        let inv_iter = T::one() / (h.lengthscale_iter * h.lengthscale_iter);
        let inv_fpr = T::one() / (h.lengthscale_fpr * h.lengthscale_fpr);
        let mut k = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..i {
                let idx = i * n + j;
                let mut r = self.iter_sq[idx] * inv_iter + self.hellinger_sq[idx] * inv_fpr;
                for (d, w) in inv_psi.iter().enumerate() {
                    r = r + self.psi_sq[d][idx] * *w;
                }
                let v = h.signal_var * (-half * r).exp();
                k[idx] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = h.signal_var + h.noise_var;
        }
        k
    }
}

/// Factored GP posterior on standardised outputs.
#[derive(Debug, Clone)]
pub struct GaussianProcess<T> {
    inputs: Vec<GpInput<T>>,
    hypers: GpHypers<T>,
    iter_scale: T,
    chol: Cholesky<T>,
    alpha: Vec<T>,
    y_mean: T,
    y_std: T,
    jitter: T,
}

impl<T: Scalar> GaussianProcess<T> {
    pub fn fit(data: &GpDataset<T>, hypers: &GpHypers<T>, iter_scale: T) -> Result<Self> {
        let cache = DistanceCache::new(&data.inputs, iter_scale);
        Self::fit_cached(data, &cache, hypers, iter_scale)
    }

    pub fn fit_cached(
        data: &GpDataset<T>,
        cache: &DistanceCache<T>,
        hypers: &GpHypers<T>,
        iter_scale: T,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(FpoError::Empty("GP dataset"));
        }
        hypers.validate()?;
        let n = data.len();
        let gram = cache.gram(hypers);
        let (chol, jitter) =
            Cholesky::factor_with_jitter(&gram, n, T::of(JITTER_FIRST), T::of(JITTER_MAX))?;
        let (y_mean, y_std) = data.normalisation();
        let y: Vec<T> = data.outputs.iter().map(|v| (*v - y_mean) / y_std).collect();
        let alpha = chol.solve(&y);
        Ok(Self {
            inputs: data.inputs.clone(),
            hypers: hypers.clone(),
            iter_scale,
            chol,
            alpha,
            y_mean,
            y_std,
            jitter,
        })
    }

    pub fn hypers(&self) -> &GpHypers<T> {
        &self.hypers
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Jitter that had to be added to the diagonal to factor the Gram matrix.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn output_normalisation(&self) -> (T, T) {
        (self.y_mean, self.y_std)
    }

    fn predict_from_kvec(&self, kq: &[T], prior_var: T) -> Result<(T, T)> {
        let mu_n = dot(kq, &self.alpha);
        let v = self.chol.solve_lower(kq);
        let mut var_n = prior_var - dot(&v, &v);
        let tol = T::of(1e-8).max(T::epsilon() * T::of(64.0) * self.hypers.signal_var);
        if var_n < T::zero() {
            if var_n >= -tol {
                var_n = T::zero();
            } else {
                return Err(FpoError::NegativeVariance(var_n.as_f64()));
            }
        }
        Ok((
            self.y_mean + self.y_std * mu_n,
            var_n * self.y_std * self.y_std,
        ))
    }

    /// Posterior mean and variance of the latent J at `query`, in output units.
    pub fn predict(&self, query: &GpInput<T>) -> Result<(T, T)> {
        let kq: Vec<T> = self
            .inputs
            .iter()
            .map(|x| kernel(query, x, &self.hypers, self.iter_scale))
            .collect();
        self.predict_from_kvec(&kq, self.hypers.signal_var)
    }

    /// Fixes the iteration and fingerprint part of the query so that many ψ
    /// can be scored cheaply.
    pub fn with_context(
        &self,
        iteration: usize,
        fingerprint: &Fingerprint<T>,
    ) -> ContextPredictor<'_, T> {
        let half = T::of(0.5);
        let inv_iter = T::one() / (self.hypers.lengthscale_iter * self.hypers.lengthscale_iter);
        let inv_fpr = T::one() / (self.hypers.lengthscale_fpr * self.hypers.lengthscale_fpr);
        let context_factor = self
            .inputs
            .iter()
            .map(|x| {
                let dn = (T::of(iteration as f64) - T::of(x.iteration as f64)) * self.iter_scale;
                let h2 = hellinger_sq(fingerprint, &x.fingerprint).unwrap_or(T::one());
                self.hypers.signal_var * (-half * (dn * dn * inv_iter + h2 * inv_fpr)).exp()
            })
            .collect();
        ContextPredictor {
            gp: self,
            context_factor,
        }
    }
}

/// GP predictions at varying ψ for a fixed `(iteration, fingerprint)`.
#[derive(Debug, Clone)]
pub struct ContextPredictor<'a, T> {
    gp: &'a GaussianProcess<T>,
    context_factor: Vec<T>,
}

impl<T: Scalar> ContextPredictor<'_, T> {
    pub fn predict(&self, psi: &[T]) -> Result<(T, T)> {
        let half = T::of(0.5);
        let ls = &self.gp.hypers.lengthscales_psi;
        let kq: Vec<T> = self
            .gp
            .inputs
            .iter()
            .zip(&self.context_factor)
            .map(|(x, c)| {
                let mut r = T::zero();
                for ((a, b), l) in psi.iter().zip(&x.psi).zip(ls) {
                    let d = (*a - *b) / *l;
                    r = r + d * d;
                }
                *c * (-half * r).exp()
            })
            .collect();
        self.gp.predict_from_kvec(&kq, self.gp.hypers.signal_var)
    }
}

#[cfg(test)]
mod tests;
