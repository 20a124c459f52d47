use super::{Advantages, Batch, PolGradConfig};
use crate::error::{FpoError, Result};
use crate::linalg::{axpy, dot};
use crate::policy::GaussianMlp;

/// Relative slack on the KL test so that a step landing exactly on the
/// boundary is not rejected by round-off.
const KL_SLACK: f64 = 1e-9;

/// `(1/N) Σ_t ∇log π(a_t|s_t) · A_t` over every step of the batch.
pub fn policy_gradient(policy: &GaussianMlp, batch: &Batch, advantages: &[f64]) -> Vec<f64> {
    let n = batch.num_steps();
    assert_eq!(advantages.len(), n, "one advantage per step");
    let mut grad = vec![0.0; policy.num_params()];
    if n == 0 {
        return grad;
    }
    let mut ws = policy.workspace();
    let w = 1.0 / n as f64;
    for ((obs, action), adv) in batch.steps().zip(advantages) {
        if *adv != 0.0 {
            policy.accumulate_grad_log_prob(obs, action, w * adv, &mut ws, &mut grad);
        }
    }
    grad
}

/// `F v + damping · v`, where `F` is the Hessian of the mean
/// `KL(π_old(·|s) ‖ π(·|s))` over the batch states, evaluated at `π = π_old`.
pub fn fisher_vector_product(
    policy: &GaussianMlp,
    batch: &Batch,
    v: &[f64],
    damping: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; policy.num_params()];
    let n = batch.num_steps();
    if n > 0 {
        let mut ws = policy.workspace();
        let w = 1.0 / n as f64;
        for (obs, _) in batch.steps() {
            policy.accumulate_mean_fisher_product(obs, v, w, &mut ws, &mut out);
        }
    }
    let ls = policy.log_std_offset();
    for i in ls..out.len() {
        out[i] += 2.0 * v[i];
    }
    axpy(damping, v, &mut out);
    out
}

/// Mean `KL(old ‖ new)` over the batch states.
pub fn mean_kl(old: &GaussianMlp, new: &GaussianMlp, batch: &Batch) -> f64 {
    let n = batch.num_steps();
    if n == 0 {
        return 0.0;
    }
    let (mut wo, mut wn) = (old.workspace(), new.workspace());
    batch
        .steps()
        .map(|(obs, _)| old.kl_to(new, obs, &mut wo, &mut wn))
        .sum::<f64>()
        / n as f64
}

/// Change in the importance-weighted surrogate
/// `(1/N) Σ_t π_new(a_t|s_t)/π_old(a_t|s_t) · A_t` relative to `π_old`.
pub fn surrogate_gain(
    old: &GaussianMlp,
    new: &GaussianMlp,
    batch: &Batch,
    advantages: &[f64],
) -> f64 {
    let n = batch.num_steps();
    if n == 0 {
        return 0.0;
    }
    let (mut wo, mut wn) = (old.workspace(), new.workspace());
    batch
        .steps()
        .zip(advantages)
        .map(|((obs, action), adv)| {
            let ratio = (new.log_prob_ws(obs, action, &mut wn)
                - old.log_prob_ws(obs, action, &mut wo))
            .exp();
            (ratio - 1.0) * adv
        })
        .sum::<f64>()
        / n as f64
}

/// Conjugate gradient for `A x = b` with `A` given as a product routine.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    iters: usize,
    residual_tol: f64,
) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr < residual_tol {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionStep {
    pub params: Vec<f64>,
    /// Natural-gradient direction `x ≈ F⁻¹ g` from conjugate gradient.
    pub direction: Vec<f64>,
    pub kl: f64,
    pub gain: f64,
    pub accepted: bool,
    pub backtracks: usize,
}

/// Trust-region line search around `params`.
///
/// Solves `F x = g` by conjugate gradient, scales `x` to the KL boundary
/// `√(2δ / xᵀFx)`, then halves (by `backtrack_ratio`) until the candidate's
/// KL is within `kl_limit` and its surrogate gain is non-negative. When every
/// candidate fails, the original parameters come back with `accepted = false`.
pub fn trust_region_search(
    params: &[f64],
    g: &[f64],
    fvp: impl Fn(&[f64]) -> Vec<f64>,
    kl: impl Fn(&[f64]) -> f64,
    gain: impl Fn(&[f64]) -> f64,
    config: &PolGradConfig,
) -> Result<TrustRegionStep> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(FpoError::NonFinite("policy gradient"));
    }
    let unchanged = |direction: Vec<f64>| TrustRegionStep {
        params: params.to_vec(),
        direction,
        kl: 0.0,
        gain: 0.0,
        accepted: false,
        backtracks: 0,
    };
    if g.iter().all(|v| *v == 0.0) {
        return Ok(unchanged(vec![0.0; g.len()]));
    }
    let x = conjugate_gradient(&fvp, g, config.cg_iters, 1e-10);
    let shs = dot(&x, &fvp(&x));
    if !(shs > 0.0) || !shs.is_finite() {
        return Ok(unchanged(x));
    }
    let scale = (2.0 * config.kl_limit / shs).sqrt();
    let limit = config.kl_limit * (1.0 + KL_SLACK);
    let mut frac = 1.0;
    for k in 0..config.max_backtracks {
        let candidate: Vec<f64> = params
            .iter()
            .zip(&x)
            .map(|(p, d)| p + frac * scale * d)
            .collect();
        let kl_value = kl(&candidate);
        let gain_value = gain(&candidate);
        if kl_value.is_finite() && kl_value <= limit && gain_value >= 0.0 {
            return Ok(TrustRegionStep {
                params: candidate,
                direction: x,
                kl: kl_value,
                gain: gain_value,
                accepted: true,
                backtracks: k,
            });
        }
        frac *= config.backtrack_ratio;
    }
    Ok(unchanged(x))
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub policy: GaussianMlp,
    pub kl: f64,
    pub gain: f64,
    pub accepted: bool,
    pub backtracks: usize,
}

/// One KL-constrained natural-gradient step of `policy` on `batch`.
pub fn kl_constrained_update(
    policy: &GaussianMlp,
    g: &[f64],
    batch: &Batch,
    advantages: &Advantages,
    config: &PolGradConfig,
) -> Result<UpdateOutcome> {
    let step = trust_region_search(
        policy.params(),
        g,
        |v| fisher_vector_product(policy, batch, v, config.cg_damping),
        |p| mean_kl(policy, &policy.with_params(p), batch),
        |p| {
            surrogate_gain(
                policy,
                &policy.with_params(p),
                batch,
                &advantages.advantages,
            )
        },
        config,
    )?;
    Ok(UpdateOutcome {
        policy: policy.with_params(&step.params),
        kl: step.kl,
        gain: step.gain,
        accepted: step.accepted,
        backtracks: step.backtracks,
    })
}
