//! Estimating `J(π) = E_θ[R(θ, π)]` under the true prior: exhaustive
//! summation when θ is discrete, adaptive Gauss–Kronrod quadrature when it is
//! continuous.
//!
//! Rollout noise is frozen within one quadrature call: every node replays the
//! same random stream, so the integrand is a deterministic function of θ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::{Environment, Theta, ThetaDistribution};
use crate::error::{FpoError, Result};
use crate::polgrad::run_episode_for;
use crate::policy::{Fingerprint, FingerprintAccumulator, FingerprintMode, GaussianMlp, Workspace};
use crate::rng::keyed_stream;
use crate::scalar::Scalar;

// 15-point Kronrod nodes on [-1, 1] (non-negative half, descending) and
// weights; the Gauss nodes are the odd-indexed Kronrod nodes plus zero.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod rule on `[a, b]`. Returns the estimate and
/// `|K15 − G7|`.
pub fn gk15<T, F>(mut f: F, a: T, b: T) -> Result<(T, T)>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    if !(a < b) {
        return Err(FpoError::Domain {
            value: b.as_f64() - a.as_f64(),
            domain: "interval width > 0",
        });
    }
    let half = T::of(0.5);
    let centre = (a + b) * half;
    let radius = (b - a) * half;
    let mut eval = |x: T| -> Result<T> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(FpoError::NonFinite("integrand"))
        }
    };

    let fc = eval(centre)?;
    let mut kronrod = fc * T::of(WGK[7]);
    let mut gauss = fc * T::of(WG[3]);
    for j in 0..7 {
        let dx = radius * T::of(XGK[j]);
        let pair = eval(centre - dx)? + eval(centre + dx)?;
        kronrod = kronrod + pair * T::of(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::of(WG[j / 2]);
        }
    }
    Ok((kronrod * radius, ((kronrod - gauss) * radius).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Rollouts averaged at each quadrature node.
    pub trajs_per_node: usize,
    /// Rollouts per support point when θ is discrete.
    pub trajs_per_theta: usize,
    /// Truncates evaluation episodes; `None` uses the environment horizon.
    pub eval_horizon: Option<usize>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            abs_tol: 1.0,
            max_subdivisions: 10,
            trajs_per_node: 4,
            trajs_per_theta: 8,
            eval_horizon: None,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(FpoError::InvalidConfig(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.trajs_per_node == 0 || self.trajs_per_theta == 0 || self.eval_horizon == Some(0) {
            return Err(FpoError::InvalidConfig(
                "rollout counts and eval_horizon must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult<T> {
    pub estimate: T,
    /// Sum of the per-interval error estimates.
    pub error: T,
    pub converged: bool,
    pub subdivisions: usize,
}

/// Globally adaptive GK15: repeatedly bisects the subinterval with the
/// largest error estimate until the summed error falls below
/// `max(abs_tol, rel_tol·|estimate|)` or `max_subdivisions` bisections have
/// been made. Hitting the limit is reported through `converged`, not as an
/// error.
pub fn integrate_adaptive<T, F>(
    mut f: F,
    a: T,
    b: T,
    rel_tol: T,
    abs_tol: T,
    max_subdivisions: usize,
) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let (est, err) = gk15(&mut f, a, b)?;
    let mut intervals = vec![(a, b, est, err)];
    let mut subdivisions = 0;
    loop {
        let estimate: T = intervals.iter().map(|i| i.2).sum();
        let error: T = intervals.iter().map(|i| i.3).sum();
        let tolerance = abs_tol.max(rel_tol * estimate.abs());
        let converged = error <= tolerance;
        if converged || subdivisions >= max_subdivisions {
            return Ok(QuadratureResult {
                estimate,
                error,
                converged,
                subdivisions,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .fold(0, |w, (k, i)| if i.3 > intervals[w].3 { k } else { w });
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = (lo + hi) * T::of(0.5);
        let (e1, r1) = gk15(&mut f, lo, mid)?;
        let (e2, r2) = gk15(&mut f, mid, hi)?;
        intervals.push((lo, mid, e1, r1));
        intervals.push((mid, hi, e2, r2));
        subdivisions += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn mean_return<E, R>(
    env: &E,
    policy: &GaussianMlp,
    theta: Theta,
    m: usize,
    horizon: usize,
    ws: &mut Workspace,
    rng: &mut R,
    mut fingerprint: Option<(&mut FingerprintAccumulator, FingerprintMode)>,
) -> f64
where
    E: Environment,
    R: Rng + ?Sized,
{
    let mut total = 0.0;
    for _ in 0..m {
        total += run_episode_for(env, policy, theta, horizon, ws, rng, |obs, action, _, _| {
            if let Some((acc, mode)) = fingerprint.as_mut() {
                match mode {
                    FingerprintMode::State => acc.push(obs),
                    FingerprintMode::Action => acc.push(action),
                }
            }
        });
    }
    total / m as f64
}

/// Mean undiscounted return of `m` episodes at fixed θ.
pub fn expected_return_at_theta<E, R>(
    env: &E,
    policy: &GaussianMlp,
    theta: Theta,
    m: usize,
    rng: &mut R,
) -> f64
where
    E: Environment,
    R: Rng + ?Sized,
{
    let mut ws = policy.workspace();
    mean_return(
        env,
        policy,
        theta,
        m.max(1),
        env.horizon(),
        &mut ws,
        rng,
        None,
    )
}

/// `Σ_l probs[l] · r(support[l])`.
pub fn j_exhaustive_with<F>(support: &[Theta], probs: &[f64], mut r: F) -> Result<f64>
where
    F: FnMut(Theta) -> f64,
{
    if support.len() != probs.len() {
        return Err(FpoError::DimensionMismatch {
            expected: support.len(),
            got: probs.len(),
        });
    }
    if support.is_empty() {
        return Err(FpoError::Empty("θ support"));
    }
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > 1e-12 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(FpoError::Domain {
            value: mass,
            domain: "probabilities summing to 1",
        });
    }
    Ok(support.iter().zip(probs).map(|(t, p)| p * r(*t)).sum())
}

/// Exhaustive `J(π)` with `m` episodes per support point.
pub fn j_exhaustive<E, R>(
    env: &E,
    policy: &GaussianMlp,
    support: &[Theta],
    probs: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<f64>
where
    E: Environment,
    R: Rng + ?Sized,
{
    j_exhaustive_with(support, probs, |t| {
        expected_return_at_theta(env, policy, t, m, rng)
    })
}

/// Adaptive quadrature of `prior_pdf(θ)·r(θ)` over `interval`.
pub fn j_quadrature_with<T, P, F>(
    mut prior_pdf: P,
    interval: (T, T),
    config: &QuadratureConfig,
    mut r: F,
) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    P: FnMut(T) -> T,
    F: FnMut(T) -> T,
{
    integrate_adaptive(
        |t| prior_pdf(t) * r(t),
        interval.0,
        interval.1,
        T::of(config.rel_tol),
        T::of(config.abs_tol),
        config.max_subdivisions,
    )
}

/// Quadrature `J(π)`. Every node replays the stream keyed by one draw from
/// `rng`, with `trajs_per_node` episodes per node.
pub fn j_quadrature<E, P, R>(
    env: &E,
    policy: &GaussianMlp,
    prior_pdf: P,
    interval: (f64, f64),
    config: &QuadratureConfig,
    rng: &mut R,
) -> Result<QuadratureResult<f64>>
where
    E: Environment,
    P: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let key: u64 = rng.random();
    let horizon = config.eval_horizon.unwrap_or(env.horizon());
    let mut ws = policy.workspace();
    j_quadrature_with(prior_pdf, interval, config, |t| {
        let mut node_rng = keyed_stream(key);
        mean_return(
            env,
            policy,
            Theta(t),
            config.trajs_per_node,
            horizon,
            &mut ws,
            &mut node_rng,
            None,
        )
    })
}

/// A `J(π)` estimate together with the fingerprint of the evaluation rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct JEstimate {
    pub value: f64,
    pub fingerprint: Fingerprint<f64>,
    /// Present when θ is continuous.
    pub quadrature: Option<QuadratureResult<f64>>,
}

/// Estimates `J(π)` under `prior`, choosing the rule by the kind of prior,
/// and fits the policy fingerprint to every evaluation step.
pub fn evaluate_policy<E, R>(
    env: &E,
    policy: &GaussianMlp,
    prior: &ThetaDistribution,
    config: &QuadratureConfig,
    mode: FingerprintMode,
    iteration: usize,
    rng: &mut R,
) -> Result<JEstimate>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let horizon = config.eval_horizon.unwrap_or(env.horizon());
    let dim = match mode {
        FingerprintMode::State => env.obs_dim(),
        FingerprintMode::Action => env.act_dim(),
    };
    let mut acc = FingerprintAccumulator::new(dim);
    let mut ws = policy.workspace();
    let (value, quadrature) = match prior {
        ThetaDistribution::Discrete(d) => {
            let m = config.trajs_per_theta;
            let value = j_exhaustive_with(d.support(), d.probs(), |t| {
                mean_return(
                    env,
                    policy,
                    t,
                    m,
                    horizon,
                    &mut ws,
                    rng,
                    Some((&mut acc, mode)),
                )
            })?;
            (value, None)
        }
        ThetaDistribution::Point(t) => {
            let m = config.trajs_per_theta;
            let value = mean_return(
                env,
                policy,
                *t,
                m,
                horizon,
                &mut ws,
                rng,
                Some((&mut acc, mode)),
            );
            (value, None)
        }
        ThetaDistribution::Beta(beta) => {
            let key: u64 = rng.random();
            let q = j_quadrature_with(
                |t: f64| beta.pdf(t).unwrap_or(0.0),
                (0.0, 1.0),
                config,
                |t| {
                    let mut node_rng = keyed_stream(key);
                    let fp = Some((&mut acc, mode));
                    mean_return(
                        env,
                        policy,
                        Theta(t),
                        config.trajs_per_node,
                        horizon,
                        &mut ws,
                        &mut node_rng,
                        fp,
                    )
                },
            )?;
            (q.estimate, Some(q))
        }
    };
    if !value.is_finite() {
        return Err(FpoError::NonFinite("J estimate"));
    }
    Ok(JEstimate {
        value,
        fingerprint: acc.finish(iteration)?,
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{
        BetaPrior, CliffWalker, CliffWalkerConfig, ToyVelocity, ToyVelocityConfig,
    };

    fn constant_policy(obs_dim: usize, mean: f64) -> GaussianMlp {
        let mut p = GaussianMlp::zeros(obs_dim, &[5, 5], 1);
        let mut params = p.params().to_vec();
        params[p.output_bias_offset()] = mean;
        p.set_params(&params);
        p.set_log_std(-10.0);
        p
    }

    #[test]
    fn gk15_is_exact_for_low_degree_polynomials() {
        for degree in 0..=22 {
            let (est, _) = gk15(|x: f64| x.powi(degree), 0.0, 1.0).unwrap();
            let exact = 1.0 / (degree as f64 + 1.0);
            assert!(
                (est - exact).abs() <= 1e-12,
                "degree {degree}: {est} vs {exact}"
            );
        }
        let (est, _) = gk15(|x: f64| 2.0 * x, 0.0, 1.0).unwrap();
        assert!((est - 1.0).abs() < 1e-15);
        let (est, _) = gk15(|x: f64| 2.0 * x * x, 0.0, 1.0).unwrap();
        assert!((est - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gk15_error_estimate_bounds_true_error() {
        let exact = 10f64.sin() / 10.0;
        let (est, err) = gk15(|x: f64| (10.0 * x).cos(), 0.0, 1.0).unwrap();
        assert!((est - exact).abs() < 1e-8);
        assert!(err >= (est - exact).abs());
    }

    #[test]
    fn gk15_rejects_bad_input() {
        assert!(gk15(|x: f64| x, 1.0, 0.0).is_err());
        assert!(gk15(|x: f64| 1.0 / (x - 0.5), 0.0, 1.0).is_err());
        assert!(gk15(|_: f64| f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn gk15_single_precision() {
        let (est, _) = gk15(|x: f32| 3.0 * x * x, 0.0f32, 1.0).unwrap();
        assert!((est - 1.0).abs() < 1e-6);
    }

    fn beta21(t: f64) -> f64 {
        BetaPrior::new(2.0, 1.0).unwrap().pdf(t).unwrap()
    }

    #[test]
    fn quadrature_of_forced_integrands() {
        let config = QuadratureConfig::default();
        let c = 123.4;
        let q = j_quadrature_with(beta21, (0.0, 1.0), &config, |_| c).unwrap();
        assert!((q.estimate - c).abs() < 1e-6);
        let q = j_quadrature_with(beta21, (0.0, 1.0), &config, |t| t).unwrap();
        assert!((q.estimate - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_of_step_function_matches_piecewise_oracle() {
        let config = QuadratureConfig::default();
        let step = |t: f64| if t < 0.3 { -5000.0 } else { 1.0 };
        // Beta(2, 1) has CDF θ², so P(θ < 0.3) = 0.09.
        let exact = -5000.0 * 0.09 + 1.0 * 0.91;
        let q = j_quadrature_with(beta21, (0.0, 1.0), &config, step).unwrap();
        assert!(
            (q.estimate - exact).abs() <= config.rel_tol * exact.abs(),
            "{q:?} vs {exact}"
        );
    }

    #[test]
    fn adaptive_reports_unconverged_at_limit() {
        let q = integrate_adaptive(
            |t: f64| if t < 0.3 { 1e6 } else { 0.0 },
            0.0,
            1.0,
            1e-14,
            1e-14,
            2,
        )
        .unwrap();
        assert!(!q.converged);
        assert_eq!(q.subdivisions, 2);
    }

    #[test]
    fn exhaustive_arithmetic() {
        let support = [Theta(0.0), Theta(1.0)];
        let forced = |t: Theta| if t.0 < 0.5 { 100.0 } else { 2000.0 };
        let j = j_exhaustive_with(&support, &[0.98, 0.02], forced).unwrap();
        assert!((j - 138.0).abs() < 1e-9);
        // Joint permutation leaves J unchanged.
        let j2 = j_exhaustive_with(&[Theta(1.0), Theta(0.0)], &[0.02, 0.98], forced).unwrap();
        assert!((j - j2).abs() < 1e-12);
        // Linear in the per-θ returns.
        let j3 = j_exhaustive_with(&support, &[0.98, 0.02], |t| 3.0 * forced(t) - 7.0).unwrap();
        assert!((j3 - (3.0 * j - 7.0)).abs() < 1e-9);
        assert!(j_exhaustive_with(&support, &[1.0], forced).is_err());
        assert!(j_exhaustive_with(&support, &[0.5, 0.4], forced).is_err());
    }

    #[test]
    fn exhaustive_single_point_equals_return_at_theta() {
        let env = ToyVelocity::new(ToyVelocityConfig::default()).unwrap();
        let policy = constant_policy(2, 0.5);
        let a = j_exhaustive(
            &env,
            &policy,
            &[Theta(0.0)],
            &[1.0],
            3,
            &mut keyed_stream(2),
        )
        .unwrap();
        let b = expected_return_at_theta(&env, &policy, Theta(0.0), 3, &mut keyed_stream(2));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_variance_rollouts() {
        let env = ToyVelocity::new(ToyVelocityConfig::default()).unwrap();
        let policy = constant_policy(2, 0.3);
        let one = expected_return_at_theta(&env, &policy, Theta(0.0), 1, &mut keyed_stream(3));
        let ten = expected_return_at_theta(&env, &policy, Theta(0.0), 10, &mut keyed_stream(4));
        assert!((one - ten).abs() < 1e-3);
    }

    #[test]
    fn stepping_left_on_the_cliff_loses() {
        let env = CliffWalker::new(CliffWalkerConfig::default()).unwrap();
        let policy = constant_policy(1, -1.0);
        for seed in 0..10 {
            let r = expected_return_at_theta(&env, &policy, Theta(0.5), 1, &mut keyed_stream(seed));
            assert!(r < 0.0);
        }
    }

    #[test]
    fn holding_the_target_velocity_earns_nothing() {
        let env = ToyVelocity::new(ToyVelocityConfig {
            target_low: 0.0,
            ..Default::default()
        })
        .unwrap();
        let policy = constant_policy(2, 0.0);
        let r = expected_return_at_theta(&env, &policy, Theta(0.0), 2, &mut keyed_stream(5));
        assert!(r.abs() < 1e-2, "{r}");
    }

    #[test]
    fn quadrature_estimate_is_reproducible_and_fingerprinted() {
        let env = CliffWalker::new(CliffWalkerConfig::default()).unwrap();
        let policy = constant_policy(1, 1.0);
        let prior = env.prior();
        let config = QuadratureConfig::default();
        let a = evaluate_policy(
            &env,
            &policy,
            &prior,
            &config,
            FingerprintMode::State,
            4,
            &mut keyed_stream(9),
        )
        .unwrap();
        let b = evaluate_policy(
            &env,
            &policy,
            &prior,
            &config,
            FingerprintMode::State,
            4,
            &mut keyed_stream(9),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint.iteration, 4);
        assert!(a.quadrature.is_some());
        // Always stepping right falls off for every θ: J is the fall plus the
        // states walked before it, i.e. well below zero.
        assert!(a.value < -4000.0, "{}", a.value);
        let act = evaluate_policy(
            &env,
            &policy,
            &prior,
            &config,
            FingerprintMode::Action,
            4,
            &mut keyed_stream(9),
        )
        .unwrap();
        assert!((act.fingerprint.mean[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn discrete_evaluation_uses_exhaustive_sum() {
        let env = ToyVelocity::new(ToyVelocityConfig::default()).unwrap();
        let policy = constant_policy(2, 0.3);
        let config = QuadratureConfig::default();
        let est = evaluate_policy(
            &env,
            &policy,
            &env.prior(),
            &config,
            FingerprintMode::State,
            0,
            &mut keyed_stream(1),
        )
        .unwrap();
        // Near-deterministic rollouts: each θ's mean equals a single episode.
        let r0 = expected_return_at_theta(&env, &policy, Theta(0.0), 1, &mut keyed_stream(0));
        let r1 = expected_return_at_theta(&env, &policy, Theta(1.0), 1, &mut keyed_stream(0));
        let expected = 0.98 * r0 + 0.02 * r1;
        assert!(
            (est.value - expected).abs() < 1e-2 * expected.abs().max(1.0),
            "{} vs {expected}",
            est.value
        );
        assert!(est.quadrature.is_none());
        assert_eq!(est.fingerprint.dim(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let bad = QuadratureConfig {
            trajs_per_node: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
