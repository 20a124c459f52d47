use std::time::Instant;

use super::{FpoConfig, FpoState, IterationRecord, Method, PsiMapping, PsiSelector, UcbSelector};
use crate::acquisition::PsiPoint;
use crate::envsim::{Environment, ThetaDistribution};
use crate::error::{FpoError, Result};
use crate::evalret::{evaluate_policy, JEstimate};
use crate::gpmodel::{fit_hypers_with, GaussianProcess, GpInput, MIN_FIT_POINTS};
use crate::linalg::axpy;
use crate::polgrad::{
    collect_batch, compute_advantages, discounted_returns, kl_constrained_update, policy_gradient,
    Advantages, Batch, PolGradConfig, UpdateOutcome, ValueBaseline,
};
use crate::policy::GaussianMlp;
use crate::rng::Streams;

/// Fits the baseline to `batch`, then computes advantages on it.
fn advantages_for(batch: &Batch, horizon: usize, config: &PolGradConfig) -> Result<Advantages> {
    let returns: Vec<f64> = batch
        .trajectories
        .iter()
        .flat_map(|t| discounted_returns(t.rewards(), config.gamma))
        .collect();
    let baseline = ValueBaseline::fit(batch, &returns, horizon, config.baseline_ridge)?;
    Ok(compute_advantages(
        batch,
        &baseline,
        config.gamma,
        config.gae_lambda,
        config.normalise_advantages,
    ))
}

/// One policy update on a single batch: baseline, advantages, gradient and
/// KL-constrained step.
pub fn update_on_batch(
    policy: &GaussianMlp,
    batch: &Batch,
    horizon: usize,
    config: &PolGradConfig,
) -> Result<UpdateOutcome> {
    let adv = advantages_for(batch, horizon, config)?;
    let g = policy_gradient(policy, batch, &adv.advantages);
    kl_constrained_update(policy, &g, batch, &adv, config)
}

/// `Σ_l p_l · g_l`, where `g_l` is the mean score-weighted advantage over
/// sub-batch `l` and `advantages` covers the sub-batches back to back.
pub fn enum_gradient(
    policy: &GaussianMlp,
    sub_batches: &[(f64, Batch)],
    advantages: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; policy.num_params()];
    let mut offset = 0;
    for (p, batch) in sub_batches {
        let n = batch.num_steps();
        let g_l = policy_gradient(policy, batch, &advantages[offset..offset + n]);
        axpy(*p, &g_l, &mut g);
        offset += n;
    }
    g
}

/// Keeps the `⌈ε·n⌉` lowest-return trajectories (highest with `keep_high`),
/// in their original order. At least one trajectory is always kept.
pub fn epopt_filter(batch: Batch, epsilon: f64, keep_high: bool) -> Batch {
    let n = batch.trajectories.len();
    if n == 0 {
        return batch;
    }
    let keep = ((epsilon * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    if keep == n {
        return batch;
    }
    let returns: Vec<f64> = batch
        .trajectories
        .iter()
        .map(|t| t.total_return())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let c = returns[a].total_cmp(&returns[b]);
        if keep_high {
            c.reverse()
        } else {
            c
        }
    });
    let mut kept = vec![false; n];
    for &i in &order[..keep] {
        kept[i] = true;
    }
    Batch::new(
        batch
            .trajectories
            .into_iter()
            .zip(kept)
            .filter_map(|(t, k)| k.then_some(t))
            .collect(),
    )
}

/// Runs one method on one environment.
pub struct Trainer<E> {
    env: E,
    config: FpoConfig,
    prior: ThetaDistribution,
    mapping: Option<PsiMapping>,
    selector: Box<dyn PsiSelector>,
    iter_scale: f64,
}

impl<E: Environment> Trainer<E> {
    /// `iterations` sets the scale of the iteration input to the GP.
    pub fn new(env: E, config: FpoConfig, iterations: usize) -> Result<Self> {
        config.validate()?;
        let prior = env.prior();
        let mapping = PsiMapping::for_prior(&prior).ok();
        match &config.method {
            Method::Enum if !matches!(prior, ThetaDistribution::Discrete(_)) => {
                return Err(FpoError::InvalidConfig(
                    "enum needs a discrete θ prior".into(),
                ))
            }
            Method::Fpo(_) | Method::Random | Method::Fixed(_) if mapping.is_none() => {
                return Err(FpoError::InvalidConfig(
                    "this method needs a Beta or two-point θ prior".into(),
                ))
            }
            Method::Fixed(x) => {
                let psi = PsiPoint::new(x.clone());
                let bounds = mapping.as_ref().expect("checked above").bounds();
                if !bounds.contains(&psi) {
                    return Err(FpoError::InvalidConfig(format!(
                        "fixed ψ {x:?} outside bounds {:?}..{:?}",
                        bounds.lo, bounds.hi
                    )));
                }
            }
            _ => {}
        }
        let selector = Box::new(UcbSelector(config.acquisition.clone()));
        Ok(Self {
            env,
            config,
            prior,
            mapping,
            selector,
            iter_scale: 1.0 / iterations.max(1) as f64,
        })
    }

    /// Replaces the UCB acquisition used by FPO.
    pub fn with_selector(mut self, selector: impl PsiSelector + 'static) -> Self {
        self.selector = Box::new(selector);
        self
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn config(&self) -> &FpoConfig {
        &self.config
    }

    pub fn mapping(&self) -> Option<&PsiMapping> {
        self.mapping.as_ref()
    }

    fn evaluate(
        &self,
        policy: &GaussianMlp,
        iteration: usize,
        streams: &mut Streams,
    ) -> Result<JEstimate> {
        evaluate_policy(
            &self.env,
            policy,
            &self.prior,
            &self.config.quadrature,
            self.config.method.fingerprint_mode(),
            iteration,
            &mut streams.evaluation,
        )
    }

    fn prior_psi(&self) -> PsiPoint<f64> {
        match &self.mapping {
            Some(m) => m
                .prior_psi(&self.prior)
                .unwrap_or_else(|_| PsiPoint::new(Vec::new())),
            None => PsiPoint::new(Vec::new()),
        }
    }

    /// Draws π₀, evaluates it and picks ψ₀.
    pub fn init(&mut self, seed: u64) -> Result<FpoState> {
        let mut streams = Streams::new(seed);
        let policy = GaussianMlp::new(
            self.env.obs_dim(),
            &self.config.hidden,
            self.env.act_dim(),
            &mut streams.init,
        );
        let eval = self.evaluate(&policy, 0, &mut streams)?;
        let psi0 = match &self.config.method {
            Method::Fpo(_) => {
                let bounds = self.mapping.as_ref().expect("validated").bounds().clone();
                self.selector.select(
                    None,
                    &eval.fingerprint,
                    0,
                    &bounds,
                    &mut streams.acquisition,
                )?
            }
            Method::Random => self
                .mapping
                .as_ref()
                .expect("validated")
                .bounds()
                .sample_uniform(&mut streams.acquisition),
            Method::Fixed(x) => PsiPoint::new(x.clone()),
            Method::Naive | Method::Enum | Method::EpOpt { .. } => self.prior_psi(),
        };
        Ok(FpoState {
            policy,
            gp_data: Default::default(),
            hypers: None,
            iteration: 0,
            last_fingerprint: eval.fingerprint,
            psi_history: vec![psi0],
            j_history: vec![eval.value],
            streams,
        })
    }

    fn sampling_distribution(&self, psi: &PsiPoint<f64>) -> Result<ThetaDistribution> {
        match &self.config.method {
            Method::Fpo(_) | Method::Random | Method::Fixed(_) => {
                self.mapping.as_ref().expect("validated").distribution(psi)
            }
            _ => Ok(self.prior.clone()),
        }
    }

    fn enum_update(&self, state: &mut FpoState) -> Result<(UpdateOutcome, Vec<f64>)> {
        let ThetaDistribution::Discrete(d) = &self.prior else {
            unreachable!("validated in Trainer::new")
        };
        let per_theta = (self.config.polgrad.batch_size / d.support().len()).max(1);
        let mut subs = Vec::with_capacity(d.support().len());
        for (theta, p) in d.support().iter().zip(d.probs()) {
            if *p > 0.0 {
                let point = ThetaDistribution::Point(*theta);
                let b = collect_batch(
                    &self.env,
                    &state.policy,
                    &point,
                    per_theta,
                    &mut state.streams.collection,
                );
                subs.push((*p, b));
            }
        }
        let mut combined = Batch::default();
        for (_, b) in &subs {
            combined.trajectories.extend(b.trajectories.iter().cloned());
        }
        let thetas = combined.trajectories.iter().map(|t| t.theta.0).collect();
        let adv = advantages_for(&combined, self.env.horizon(), &self.config.polgrad)?;
        let g = enum_gradient(&state.policy, &subs, &adv.advantages);
        let outcome =
            kl_constrained_update(&state.policy, &g, &combined, &adv, &self.config.polgrad)?;
        Ok((outcome, thetas))
    }

    fn next_psi(&mut self, state: &mut FpoState, eval: &JEstimate) -> Result<PsiPoint<f64>> {
        let n = state.iteration + 1;
        let current = state.psi_history.last().expect("ψ₀ set in init").clone();
        match &self.config.method {
            Method::Fpo(_) => {
                let bounds = self.mapping.as_ref().expect("validated").bounds().clone();
                let fingerprint = if self.config.pair_next_fingerprint {
                    eval.fingerprint.clone()
                } else {
                    state.last_fingerprint.clone()
                };
                state.gp_data.push(
                    GpInput {
                        psi: bounds.to_unit(&current),
                        iteration: fingerprint.iteration,
                        fingerprint,
                    },
                    eval.value,
                )?;
                let gp = if state.gp_data.len() >= MIN_FIT_POINTS {
                    let rows = state.gp_data.len();
                    let every = self.config.full_refit_every;
                    let restarts = if rows <= every || rows.is_multiple_of(every) {
                        self.config.hyper_restarts
                    } else {
                        1
                    };
                    let fit = fit_hypers_with(
                        &state.gp_data,
                        &self.config.gp_bounds,
                        self.iter_scale,
                        state.hypers.as_ref(),
                        restarts,
                        &mut state.streams.hypers,
                    );
                    let gp = GaussianProcess::fit(&state.gp_data, &fit.hypers, self.iter_scale)?;
                    state.hypers = Some(fit.hypers);
                    Some(gp)
                } else {
                    None
                };
                self.selector.select(
                    gp.as_ref(),
                    &eval.fingerprint,
                    n,
                    &bounds,
                    &mut state.streams.acquisition,
                )
            }
            Method::Random => Ok(self
                .mapping
                .as_ref()
                .expect("validated")
                .bounds()
                .sample_uniform(&mut state.streams.acquisition)),
            _ => Ok(current),
        }
    }

    /// One iteration: collect under `q_{ψ_{n−1}}`, update, evaluate `J(π_n)`
    /// and its fingerprint, record the GP row and choose `ψ_n`.
    pub fn step(&mut self, state: &mut FpoState) -> Result<IterationRecord> {
        let start = Instant::now();
        let psi = state.psi_history.last().expect("ψ₀ set in init").clone();
        let (outcome, batch_thetas) = match &self.config.method {
            Method::Enum => self.enum_update(state)?,
            method => {
                let q = self.sampling_distribution(&psi)?;
                let mut batch = collect_batch(
                    &self.env,
                    &state.policy,
                    &q,
                    self.config.polgrad.batch_size,
                    &mut state.streams.collection,
                );
                let thetas = batch.trajectories.iter().map(|t| t.theta.0).collect();
                if let Method::EpOpt { epsilon } = method {
                    if state.iteration >= self.config.epopt_rejection_start {
                        let keep_high = self
                            .config
                            .epopt_high_reward
                            .unwrap_or(!self.env.rare_events_are_negative());
                        batch = epopt_filter(batch, *epsilon, keep_high);
                    }
                }
                let outcome = update_on_batch(
                    &state.policy,
                    &batch,
                    self.env.horizon(),
                    &self.config.polgrad,
                )?;
                (outcome, thetas)
            }
        };
        let n = state.iteration + 1;
        let eval = self.evaluate(&outcome.policy, n, &mut state.streams)?;
        let next = self.next_psi(state, &eval)?;

        state.policy = outcome.policy;
        state.iteration = n;
        state.last_fingerprint = eval.fingerprint.clone();
        state.psi_history.push(next);
        state.j_history.push(eval.value);
        Ok(IterationRecord {
            iteration: n,
            psi: psi.values,
            j: eval.value,
            fingerprint: eval.fingerprint,
            kl: outcome.kl,
            accepted: outcome.accepted,
            seconds: start.elapsed().as_secs_f64(),
            batch_thetas,
            quadrature: eval.quadrature,
        })
    }

    /// `init` followed by `iterations` steps, handing each record to `on_record`.
    pub fn run(
        &mut self,
        seed: u64,
        iterations: usize,
        mut on_record: impl FnMut(&IterationRecord),
    ) -> Result<FpoState> {
        let mut state = self.init(seed)?;
        for _ in 0..iterations {
            let record = self.step(&mut state)?;
            on_record(&record);
        }
        Ok(state)
    }
}
