use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Gaussian policy: a tanh multi-layer perceptron produces the action mean,
/// and a learnable state-independent vector holds the log standard deviation.
///
/// Parameters live in one flat vector. Layout, layer by layer from the input:
/// the `out × in` weight matrix in row-major order followed by the `out`
/// biases; the `act_dim` log standard deviations come last.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    layer_offsets: Vec<usize>,
    log_std_offset: usize,
}

/// Scratch buffers for a forward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    tangents: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl GaussianMlp {
    /// Weights are uniform on `±1/√fan_in`, biases and log-std start at zero.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut policy = Self::zeros(obs_dim, hidden, act_dim);
        for l in 0..policy.num_layers() {
            let (fan_in, fan_out) = (policy.sizes[l], policy.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = policy.layer_offsets[l];
            for p in &mut policy.params[w..w + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
        }
        policy
    }

    /// All-zero network with unit action noise.
    pub fn zeros(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        let mut layer_offsets = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for w in sizes.windows(2) {
            layer_offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        Self {
            params: vec![0.0; offset + act_dim],
            sizes,
            layer_offsets,
            log_std_offset: offset,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn act_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the flat parameter vector; log-std entries are clamped to
    /// `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len(), "parameter length");
        self.params.copy_from_slice(params);
        for s in &mut self.params[self.log_std_offset..] {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        let mut p = self.clone();
        p.set_params(params);
        p
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_offset..]
    }

    pub fn set_log_std(&mut self, value: f64) {
        for s in &mut self.params[self.log_std_offset..] {
            *s = value.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Offset of the output-layer biases in the flat vector.
    pub fn output_bias_offset(&self) -> usize {
        let l = self.num_layers() - 1;
        self.layer_offsets[l] + self.sizes[l] * self.sizes[l + 1]
    }

    pub fn log_std_offset(&self) -> usize {
        self.log_std_offset
    }

    pub fn workspace(&self) -> Workspace {
        let width = *self.sizes.iter().max().unwrap();
        Workspace {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            tangents: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; width],
            delta_prev: vec![0.0; width],
        }
    }

    /// Forward pass; the mean is left in the workspace and returned.
    pub fn forward<'w>(&self, obs: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(obs.len(), self.obs_dim());
        ws.acts[0].copy_from_slice(obs);
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[self.layer_offsets[l]..self.layer_offsets[l] + n_in * n_out];
            let b = &self.params[self.layer_offsets[l] + n_in * n_out..][..n_out];
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let (input, output) = (&head[l], &mut tail[0]);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                output[o] = if l < last { z.tanh() } else { z };
            }
        }
        &ws.acts[last + 1]
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(obs, &mut ws).to_vec()
    }

    /// Samples `mean(obs) + exp(log_std) ⊙ ε` into `action`.
    pub fn act_into<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        ws: &mut Workspace,
        rng: &mut R,
        action: &mut [f64],
    ) {
        let mean = self.forward(obs, ws);
        for ((a, m), ls) in action.iter_mut().zip(mean).zip(self.log_std()) {
            let eps: f64 = rng.sample(StandardNormal);
            *a = m + ls.exp() * eps;
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        let mut ws = self.workspace();
        let mut action = vec![0.0; self.act_dim()];
        self.act_into(obs, &mut ws, rng, &mut action);
        action
    }

    pub fn log_prob_ws(&self, obs: &[f64], action: &[f64], ws: &mut Workspace) -> f64 {
        let mean = self.forward(obs, ws);
        gaussian_log_density(action, mean, self.log_std())
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        self.log_prob_ws(obs, action, &mut self.workspace())
    }

    /// Adds `weight · ∇ log π(action | obs)` into `grad`.
    pub fn accumulate_grad_log_prob(
        &self,
        obs: &[f64],
        action: &[f64],
        weight: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) {
        self.forward(obs, ws);
        let act_dim = self.act_dim();
        let last = self.num_layers();
        for i in 0..act_dim {
            let log_std = self.params[self.log_std_offset + i];
            let inv_var = (-2.0 * log_std).exp();
            let diff = action[i] - ws.acts[last][i];
            ws.delta[i] = diff * inv_var;
            grad[self.log_std_offset + i] += weight * (diff * diff * inv_var - 1.0);
        }
        self.backprop_delta(weight, ws, grad);
    }

    pub fn grad_log_prob(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.num_params()];
        self.accumulate_grad_log_prob(obs, action, 1.0, &mut self.workspace(), &mut grad);
        grad
    }

    /// Pulls the output cotangent stored in `ws.delta` back through the
    /// network (whose activations must be in `ws`), adding `weight ×` the
    /// result into the weight/bias part of `grad`.
    fn backprop_delta(&self, weight: f64, ws: &mut Workspace, grad: &mut [f64]) {
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w_off = self.layer_offsets[l];
            let b_off = w_off + n_in * n_out;
            let input = &ws.acts[l];
            for o in 0..n_out {
                let d = weight * ws.delta[o];
                grad[b_off + o] += d;
                let g_row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, x) in g_row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let w = &self.params[w_off..b_off];
                for i in 0..n_in {
                    let mut s = 0.0;
                    for o in 0..n_out {
                        s += w[o * n_in + i] * ws.delta[o];
                    }
                    let a = input[i];
                    ws.delta_prev[i] = s * (1.0 - a * a);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }

    /// Directional derivative of the mean along parameter direction `v`.
    /// Requires a preceding [`forward`](Self::forward) on the same workspace.
    fn mean_tangent<'w>(&self, v: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        let last = self.num_layers() - 1;
        for t in &mut ws.tangents[0] {
            *t = 0.0;
        }
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w_off = self.layer_offsets[l];
            let b_off = w_off + n_in * n_out;
            let w = &self.params[w_off..b_off];
            let dw = &v[w_off..b_off];
            let (head, tail) = ws.tangents.split_at_mut(l + 1);
            let (t_in, t_out) = (&head[l], &mut tail[0]);
            let a_in = &ws.acts[l];
            for o in 0..n_out {
                let mut dz = v[b_off + o];
                for i in 0..n_in {
                    dz += dw[o * n_in + i] * a_in[i] + w[o * n_in + i] * t_in[i];
                }
                t_out[o] = if l < last {
                    let a = ws.acts[l + 1][o];
                    (1.0 - a * a) * dz
                } else {
                    dz
                };
            }
        }
        &ws.tangents[last + 1]
    }

    /// Jacobian-vector product of the action mean at `obs`.
    pub fn jvp_mean(&self, obs: &[f64], v: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(obs, &mut ws);
        self.mean_tangent(v, &mut ws).to_vec()
    }

    /// Adds `weight · Jᵀ diag(σ⁻²) J v` at `obs` into `out`, where `J` is the
    /// Jacobian of the mean. This is the mean part of the Gaussian-policy
    /// Fisher matrix; the log-std part is `2 I` and is handled by the caller.
    pub fn accumulate_mean_fisher_product(
        &self,
        obs: &[f64],
        v: &[f64],
        weight: f64,
        ws: &mut Workspace,
        out: &mut [f64],
    ) {
        self.forward(obs, ws);
        let act_dim = self.act_dim();
        self.mean_tangent(v, ws);
        let last = self.num_layers();
        for i in 0..act_dim {
            let inv_var = (-2.0 * self.params[self.log_std_offset + i]).exp();
            ws.delta[i] = ws.tangents[last][i] * inv_var;
        }
        self.backprop_delta(weight, ws, out);
    }

    /// KL(self(·|obs) ‖ other(·|obs)).
    pub fn kl_to(
        &self,
        other: &Self,
        obs: &[f64],
        ws_self: &mut Workspace,
        ws_other: &mut Workspace,
    ) -> f64 {
        let m1 = self.forward(obs, ws_self);
        let m2 = other.forward(obs, ws_other);
        diag_gaussian_kl(m1, self.log_std(), m2, other.log_std())
    }
}

pub fn gaussian_log_density(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - half_log_2pi
        })
        .sum()
}

/// KL(N(m1, e^{2 ls1}) ‖ N(m2, e^{2 ls2})) for diagonal Gaussians.
pub fn diag_gaussian_kl(m1: &[f64], ls1: &[f64], m2: &[f64], ls2: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..m1.len() {
        let var1 = (2.0 * ls1[i]).exp();
        let var2 = (2.0 * ls2[i]).exp();
        let d = m1[i] - m2[i];
        kl += ls2[i] - ls1[i] + (var1 + d * d) / (2.0 * var2) - 0.5;
    }
    kl
}
