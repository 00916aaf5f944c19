//! Minimal dense networks with exact analytic gradients, plus Adam.
//!
//! Parameters live in one flat `Vec<f64>` per network (row-major weight
//! matrix then bias, layer by layer), which keeps checkpointing and the
//! finite-difference oracle trivial.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient at index {0}")]
    NonFiniteGradient(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Softplus,
    Sigmoid,
}

/// Number of parameters for a stack of fully connected layers.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
    output_activation: OutputActivation,
}

/// Intermediate values from a forward pass, enough for an exact backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    // Pre-activation and post-activation per layer, output layer last.
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(
        layer_sizes: Vec<usize>,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layer");
        let n = param_count(&layer_sizes);
        Mlp {
            layer_sizes,
            params: vec![0.0; n],
            activation,
            output_activation,
        }
    }

    /// Scaled-Gaussian init: weights ~ N(0, 1/fan_in), biases zero.
    pub fn init_scaled(&mut self, rng: &mut impl rand::Rng) {
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            for i in 0..fan_in * fan_out {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                self.params[off + i] = g * std;
            }
            off += fan_in * fan_out + fan_out; // biases stay zero
        }
    }

    /// Scales the last layer's weights and biases, e.g. to make a policy
    /// head near-zero at init.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let n = self.layer_sizes.len();
        let last = self.layer_sizes[n - 2] * self.layer_sizes[n - 1] + self.layer_sizes[n - 1];
        let off = self.params.len() - last;
        for p in &mut self.params[off..] {
            *p *= factor;
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers);
        let mut cur: &[f64] = input;
        let mut off = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[off..off + fan_in * fan_out];
            let biases = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = biases[o];
                for (wi, xi) in row.iter().zip(cur.iter()) {
                    acc += wi * xi;
                }
                z[o] = acc;
            }
            let a: Vec<f64> = if l + 1 == n_layers {
                z.iter().map(|&v| apply_output(self.output_activation, v)).collect()
            } else {
                z.iter().map(|&v| apply_hidden(self.activation, v)).collect()
            };
            pre.push(z);
            post.push(a);
            cur = post.last().unwrap();
            off += fan_in * fan_out + fan_out;
        }
        let output = post.last().unwrap().clone();
        Ok((
            output,
            ForwardCache {
                input: input.to_vec(),
                pre,
                post,
            },
        ))
    }

    /// Forward pass without keeping the cache.
    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(input).map(|(o, _)| o)
    }

    /// Exact gradient of a scalar loss with output gradient `out_grad`,
    /// with respect to the parameters and the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        out_grad: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        if out_grad.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.output_dim(),
                got: out_grad.len(),
            });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut param_grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = out_grad.to_vec();

        // Layer offsets into the flat parameter vector.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        for l in (0..n_layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let off = offsets[l];
            // Through the layer's activation.
            for (d, (&z, &a)) in delta
                .iter_mut()
                .zip(cache.pre[l].iter().zip(cache.post[l].iter()))
            {
                let deriv = if l + 1 == n_layers {
                    output_deriv(self.output_activation, z, a)
                } else {
                    hidden_deriv(self.activation, z, a)
                };
                *d *= deriv;
            }
            let layer_input: &[f64] = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            let weights = &self.params[off..off + fan_in * fan_out];
            let (wgrad, bgrad) = param_grad[off..off + fan_in * fan_out + fan_out]
                .split_at_mut(fan_in * fan_out);
            let mut input_grad = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                bgrad[o] = d;
                let wrow = &weights[o * fan_in..(o + 1) * fan_in];
                let grow = &mut wgrad[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] = d * layer_input[i];
                    input_grad[i] += d * wrow[i];
                }
            }
            delta = input_grad;
        }
        Ok((param_grad, delta))
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

fn apply_hidden(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Tanh => z.tanh(),
        Activation::Relu => z.max(0.0),
    }
}

fn hidden_deriv(act: Activation, z: f64, a: f64) -> f64 {
    match act {
        Activation::Tanh => 1.0 - a * a,
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn apply_output(act: OutputActivation, z: f64) -> f64 {
    match act {
        OutputActivation::Identity => z,
        OutputActivation::Softplus => softplus(z),
        OutputActivation::Sigmoid => sigmoid(z),
    }
}

fn output_deriv(act: OutputActivation, z: f64, a: f64) -> f64 {
    match act {
        OutputActivation::Identity => 1.0,
        OutputActivation::Softplus => sigmoid(z),
        OutputActivation::Sigmoid => a * (1.0 - a),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // Stable: ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|)
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Standard bias-corrected Adam update, in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), NnError> {
        if grad.len() != self.m.len() || params.len() != self.m.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Scales `grad` down so its L2 norm does not exceed `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad {
            *g *= scale;
        }
    }
}
