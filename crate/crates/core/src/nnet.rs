//! Small dense networks with analytic gradients, Adam, and Polyak averaging.
//!
//! Everything is plain `f64` vectors so training runs are bit-reproducible
//! and states serialize cleanly into checkpoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Activation applied to the final layer; hidden layers are always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// Squashes outputs into (-1, 1); used for policies.
    Tanh,
    /// Raw affine output; used for value functions.
    Linear,
}

/// One fully-connected layer, weights stored row-major `[output][input]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn new<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weights = (0..input_dim * output_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            input_dim,
            output_dim,
            weights,
            biases: vec![0.0; output_dim],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.input_dim);
        out.clear();
        for o in 0..self.output_dim {
            let row = &self.weights[o * self.input_dim..(o + 1) * self.input_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Multilayer perceptron with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output_activation: OutputActivation,
}

/// Post-activation values for every layer; `activations[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

impl Mlp {
    /// Builds a network with the given layer widths, e.g. `[4, 64, 32, 2]`.
    /// Weights start uniform in `±1/sqrt(fan_in)`, biases at zero.
    pub fn new<R: Rng>(dims: &[usize], output_activation: OutputActivation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Layer::new(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("non-empty network").input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty network").output_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn activate(&self, layer_index: usize, z: &mut [f64]) {
        let last = layer_index + 1 == self.layers.len();
        if last {
            if self.output_activation == OutputActivation::Tanh {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
        } else {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut scratch = Vec::new();
        self.forward_into(input, &mut out, &mut scratch);
        out
    }

    /// Allocation-free [`Mlp::forward`]: leaves the output in `out`, using
    /// `scratch` as the ping-pong buffer.
    pub fn forward_into(&self, input: &[f64], out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(out, scratch);
            self.activate(i, scratch);
            std::mem::swap(out, scratch);
        }
    }

    /// Forward pass that keeps every post-activation for [`Mlp::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let mut cache = ForwardCache::default();
        self.forward_cached_into(input, &mut cache);
        cache
    }

    /// Allocation-free [`Mlp::forward_cached`] that reuses `cache`'s buffers.
    pub fn forward_cached_into(&self, input: &[f64], cache: &mut ForwardCache) {
        let depth = self.layers.len() + 1;
        cache.activations.truncate(depth);
        cache.activations.resize_with(depth, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(i + 1);
            let z = &mut rest[0];
            layer.affine(&done[i], z);
            self.activate(i, z);
        }
    }

    /// Backpropagates `output_grad` (dL/d output) through the cached pass,
    /// accumulating parameter gradients into `grads` and returning dL/d input.
    ///
    /// ReLU uses subgradient 0 at exactly zero; tanh's derivative is taken
    /// from the cached post-activation as `1 - y^2`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let mut delta = Vec::new();
        let mut scratch = Vec::new();
        self.backward_into(cache, output_grad, grads, &mut delta, &mut scratch);
        delta
    }

    /// Allocation-free [`Mlp::backward`]: dL/d input ends up in `delta`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut Gradients,
        delta: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
    ) {
        debug_assert_eq!(grads.layers.len(), self.layers.len());
        delta.clear();
        delta.extend_from_slice(output_grad);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let post = &cache.activations[l + 1];
            let last = l + 1 == self.layers.len();
            if last {
                if self.output_activation == OutputActivation::Tanh {
                    for (d, y) in delta.iter_mut().zip(post) {
                        *d *= 1.0 - y * y;
                    }
                }
            } else {
                for (d, y) in delta.iter_mut().zip(post) {
                    if *y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[l];
            let g = &mut grads.layers[l];
            scratch.clear();
            scratch.resize(layer.input_dim, 0.0);
            for o in 0..layer.output_dim {
                let d = delta[o];
                g.biases[o] += d;
                let row = &layer.weights[o * layer.input_dim..(o + 1) * layer.input_dim];
                let grow = &mut g.weights[o * layer.input_dim..(o + 1) * layer.input_dim];
                for ((gw, ig), (&w, &x)) in grow
                    .iter_mut()
                    .zip(scratch.iter_mut())
                    .zip(row.iter().zip(input.iter()))
                {
                    *gw += d * x;
                    *ig += d * w;
                }
            }
            std::mem::swap(delta, scratch);
        }
    }
}

/// Parameter-shaped gradient (or moment) accumulator for an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= s);
            l.biases.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moment1: Gradients,
    moment2: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moment1: Gradients::zeros_like(net),
            moment2: Gradients::zeros_like(net),
        }
    }

    /// One Adam step with bias-corrected step size
    /// `lr * sqrt(1 - b2^t) / (1 - b1^t)`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt()
            / (1.0 - self.beta1.powi(t));
        for ((layer, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.moment1.layers.iter_mut().zip(&mut self.moment2.layers))
        {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(g.biases.iter());
            let m1 = m.weights.iter_mut().chain(m.biases.iter_mut());
            let m2 = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(m1).zip(m2) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + self.epsilon);
            }
        }
    }
}

/// Moves `target` toward `online`: `t = decay * t + (1 - decay) * o`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, decay: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tw, ow) in t.weights.iter_mut().zip(&o.weights) {
            *tw = decay * *tw + (1.0 - decay) * ow;
        }
        for (tb, ob) in t.biases.iter_mut().zip(&o.biases) {
            *tb = decay * *tb + (1.0 - decay) * ob;
        }
    }
}
