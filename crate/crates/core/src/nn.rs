//! Dense multilayer perceptrons with manual reverse-mode gradients and Adam.
//!
//! Parameters of a network live in one flat `Vec<f64>`. Layer `l` occupies
//! `in*out` weights stored input-major (`w[i * out + o]`) followed by `out`
//! biases. Hidden layers use ReLU, the output layer is affine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Parameter count of a network with the given layer widths.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Activations of a batched forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network outputs, row-major `batch x out`.
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    /// Post-ReLU activations of the last hidden layer.
    pub fn last_hidden(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let mut params = Vec::with_capacity(parameter_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; parameter_count(sizes)],
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let n = parameter_count(&sizes);
        if params.len() != n {
            return Err(Error::Shape(format!(
                "layer sizes {sizes:?} need {n} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let at = offset;
            offset += w[0] * w[1] + w[1];
            (at, w[0], w[1])
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_batch(input, 1).acts.pop().unwrap())
    }

    /// Batched forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Tape {
        assert_eq!(inputs.len(), batch * self.input_dim(), "input shape mismatch");
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(inputs.to_vec());
        for (l, (at, n_in, n_out)) in self.layers().enumerate() {
            let w = &self.params[at..at + n_in * n_out];
            let b = &self.params[at + n_in * n_out..at + n_in * n_out + n_out];
            let x = &acts[l];
            let mut y = vec![0.0; batch * n_out];
            for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                yr.copy_from_slice(b);
                for (i, &xi) in xr.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let wr = &w[i * n_out..(i + 1) * n_out];
                    for (yo, &wo) in yr.iter_mut().zip(wr) {
                        *yo += xi * wo;
                    }
                }
                if l + 1 < n_layers {
                    for v in yr.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            acts.push(y);
        }
        Tape { batch, acts }
    }

    /// Accumulates parameter gradients of `sum_b <grad_out[b], y[b]>` into `grads`.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer shape mismatch");
        assert_eq!(grad_out.len(), tape.batch * self.output_dim(), "output gradient shape mismatch");
        let batch = tape.batch;
        let n_layers = self.sizes.len() - 1;
        let layers: Vec<_> = self.layers().collect();
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (at, n_in, n_out) = layers[l];
            if l + 1 < n_layers {
                for (d, &a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &tape.acts[l];
            let (gw, gb) = grads[at..at + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (xr, dr) in x.chunks_exact(n_in).zip(delta.chunks_exact(n_out)) {
                for (g, &d) in gb.iter_mut().zip(dr) {
                    *g += d;
                }
                for (i, &xi) in xr.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (g, &d) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(dr) {
                        *g += xi * d;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[at..at + n_in * n_out];
                let mut prev = vec![0.0; batch * n_in];
                for (pr, dr) in prev.chunks_exact_mut(n_in).zip(delta.chunks_exact(n_out)) {
                    for (i, p) in pr.iter_mut().enumerate() {
                        *p = w[i * n_out..(i + 1) * n_out]
                            .iter()
                            .zip(dr)
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                delta = prev;
            }
        }
    }

    /// Gradients of `<output_gradient, y(input)>` for a single input.
    pub fn gradients(&self, input: &[f64], output_gradient: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() || output_gradient.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "expected input {} / output gradient {}, got {} / {}",
                self.input_dim(),
                self.output_dim(),
                input.len(),
                output_gradient.len()
            )));
        }
        let tape = self.forward_batch(input, 1);
        let mut g = vec![0.0; self.params.len()];
        self.backward(&tape, output_gradient, &mut g);
        Ok(g)
    }

    /// Sign pattern of every hidden pre-activation for one input.
    fn relu_pattern(&self, input: &[f64]) -> Vec<bool> {
        let tape = self.forward_batch(input, 1);
        tape.acts[1..tape.acts.len() - 1]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Result of comparing analytic against central-difference gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation moved a ReLU across its kink.
    pub skipped_at_kink: usize,
}

/// Central finite-difference check of `backward` for the scalar loss
/// `loss(y)` with analytic output gradient `loss_grad(y)`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    net: &Mlp,
    input: &[f64],
    loss: impl Fn(&[f64]) -> f64,
    loss_grad: impl Fn(&[f64]) -> Vec<f64>,
    h: f64,
) -> GradCheck {
    let y = net.forward(input).expect("input shape");
    let analytic = net.gradients(input, &loss_grad(&y)).expect("shapes");
    let base_pattern = net.relu_pattern(input);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for p in 0..net.params.len() {
        let orig = probe.params[p];
        probe.params[p] = orig + h;
        let kink_plus = probe.relu_pattern(input) != base_pattern;
        let lp = loss(&probe.forward(input).unwrap());
        probe.params[p] = orig - h;
        let kink_minus = probe.relu_pattern(input) != base_pattern;
        let lm = loss(&probe.forward(input).unwrap());
        probe.params[p] = orig;
        if kink_plus || kink_minus {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic[p];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    GradCheck {
        max_relative_error: worst,
        checked: net.params.len() - skipped,
        skipped_at_kink: skipped,
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One bias-corrected Adam descent step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps_hat);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
