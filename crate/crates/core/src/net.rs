//! Dense feed-forward networks with reverse-mode gradients and Adam.
//!
//! Everything is 64-bit and deterministic: parameters are initialized from an
//! explicit seed and a forward pass records exactly what the matching backward
//! pass needs. Activations are restricted to smooth functions so every network
//! is continuous in its input by construction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NumError;

/// Smooth activation tags. `Sigmoid` squashes onto (0,1), which is how decoder
/// outputs are kept inside the unit box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            // tanh written through exp; noticeably faster than libm tanh and
            // accurate to a couple of ulp.
            Activation::Tanh => 1.0 - 2.0 / ((2.0 * z).exp() + 1.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = act(x W + b)` with `W` stored input-major (in × out).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// A stack of dense layers. Value type: cloning yields an independent network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Build a network with the given layer sizes and per-layer activations.
    /// `dims` chains input through hidden sizes to the output dimension, so
    /// `dims.len() == activations.len() + 1`.
    pub fn seeded(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self, NumError> {
        if dims.len() < 2 || dims.len() != activations.len() + 1 {
            return Err(NumError::BadArchitecture {
                dims: dims.to_vec(),
                activations: activations.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                // Xavier-style uniform init keeps smooth units away from saturation.
                let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-scale..scale));
                let bias = Array1::zeros(fan_out);
                Layer {
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Network { layers })
    }

    /// Standard encoder/decoder stack: tanh hidden layers, then `output_activation`.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self, NumError> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut activations = vec![Activation::Tanh; hidden.len()];
        activations.push(output_activation);
        Network::seeded(&dims, &activations, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Plain forward pass for a single input vector.
    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Array1<f64>, NumError> {
        if input.len() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut cur = input.to_owned();
        for layer in &self.layers {
            let mut z = layer.bias.clone();
            z += &cur.dot(&layer.weight);
            z.mapv_inplace(|v| layer.activation.apply(v));
            cur = z;
        }
        Ok(cur)
    }

    /// Forward pass over a whole batch (rows are samples), recording the
    /// per-layer outputs required by [`BatchTrace::backward`].
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<BatchTrace<'_>, NumError> {
        if inputs.ncols() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = match outputs.last() {
                Some(prev) => prev.dot(&layer.weight),
                None => inputs.dot(&layer.weight),
            };
            ndarray::Zip::from(&mut z)
                .and_broadcast(&layer.bias)
                .for_each(|v, &b| *v = layer.activation.apply(*v + b));
            outputs.push(z);
        }
        Ok(BatchTrace {
            net: self,
            inputs: inputs.to_owned(),
            outputs,
        })
    }

    /// Scale the first-layer weight rows for input coordinates `lo..hi`.
    pub fn scale_input_rows(&mut self, lo: usize, hi: usize, factor: f64) {
        let layer = self.layers.first_mut().expect("nonempty");
        for row in lo..hi {
            layer.weight.row_mut(row).mapv_inplace(|w| w * factor);
        }
    }

    /// Copy output unit `src` (final-layer column and bias) onto `dst`,
    /// perturbing the copy with uniform noise of half-width `noise`.
    pub fn copy_output_unit<R: Rng>(&mut self, src: usize, dst: usize, noise: f64, rng: &mut R) {
        let layer = self.layers.last_mut().expect("nonempty");
        let src_col = layer.weight.column(src).to_owned();
        for (d, s) in layer.weight.column_mut(dst).iter_mut().zip(src_col.iter()) {
            *d = s + rng.gen_range(-noise..noise);
        }
        layer.bias[dst] = layer.bias[src];
    }

    /// Copy first-layer input row `src` onto `dst` with uniform noise.
    pub fn copy_input_row<R: Rng>(&mut self, src: usize, dst: usize, noise: f64, rng: &mut R) {
        let layer = self.layers.first_mut().expect("nonempty");
        let src_row = layer.weight.row(src).to_owned();
        for (d, s) in layer.weight.row_mut(dst).iter_mut().zip(src_row.iter()) {
            *d = s + rng.gen_range(-noise..noise);
        }
    }

    /// Flatten all parameters, layer by layer (weights row-major, then bias).
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    /// Overwrite all parameters from a flat slice in `flat_parameters` order.
    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<(), NumError> {
        if flat.len() != self.parameter_count() {
            return Err(NumError::DimensionMismatch {
                expected: self.parameter_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }
}

/// Recorded forward pass over a batch; owns everything backward needs.
pub struct BatchTrace<'a> {
    net: &'a Network,
    inputs: Array2<f64>,
    outputs: Vec<Array2<f64>>,
}

impl BatchTrace<'_> {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("nonempty")
    }

    /// Reverse-mode sweep. `upstream` is dL/d(output), one row per sample.
    /// Returns parameter gradients summed over the batch and dL/d(input).
    pub fn backward(&self, upstream: ArrayView2<f64>) -> Result<(Gradient, Array2<f64>), NumError> {
        let out = self.output();
        if upstream.shape() != out.shape() {
            return Err(NumError::DimensionMismatch {
                expected: out.len(),
                got: upstream.len(),
            });
        }
        let n_layers = self.net.layers.len();
        let mut weight_grads: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut bias_grads: Vec<Array1<f64>> = Vec::with_capacity(n_layers);
        let mut delta = upstream.to_owned();
        for (idx, layer) in self.net.layers.iter().enumerate().rev() {
            // dL/dz = dL/dy * act'(z), with act' written in terms of y.
            let y = &self.outputs[idx];
            ndarray::Zip::from(&mut delta).and(y).for_each(|d, &yv| {
                *d *= layer.activation.derivative_from_output(yv);
            });
            let below: ArrayView2<f64> = if idx == 0 {
                self.inputs.view()
            } else {
                self.outputs[idx - 1].view()
            };
            weight_grads.push(below.t().dot(&delta));
            bias_grads.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&layer.weight.t());
        }
        weight_grads.reverse();
        bias_grads.reverse();
        Ok((
            Gradient {
                weights: weight_grads,
                biases: bias_grads,
            },
            delta,
        ))
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Gradient {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Gradient,
    second: Gradient,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Count of updates rejected because the gradient was not finite.
    pub rejected: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        AdamState {
            first: Gradient::zeros_like(net),
            second: Gradient::zeros_like(net),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rejected: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Zero the moments of one final-layer output unit (column plus bias),
    /// after that unit's parameters were rewritten in place.
    pub fn reset_output_unit_moments(&mut self, unit: usize) {
        for grad in [&mut self.first, &mut self.second] {
            grad.weights
                .last_mut()
                .expect("nonempty")
                .column_mut(unit)
                .fill(0.0);
            grad.biases.last_mut().expect("nonempty")[unit] = 0.0;
        }
    }

    /// Zero the moments of one first-layer input row.
    pub fn reset_input_row_moments(&mut self, row: usize) {
        for grad in [&mut self.first, &mut self.second] {
            grad.weights
                .first_mut()
                .expect("nonempty")
                .row_mut(row)
                .fill(0.0);
        }
    }
}

/// One bias-corrected Adam update in place. A nonfinite gradient rejects the
/// step (parameters and moments untouched) and bumps the rejection counter.
pub fn adam_step(
    net: &mut Network,
    grad: &Gradient,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NumError> {
    if !grad.is_finite() {
        state.rejected += 1;
        return Err(NumError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        update_array(
            layer.weight.iter_mut(),
            grad.weights[idx].iter(),
            state.first.weights[idx].iter_mut(),
            state.second.weights[idx].iter_mut(),
            state.beta1,
            state.beta2,
            bc1,
            bc2,
            state.epsilon,
            lr,
        );
        update_array(
            layer.bias.iter_mut(),
            grad.biases[idx].iter(),
            state.first.biases[idx].iter_mut(),
            state.second.biases[idx].iter_mut(),
            state.beta1,
            state.beta2,
            bc1,
            bc2,
            state.epsilon,
            lr,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_array<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    first: impl Iterator<Item = &'a mut f64>,
    second: impl Iterator<Item = &'a mut f64>,
    beta1: f64,
    beta2: f64,
    bc1: f64,
    bc2: f64,
    epsilon: f64,
    lr: f64,
) {
    for (((p, &g), m), v) in params.zip(grads).zip(first).zip(second) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut net = Network::seeded(&[2, 2], &[Activation::Identity], 0).unwrap();
        net.layers[0].weight = Array2::eye(2);
        net.layers[0].bias = Array1::zeros(2);
        let out = net.forward(array![0.3, 0.7].view()).unwrap();
        assert_eq!(out, array![0.3, 0.7]);
    }

    #[test]
    fn zero_weight_network_outputs_bias() {
        let mut net = Network::seeded(&[3, 2], &[Activation::Identity], 1).unwrap();
        net.layers[0].weight.fill(0.0);
        net.layers[0].bias = array![0.25, -1.5];
        let out = net.forward(array![9.0, -4.0, 2.0].view()).unwrap();
        assert_eq!(out, array![0.25, -1.5]);
    }

    #[test]
    fn seeded_network_is_reproducible() {
        let net1 = Network::mlp(2, &[16], 2, Activation::Identity, 42).unwrap();
        let net2 = Network::mlp(2, &[16], 2, Activation::Identity, 42).unwrap();
        let x = array![0.1, 0.9];
        assert_eq!(net1.forward(x.view()).unwrap(), net2.forward(x.view()).unwrap());
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = Network::mlp(3, &[4], 1, Activation::Identity, 0).unwrap();
        assert!(net.forward(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        // loss = output . u  =>  dL/dW = input ⊗ u
        let net = Network::seeded(&[2, 2], &[Activation::Identity], 3).unwrap();
        let input = array![[0.4, -0.6]];
        let trace = net.forward_batch(input.view()).unwrap();
        let upstream = array![[1.5, -2.0]];
        let (grad, _) = trace.backward(upstream.view()).unwrap();
        let expected = array![[0.4 * 1.5, 0.4 * -2.0], [-0.6 * 1.5, -0.6 * -2.0]];
        for (a, b) in grad.weights[0].iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in grad.biases[0].iter().zip([1.5, -2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let net = Network::mlp(3, &[8, 8], 2, Activation::Sigmoid, 7).unwrap();
        let batch = array![[0.1, 0.2, 0.3], [0.9, 0.5, 0.0]];
        let trace = net.forward_batch(batch.view()).unwrap();
        for (row, out_row) in batch.rows().into_iter().zip(trace.output().rows()) {
            let single = net.forward(row).unwrap();
            for (a, b) in single.iter().zip(out_row.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut net = Network::mlp(2, &[4], 1, Activation::Identity, 5).unwrap();
        let before = net.flat_parameters();
        let grad = Gradient::zeros_like(&net);
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &grad, &mut state, 1e-2).unwrap();
        assert_eq!(net.flat_parameters(), before);
    }

    #[test]
    fn adam_first_step_has_bias_corrected_unit_magnitude() {
        // With a constant gradient g on one parameter, the first update is
        // -lr * g / (|g| + eps), i.e. magnitude ≈ lr.
        let mut net = Network::seeded(&[1, 1], &[Activation::Identity], 0).unwrap();
        net.layers[0].weight[[0, 0]] = 0.0;
        let mut grad = Gradient::zeros_like(&net);
        grad.weights[0][[0, 0]] = 1.0;
        let mut state = AdamState::new(&net);
        let lr = 1e-3;
        adam_step(&mut net, &grad, &mut state, lr).unwrap();
        let expected = -lr * 1.0 / (1.0 + state.epsilon);
        let got = net.layers[0].weight[[0, 0]];
        assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
    }

    #[test]
    fn adam_rejects_nonfinite_gradient() {
        let mut net = Network::mlp(2, &[4], 1, Activation::Identity, 5).unwrap();
        let before = net.flat_parameters();
        let mut grad = Gradient::zeros_like(&net);
        grad.weights[0][[0, 0]] = f64::NAN;
        let mut state = AdamState::new(&net);
        assert!(adam_step(&mut net, &grad, &mut state, 1e-2).is_err());
        assert_eq!(state.rejected, 1);
        assert_eq!(net.flat_parameters(), before);
    }

    #[test]
    fn adam_trajectories_are_deterministic() {
        let run = || {
            let mut net = Network::mlp(2, &[8], 2, Activation::Tanh, 11).unwrap();
            let mut state = AdamState::new(&net);
            let batch = array![[0.2, 0.8], [0.5, 0.5]];
            for _ in 0..25 {
                let trace = net.forward_batch(batch.view()).unwrap();
                let upstream = trace.output().clone();
                let (grad, _) = trace.backward(upstream.view()).unwrap();
                adam_step(&mut net, &grad, &mut state, 1e-2).unwrap();
            }
            net.flat_parameters()
        };
        assert_eq!(run(), run());
    }
}
