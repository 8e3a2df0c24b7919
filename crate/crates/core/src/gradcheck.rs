//! Central-finite-difference gradient checking.
//!
//! The finite-difference side is computed from plain forward passes only, so
//! it stays independent of the reverse-mode code path it is used to verify.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::net::Network;

/// Step size for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error floor: entries whose analytic and numeric gradients are both
/// below this magnitude are compared absolutely instead.
pub const FD_FLOOR: f64 = 1e-6;

/// Worst relative error between reverse-mode parameter gradients and central
/// finite differences of the scalar loss `sum(output ⊙ upstream)`.
pub fn max_relative_error(net: &Network, inputs: ArrayView2<f64>, upstream: ArrayView2<f64>) -> f64 {
    let trace = net.forward_batch(inputs).expect("forward");
    let (grad, _) = trace.backward(upstream).expect("backward");
    let analytic = grad.flat();

    let base = net.flat_parameters();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (idx, analytic_g) in analytic.iter().enumerate() {
        let mut theta = base.clone();
        theta[idx] += FD_STEP;
        probe.set_flat_parameters(&theta).expect("set params");
        let up = scalar_loss(&probe, inputs, upstream);
        theta[idx] = base[idx] - FD_STEP;
        probe.set_flat_parameters(&theta).expect("set params");
        let down = scalar_loss(&probe, inputs, upstream);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic_g.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max((analytic_g - numeric).abs() / denom);
    }
    worst
}

fn scalar_loss(net: &Network, inputs: ArrayView2<f64>, upstream: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for (row, up) in inputs.rows().into_iter().zip(upstream.rows()) {
        let out = net.forward(row).expect("forward");
        total += out.iter().zip(up.iter()).map(|(o, u)| o * u).sum::<f64>();
    }
    total
}

/// Run `draws` random parameter/input/upstream configurations of a network
/// shape and return the worst relative error seen across all of them.
pub fn check_shape(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    output_activation: crate::net::Activation,
    draws: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let net = Network::mlp(input_dim, hidden, output_dim, output_activation, rng.gen()).unwrap();
        let rows = 3;
        let inputs = Array2::from_shape_fn((rows, input_dim), |_| rng.gen_range(-1.0..1.0));
        let upstream = Array2::from_shape_fn((rows, output_dim), |_| rng.gen_range(-1.0..1.0));
        worst = worst.max(max_relative_error(&net, inputs.view(), upstream.view()));
    }
    worst
}
