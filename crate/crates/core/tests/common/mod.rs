#![allow(dead_code)]

use radae::nn::{layer_gradient, layer_objective, LayerParams, Matrix, Network, Objective};
use rand::Rng;

pub const FD_STEP: f64 = 1e-4;

/// Relative discrepancy with an absolute floor so that near-zero gradients
/// are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4)
}

fn central<F: FnMut(f64) -> f64>(x0: f64, mut f: F) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

/// Worst relative error between the analytic network gradient and central
/// differences over every parameter.
pub fn network_fd_error(net: &Network, clean: &Matrix, input: &Matrix, labels: &[usize], obj: Objective) -> f64 {
    let (_, grad) = net.objective_gradient(clean, input, labels, obj);
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    let eval = |p: &Network| p.objective_value(clean, input, labels, obj);

    for l in 0..net.layers.len() {
        for idx in 0..net.layers[l].weights.len() {
            let x0 = net.layers[l].weights[idx];
            let n = central(x0, |v| {
                probe.layers[l].weights[idx] = v;
                eval(&probe)
            });
            probe.layers[l].weights[idx] = x0;
            worst = worst.max(rel_err(grad.layers[l].weights[idx], n));
        }
        for idx in 0..net.layers[l].hidden_bias.len() {
            let x0 = net.layers[l].hidden_bias[idx];
            let n = central(x0, |v| {
                probe.layers[l].hidden_bias[idx] = v;
                eval(&probe)
            });
            probe.layers[l].hidden_bias[idx] = x0;
            worst = worst.max(rel_err(grad.layers[l].hidden_bias[idx], n));
        }
        for idx in 0..net.layers[l].recon_bias.len() {
            let x0 = net.layers[l].recon_bias[idx];
            let n = central(x0, |v| {
                probe.layers[l].recon_bias[idx] = v;
                eval(&probe)
            });
            probe.layers[l].recon_bias[idx] = x0;
            worst = worst.max(rel_err(grad.layers[l].recon_bias[idx], n));
        }
    }
    for idx in 0..net.out_weights.len() {
        let x0 = net.out_weights[idx];
        let n = central(x0, |v| {
            probe.out_weights[idx] = v;
            eval(&probe)
        });
        probe.out_weights[idx] = x0;
        worst = worst.max(rel_err(grad.out_weights[idx], n));
    }
    for idx in 0..net.out_bias.len() {
        let x0 = net.out_bias[idx];
        let n = central(x0, |v| {
            probe.out_bias[idx] = v;
            eval(&probe)
        });
        probe.out_bias[idx] = x0;
        worst = worst.max(rel_err(grad.out_bias[idx], n));
    }
    worst
}

/// Same check for a single autoencoder's own reconstruction objective.
pub fn layer_fd_error(layer: &LayerParams, clean: &Matrix, input: &Matrix) -> f64 {
    let (_, grad) = layer_gradient(layer, clean, input);
    let mut probe = layer.clone();
    let mut worst: f64 = 0.0;
    for idx in 0..layer.weights.len() {
        let x0 = layer.weights[idx];
        let n = central(x0, |v| {
            probe.weights[idx] = v;
            layer_objective(&probe, clean, input)
        });
        probe.weights[idx] = x0;
        worst = worst.max(rel_err(grad.weights[idx], n));
    }
    for idx in 0..layer.hidden_bias.len() {
        let x0 = layer.hidden_bias[idx];
        let n = central(x0, |v| {
            probe.hidden_bias[idx] = v;
            layer_objective(&probe, clean, input)
        });
        probe.hidden_bias[idx] = x0;
        worst = worst.max(rel_err(grad.hidden_bias[idx], n));
    }
    for idx in 0..layer.recon_bias.len() {
        let x0 = layer.recon_bias[idx];
        let n = central(x0, |v| {
            probe.recon_bias[idx] = v;
            layer_objective(&probe, clean, input)
        });
        probe.recon_bias[idx] = x0;
        worst = worst.max(rel_err(grad.recon_bias[idx], n));
    }
    worst
}

/// A small random network with randomised biases so no gradient is trivially zero.
pub fn random_small_net<R: Rng>(rng: &mut R, dim: usize, classes: usize) -> Network {
    let depth = rng.random_range(1..=2);
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
    let mut net = Network::new(dim, &widths, classes, rng);
    for l in &mut net.layers {
        l.hidden_bias.apply(|v| *v = rng.random_range(-0.5..0.5));
        l.recon_bias.apply(|v| *v = rng.random_range(-0.5..0.5));
    }
    net.out_bias.apply(|v| *v = rng.random_range(-0.5..0.5));
    net
}
