//! Central finite-difference verification of the analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Tensor};
use super::{Example, NetworkParams};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
const RELATIVE_FLOOR: f64 = 1e-8;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    /// Position in [`NetworkParams::layers`] order.
    pub layer: usize,
    pub kind: &'static str,
    pub checked: usize,
    /// Sampled parameters passed over because a perturbation moved some
    /// ELU input across zero, where the second derivative jumps.
    pub skipped: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_relative_error).fold(0.0, f64::max)
    }
}

/// Compares backprop gradients of the noise-free loss with
/// `(L(p + eps) - L(p - eps)) / 2 eps` on up to `per_layer` randomly
/// chosen parameters of every trainable layer. A parameter whose
/// perturbation flips the sign of any ELU input is replaced by the next
/// candidate, since the central difference there carries an error of
/// order `eps` rather than `eps^2`.
pub fn gradient_check(
    params: &NetworkParams,
    batch: &[Example],
    epsilon: f64,
    per_layer: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if per_layer == 0 {
        return Err(Error::config("gradient check needs at least one parameter per layer"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    let (_, grads) = params.loss_and_grads::<ChaCha8Rng>(batch, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut layers = Vec::new();

    let sizes: Vec<(usize, usize, &'static str)> =
        params.layers().map(|l| (l.weights.len(), l.bias.len(), l.spec.kind())).collect();
    for (li, &(nw, nb, kind)) in sizes.iter().enumerate() {
        let total = nw + nb;
        if total == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        let mut skipped = 0;
        for &p in &order {
            if checked == per_layer {
                break;
            }
            let analytic = if p < nw {
                grads.layers[li].weights[p]
            } else {
                grads.layers[li].bias[p - nw]
            };
            let original = param(&mut probe, li, p, nw);
            *slot(&mut probe, li, p, nw) = original + epsilon;
            let (plus, plus_signs) = probe.loss_and_elu_signs(batch)?;
            *slot(&mut probe, li, p, nw) = original - epsilon;
            let (minus, minus_signs) = probe.loss_and_elu_signs(batch)?;
            *slot(&mut probe, li, p, nw) = original;
            if plus_signs != minus_signs {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic, numeric));
            checked += 1;
        }
        layers.push(LayerCheck {
            layer: li,
            kind,
            checked,
            skipped,
            max_relative_error: worst,
        });
    }
    Ok(GradCheckReport { layers })
}

fn slot<'a>(params: &'a mut NetworkParams, layer: usize, p: usize, nw: usize) -> &'a mut f64 {
    let l = params.layers_mut().nth(layer).expect("layer index in range");
    if p < nw {
        &mut l.weights[p]
    } else {
        &mut l.bias[p - nw]
    }
}

fn param(params: &mut NetworkParams, layer: usize, p: usize, nw: usize) -> f64 {
    *slot(params, layer, p, nw)
}

/// Checks one layer in isolation against the scalar `sum(y * r)` for a
/// fixed random `r`, covering both parameter and input gradients. Returns
/// the worst relative error.
pub fn layer_gradient_check(layer: &Layer, input: &Tensor, epsilon: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(input);
    let r: Vec<f64> = (0..y.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |l: &Layer, x: &Tensor| -> f64 { l.forward(x).data.iter().zip(&r).map(|(a, b)| a * b).sum() };

    let mut grad = layer.zero_grad();
    let gy = Tensor::from_vec(y.shape, r.clone());
    let gx = layer.backward(input, &y, &gy, &mut grad, true).expect("input gradient requested");

    let mut worst: f64 = 0.0;
    let mut probe = layer.clone();
    for i in 0..probe.weights.len() {
        let w = probe.weights[i];
        probe.weights[i] = w + epsilon;
        let plus = objective(&probe, input);
        probe.weights[i] = w - epsilon;
        let minus = objective(&probe, input);
        probe.weights[i] = w;
        worst = worst.max(relative_error(grad.weights[i], (plus - minus) / (2.0 * epsilon)));
    }
    for i in 0..probe.bias.len() {
        let b = probe.bias[i];
        probe.bias[i] = b + epsilon;
        let plus = objective(&probe, input);
        probe.bias[i] = b - epsilon;
        let minus = objective(&probe, input);
        probe.bias[i] = b;
        worst = worst.max(relative_error(grad.bias[i], (plus - minus) / (2.0 * epsilon)));
    }
    let mut x = input.clone();
    for i in 0..x.data.len() {
        let v = x.data[i];
        x.data[i] = v + epsilon;
        let plus = objective(layer, &x);
        x.data[i] = v - epsilon;
        let minus = objective(layer, &x);
        x.data[i] = v;
        worst = worst.max(relative_error(gx.data[i], (plus - minus) / (2.0 * epsilon)));
    }
    worst
}
