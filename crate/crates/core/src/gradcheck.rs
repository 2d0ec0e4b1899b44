//! Central finite-difference verification of backpropagated gradients.
//!
//! The numerical side only ever calls [`NeuralNet::forward`], so it shares
//! no code with backpropagation.

use crate::error::Result;
use crate::net::{Activation, NeuralNet};
use crate::rng::Stream;

/// Central-difference gradient of `(forward(x) - target)^2`.
pub fn numerical_gradient(net: &NeuralNet, x: &[f64], target: f64, h: f64) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.param_count());
    for i in 0..net.param_count() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = (probe.forward(x)? - target).powi(2);
        probe.params_mut()[i] = orig - h;
        let down = (probe.forward(x)? - target).powi(2);
        probe.params_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `|analytic - numeric| / max(|analytic|, |numeric|, scale_floor)`. The
/// floor keeps near-zero gradients, where the finite difference is mostly
/// rounding noise, from dominating.
pub fn relative_error(analytic: f64, numeric: f64, scale_floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(scale_floor)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub nets: usize,
    pub coefficients: usize,
    pub max_relative_error: f64,
}

/// Checks backprop against central differences (step 1e-5, floor 1e-3) on
/// `nets` random dense nets, alternating sigmoid and ReLU, with 1 to 3
/// hidden layers of width 2 to 6.
pub fn check_random_dense_nets(nets: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Stream::new(seed);
    let mut max_err: f64 = 0.0;
    let mut coefficients = 0;
    for k in 0..nets {
        let activation = if k % 2 == 0 {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        let depth = 2 + rng.below(3);
        let mut widths: Vec<usize> = (0..depth).map(|_| 2 + rng.below(5)).collect();
        widths.push(1);
        let mut net = NeuralNet::dense(&widths, activation, rng.next_u64())?;
        // Nonzero biases so every code path is exercised.
        for c in net.params_mut() {
            *c = rng.uniform_range(-1.0, 1.0);
        }
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let target = rng.normal();
        let analytic = net.gradient(&x, target)?;
        let numeric = numerical_gradient(&net, &x, target, 1e-5)?;
        for (a, n) in analytic.iter().zip(&numeric) {
            max_err = max_err.max(relative_error(*a, *n, 1e-3));
        }
        coefficients += analytic.len();
    }
    Ok(GradCheckReport {
        nets,
        coefficients,
        max_relative_error: max_err,
    })
}
