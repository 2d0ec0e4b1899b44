use serde::{Deserialize, Serialize};

use super::dense::DenseWorkspace;
use super::{hierarchical, InitScheme, NeuralNet, Topology};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Mini-batch Adam settings for squared-loss training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 800,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            init: InitScheme::GlorotUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.learning_rate) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1)")));
            }
        }
        if !pos(self.adam_epsilon) {
            return Err(Error::invalid("adam_epsilon must be positive"));
        }
        Ok(())
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn from_config(n: usize, cfg: &TrainConfig) -> Self {
        Self::new(n, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    }

    /// One bias-corrected update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.beta1_pow *= self.beta1;
        self.beta2_pow *= self.beta2;
        let c1 = 1.0 / (1.0 - self.beta1_pow);
        let c2 = 1.0 / (1.0 - self.beta2_pow);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= self.lr * (*m * c1) / ((*v * c2).sqrt() + self.eps);
        }
    }
}

pub(super) enum Workspace {
    Dense(DenseWorkspace),
    Hierarchical,
}

impl Workspace {
    pub fn new(net: &NeuralNet, batch_cap: usize) -> Self {
        match net.topology() {
            Topology::Dense { widths } => Workspace::Dense(DenseWorkspace::new(widths, batch_cap)),
            Topology::Hierarchical(_) => Workspace::Hierarchical,
        }
    }

    /// Mean squared error of the rows in `inputs` (row-major, one row per
    /// target) and its gradient, written into `grad`.
    pub fn loss_and_gradient(
        &mut self,
        net: &NeuralNet,
        inputs: &[f64],
        targets: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        let rows = targets.len();
        match (self, net.topology()) {
            (Workspace::Dense(ws), _) => {
                ws.input_mut(rows).copy_from_slice(inputs);
                ws.loss_and_gradient(net, rows, targets, grad)
            }
            (Workspace::Hierarchical, Topology::Hierarchical(spec)) => {
                grad.fill(0.0);
                let d = spec.input_dim;
                let scale = 2.0 / rows as f64;
                let mut loss = 0.0;
                for (x, t) in inputs.chunks_exact(d).zip(targets) {
                    let tr = hierarchical::trace(net, spec, x);
                    let r = tr.output - t;
                    loss += r * r;
                    hierarchical::backprop(net, &tr, scale * r, grad);
                }
                loss / rows as f64
            }
            _ => unreachable!("workspace built for a different topology"),
        }
    }
}

/// Trains `net` on the rows of `inputs` (row-major, `targets.len()` rows)
/// with seeded-shuffle mini-batch Adam on mean squared error. Coefficients
/// are projected onto `[-clip_alpha, clip_alpha]` after every step.
pub fn train_mse(
    net: &NeuralNet,
    inputs: &[f64],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<NeuralNet> {
    cfg.validate()?;
    let n = targets.len();
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let d = net.input_dim();
    if inputs.len() != n * d {
        return Err(Error::invalid(format!(
            "inputs hold {} values, expected {n} rows of {d}",
            inputs.len()
        )));
    }
    let mut net = net.clone();
    if cfg.epochs == 0 {
        return Ok(net);
    }
    let batch = cfg.batch_size.min(n);
    let mut ws = Workspace::new(&net, batch);
    let mut adam = Adam::from_config(net.param_count(), cfg);
    let mut grad = vec![0.0; net.param_count()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Stream::new(cfg.seed);
    let mut xb = vec![0.0; batch * d];
    let mut yb = vec![0.0; batch];

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let rows = chunk.len();
            for (k, &i) in chunk.iter().enumerate() {
                xb[k * d..(k + 1) * d].copy_from_slice(&inputs[i * d..(i + 1) * d]);
                yb[k] = targets[i];
            }
            let loss = ws.loss_and_gradient(&net, &xb[..rows * d], &yb[..rows], &mut grad);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.step(net.params_mut(), &grad);
            net.project();
        }
    }
    Ok(net)
}
