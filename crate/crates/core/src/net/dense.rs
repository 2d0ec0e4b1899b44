//! Batched forward and backward passes for fully connected nets.

use super::{Activation, NeuralNet};

pub(super) fn forward(net: &NeuralNet, x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    let last = net.num_layers() - 1;
    for i in 0..=last {
        let l = net.layer(i);
        next.clear();
        next.extend(l.biases.iter().zip(l.weights.chunks_exact(l.cols)).map(|(b, row)| {
            b + row.iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>()
        }));
        if i < last {
            for z in &mut next {
                *z = net.activation().apply(*z);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[0]
}

/// C = A * B + beta * C for row-major C, with arbitrary strides on A and B.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every index touched is < m*rsa + k*csa (resp. k*rsb + n*csb,
    // m*n) for the strides used by callers, all of which are within the
    // slice lengths asserted by the workspace layout.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Scratch buffers for mini-batch gradients of a dense net.
pub(super) struct DenseWorkspace {
    widths: Vec<usize>,
    /// `acts[0]` holds the input batch, `acts[i]` the outputs of layer i.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl DenseWorkspace {
    pub fn new(widths: &[usize], batch_cap: usize) -> Self {
        let max_w = widths.iter().copied().max().unwrap_or(1);
        Self {
            widths: widths.to_vec(),
            acts: widths.iter().map(|w| vec![0.0; w * batch_cap]).collect(),
            delta: vec![0.0; max_w * batch_cap],
            delta_prev: vec![0.0; max_w * batch_cap],
        }
    }

    pub fn input_mut(&mut self, rows: usize) -> &mut [f64] {
        let w = self.widths[0];
        &mut self.acts[0][..rows * w]
    }

    /// Forward pass over the first `rows` inputs already placed in the
    /// workspace. Returns the output column.
    pub fn forward_batch(&mut self, net: &NeuralNet, rows: usize) -> &[f64] {
        let act = net.activation();
        let last = net.num_layers() - 1;
        for i in 0..=last {
            let l = net.layer(i);
            let (prev, rest) = self.acts.split_at_mut(i + 1);
            let input = &prev[i][..rows * l.cols];
            let out = &mut rest[0][..rows * l.rows];
            for row in out.chunks_exact_mut(l.rows) {
                row.copy_from_slice(l.biases);
            }
            gemm(rows, l.cols, l.rows, input, (l.cols, 1), l.weights, (1, l.cols), 1.0, out);
            if i < last {
                apply_activation(act, out);
            }
        }
        &self.acts[last + 1][..rows]
    }

    /// Mean squared error over the batch and its gradient, written into
    /// `grad` (overwritten, not accumulated).
    pub fn loss_and_gradient(
        &mut self,
        net: &NeuralNet,
        rows: usize,
        targets: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        self.forward_batch(net, rows);
        let last = net.num_layers() - 1;
        let scale = 2.0 / rows as f64;
        let mut loss = 0.0;
        for ((d, out), t) in self.delta[..rows]
            .iter_mut()
            .zip(&self.acts[last + 1][..rows])
            .zip(targets)
        {
            let r = out - t;
            loss += r * r;
            *d = scale * r;
        }
        loss /= rows as f64;

        let act = net.activation();
        for i in (0..=last).rev() {
            let shape = net.shapes()[i];
            let l = net.layer(i);
            let input = &self.acts[i][..rows * l.cols];
            let delta = &self.delta[..rows * l.rows];
            gemm(
                l.rows,
                rows,
                l.cols,
                delta,
                (1, l.rows),
                input,
                (l.cols, 1),
                0.0,
                &mut grad[shape.weights()],
            );
            let gb = &mut grad[shape.biases()];
            gb.fill(0.0);
            for drow in delta.chunks_exact(l.rows) {
                for (g, d) in gb.iter_mut().zip(drow) {
                    *g += d;
                }
            }
            if i > 0 {
                let dprev = &mut self.delta_prev[..rows * l.cols];
                gemm(rows, l.rows, l.cols, delta, (l.rows, 1), l.weights, (l.cols, 1), 0.0, dprev);
                for (d, a) in dprev.iter_mut().zip(input) {
                    *d *= act.derivative_from_output(*a);
                }
                std::mem::swap(&mut self.delta, &mut self.delta_prev);
            }
        }
        loss
    }
}

fn apply_activation(act: Activation, z: &mut [f64]) {
    match act {
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = super::sigmoid(*v)),
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
    }
}
