//! Hierarchical interaction networks.
//!
//! A level-0 net is one two-layer block over the raw input: `m` outer units,
//! each fed by its own `4 * p_star` inner units. A level-l net sums `k`
//! blocks, and each block reads the outputs of `p_star` level-(l-1) nets.
//! Each block stores three layers: inner (`m * 4p*` rows over its inputs),
//! outer (`m` rows of `4p*` weights, row i reading inner units
//! `i*4p* .. (i+1)*4p*`), and a single-row linear output layer.

use super::{Activation, HierarchicalSpec, NeuralNet};

pub(super) fn layer_dims(spec: &HierarchicalSpec) -> Vec<(usize, usize)> {
    let mut dims = Vec::new();
    push_node_dims(spec, spec.level, &mut dims);
    dims
}

fn push_block_dims(spec: &HierarchicalSpec, q: usize, dims: &mut Vec<(usize, usize)>) {
    let inner = 4 * spec.p_star;
    dims.push((spec.m * inner, q));
    dims.push((spec.m, inner));
    dims.push((1, spec.m));
}

fn push_node_dims(spec: &HierarchicalSpec, level: usize, dims: &mut Vec<(usize, usize)>) {
    if level == 0 {
        push_block_dims(spec, spec.input_dim, dims);
        return;
    }
    for _ in 0..spec.k {
        for _ in 0..spec.p_star {
            push_node_dims(spec, level - 1, dims);
        }
        push_block_dims(spec, spec.p_star, dims);
    }
}

/// Intermediate values of one block, kept for backpropagation.
pub(super) struct BlockTrace {
    /// Index of the block's inner layer.
    layer: usize,
    input: Vec<f64>,
    inner: Vec<f64>,
    outer: Vec<f64>,
}

pub(super) struct NodeTrace {
    blocks: Vec<(BlockTrace, Vec<NodeTrace>)>,
    pub output: f64,
}

fn eval_block(net: &NeuralNet, layer: usize, input: Vec<f64>, p_star: usize) -> (f64, BlockTrace) {
    let act = net.activation();
    let group = 4 * p_star;
    let inner_l = net.layer(layer);
    let inner: Vec<f64> = inner_l
        .weights
        .chunks_exact(inner_l.cols)
        .zip(inner_l.biases)
        .map(|(row, b)| act.apply(b + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>()))
        .collect();
    let outer_l = net.layer(layer + 1);
    let outer: Vec<f64> = outer_l
        .weights
        .chunks_exact(group)
        .zip(outer_l.biases)
        .zip(inner.chunks_exact(group))
        .map(|((row, b), feed)| act.apply(b + row.iter().zip(feed).map(|(w, a)| w * a).sum::<f64>()))
        .collect();
    let out_l = net.layer(layer + 2);
    let y = out_l.biases[0] + out_l.weights.iter().zip(&outer).map(|(w, a)| w * a).sum::<f64>();
    (
        y,
        BlockTrace {
            layer,
            input,
            inner,
            outer,
        },
    )
}

fn eval_node(
    net: &NeuralNet,
    spec: &HierarchicalSpec,
    level: usize,
    x: &[f64],
    cursor: &mut usize,
) -> NodeTrace {
    if level == 0 {
        let (y, trace) = eval_block(net, *cursor, x.to_vec(), spec.p_star);
        *cursor += 3;
        return NodeTrace {
            blocks: vec![(trace, Vec::new())],
            output: y,
        };
    }
    let mut blocks = Vec::with_capacity(spec.k);
    let mut output = 0.0;
    for _ in 0..spec.k {
        let children: Vec<NodeTrace> = (0..spec.p_star)
            .map(|_| eval_node(net, spec, level - 1, x, cursor))
            .collect();
        let input = children.iter().map(|c| c.output).collect();
        let (y, trace) = eval_block(net, *cursor, input, spec.p_star);
        *cursor += 3;
        output += y;
        blocks.push((trace, children));
    }
    NodeTrace { blocks, output }
}

pub(super) fn trace(net: &NeuralNet, spec: &HierarchicalSpec, x: &[f64]) -> NodeTrace {
    let mut cursor = 0;
    let t = eval_node(net, spec, spec.level, x, &mut cursor);
    debug_assert_eq!(cursor, net.num_layers());
    t
}

pub(super) fn forward(net: &NeuralNet, spec: &HierarchicalSpec, x: &[f64]) -> f64 {
    trace(net, spec, x).output
}

/// Adds `d_out * d(block output)/d(coefficient)` into `grad` and returns
/// the derivative with respect to the block inputs.
fn backprop_block(net: &NeuralNet, b: &BlockTrace, d_out: f64, grad: &mut [f64]) -> Vec<f64> {
    let act: Activation = net.activation();
    let shapes = net.shapes();
    let (inner_s, outer_s, out_s) = (shapes[b.layer], shapes[b.layer + 1], shapes[b.layer + 2]);
    let group = outer_s.cols;

    let out_w = &net.params()[out_s.weights()];
    grad[out_s.biases().start] += d_out;
    let mut d_outer = vec![0.0; b.outer.len()];
    for (i, a) in b.outer.iter().enumerate() {
        grad[out_s.offset + i] += d_out * a;
        d_outer[i] = d_out * out_w[i] * act.derivative_from_output(*a);
    }

    let outer_w = &net.params()[outer_s.weights()];
    let outer_b = outer_s.biases().start;
    let mut d_inner = vec![0.0; b.inner.len()];
    for (i, d) in d_outer.iter().enumerate() {
        grad[outer_b + i] += d;
        for j in 0..group {
            let r = i * group + j;
            grad[outer_s.offset + r] += d * b.inner[r];
            d_inner[r] = d * outer_w[r] * act.derivative_from_output(b.inner[r]);
        }
    }

    let inner_w = &net.params()[inner_s.weights()];
    let inner_b = inner_s.biases().start;
    let q = inner_s.cols;
    let mut d_input = vec![0.0; q];
    for (r, d) in d_inner.iter().enumerate() {
        grad[inner_b + r] += d;
        for v in 0..q {
            grad[inner_s.offset + r * q + v] += d * b.input[v];
            d_input[v] += d * inner_w[r * q + v];
        }
    }
    d_input
}

/// Accumulates `d_out * d(net output)/d(coefficient)` into `grad`.
pub(super) fn backprop(net: &NeuralNet, t: &NodeTrace, d_out: f64, grad: &mut [f64]) {
    for (block, children) in &t.blocks {
        let d_input = backprop_block(net, block, d_out, grad);
        for (child, d) in children.iter().zip(d_input) {
            backprop(net, child, d, grad);
        }
    }
}
