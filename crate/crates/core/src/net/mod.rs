//! Feedforward networks: a fully connected architecture and the sparse
//! hierarchical interaction architecture built from two-layer blocks.
//!
//! All coefficients live in one flat vector. Layer `i` occupies
//! `rows * cols` weights (row-major, one row per output unit) followed by
//! `rows` biases; layers are stored in evaluation order. For hierarchical
//! nets every block contributes three layers (inner, outer, output) and
//! blocks are laid out post-order: a block's sub-networks come before it.

mod dense;
mod hierarchical;
mod train;

pub use train::{train_mse, Adam, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Format tag written into serialized networks.
pub const NET_FORMAT: &str = "dnnate-net/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a = apply(z)`.
    #[inline]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weight initialization scheme. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Uniform on ±sqrt(6 / (fan_in + fan_out)).
    #[default]
    GlorotUniform,
    /// Uniform on ±sqrt(6 / fan_in).
    HeUniform,
}

impl InitScheme {
    fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            InitScheme::HeUniform => (6.0 / fan_in as f64).sqrt(),
        }
    }
}

/// Parameters of the hierarchical interaction architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchicalSpec {
    pub level: usize,
    /// Number of top-level blocks summed at every level above zero.
    pub k: usize,
    pub p_star: usize,
    /// Number of outer units per block.
    pub m: usize,
    pub input_dim: usize,
    pub alpha: f64,
}

impl HierarchicalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.p_star < 1 || self.m < 1 || self.input_dim < 1 {
            return Err(Error::invalid(
                "hierarchical spec needs k, p_star, m and input_dim >= 1",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("hierarchical alpha must be positive"));
        }
        Ok(())
    }

    /// Coefficients of one two-layer block over `q` inputs.
    pub fn block_param_count(&self, q: usize) -> usize {
        let inner = 4 * self.p_star;
        (self.m + 1) + self.m * (inner + 1) + self.m * inner * (q + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    Dense { widths: Vec<usize> },
    Hierarchical(HierarchicalSpec),
}

/// Architecture choice for a nuisance fit; the input dimension is supplied
/// at build time from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Architecture {
    Dense {
        hidden: Vec<usize>,
        activation: Activation,
    },
    Hierarchical {
        level: usize,
        k: usize,
        p_star: usize,
        m: usize,
        alpha: f64,
        activation: Activation,
    },
}

impl Architecture {
    pub fn build(&self, input_dim: usize, init: InitScheme, seed: u64) -> Result<NeuralNet> {
        match self {
            Architecture::Dense { hidden, activation } => {
                let mut widths = Vec::with_capacity(hidden.len() + 2);
                widths.push(input_dim);
                widths.extend_from_slice(hidden);
                widths.push(1);
                NeuralNet::dense_with_init(&widths, *activation, init, seed)
            }
            Architecture::Hierarchical {
                level,
                k,
                p_star,
                m,
                alpha,
                activation,
            } => {
                let spec = HierarchicalSpec {
                    level: *level,
                    k: *k,
                    p_star: *p_star,
                    m: *m,
                    input_dim,
                    alpha: *alpha,
                };
                NeuralNet::hierarchical(&spec, *activation, init, seed)
            }
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Architecture::Dense { activation, .. } | Architecture::Hierarchical { activation, .. } => {
                *activation
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.rows * self.cols;
        start..start + self.rows
    }

    pub fn len(&self) -> usize {
        self.rows * (self.cols + 1)
    }
}

/// Borrowed view of one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

impl LayerView<'_> {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    topology: Topology,
    activation: Activation,
    clip_alpha: Option<f64>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

fn layout(dims: impl IntoIterator<Item = (usize, usize)>) -> (Vec<LayerShape>, usize) {
    let mut offset = 0;
    let shapes = dims
        .into_iter()
        .map(|(rows, cols)| {
            let s = LayerShape { rows, cols, offset };
            offset += s.len();
            s
        })
        .collect();
    (shapes, offset)
}

fn dense_dims(widths: &[usize]) -> Vec<(usize, usize)> {
    widths.windows(2).map(|w| (w[1], w[0])).collect()
}

impl NeuralNet {
    /// Fully connected net with Glorot-uniform weights and zero biases.
    pub fn dense(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::dense_with_init(widths, activation, InitScheme::GlorotUniform, seed)
    }

    pub fn dense_with_init(
        widths: &[usize],
        activation: Activation,
        init: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("dense net needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::invalid("output width must be 1"));
        }
        let (shapes, total) = layout(dense_dims(widths));
        let mut params = vec![0.0; total];
        let mut rng = Stream::new(seed);
        for s in &shapes {
            let limit = init.limit(s.cols, s.rows);
            for w in &mut params[s.weights()] {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(Self {
            topology: Topology::Dense {
                widths: widths.to_vec(),
            },
            activation,
            clip_alpha: None,
            shapes,
            params,
        })
    }

    /// Hierarchical interaction net. Every coefficient starts within
    /// `[-alpha, alpha]` and `clip_alpha` is set to `alpha`.
    pub fn hierarchical(
        spec: &HierarchicalSpec,
        activation: Activation,
        init: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let (shapes, total) = layout(hierarchical::layer_dims(spec));
        let mut params = vec![0.0; total];
        let mut rng = Stream::new(seed);
        for s in &shapes {
            let limit = init.limit(s.cols, s.rows).min(spec.alpha);
            for w in &mut params[s.weights()] {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(Self {
            topology: Topology::Hierarchical(*spec),
            activation,
            clip_alpha: Some(spec.alpha),
            shapes,
            params,
        })
    }

    pub fn with_clip(mut self, alpha: Option<f64>) -> Result<Self> {
        if let Some(a) = alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid("clip_alpha must be positive"));
            }
        }
        self.clip_alpha = alpha;
        self.project();
        Ok(self)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn clip_alpha(&self) -> Option<f64> {
        self.clip_alpha
    }

    pub fn input_dim(&self) -> usize {
        match &self.topology {
            Topology::Dense { widths } => widths[0],
            Topology::Hierarchical(spec) => spec.input_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flat coefficient vector in the documented layer order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn layer(&self, i: usize) -> LayerView<'_> {
        let s = self.shapes[i];
        LayerView {
            rows: s.rows,
            cols: s.cols,
            weights: &self.params[s.weights()],
            biases: &self.params[s.biases()],
        }
    }

    pub(crate) fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    /// Clamps every coefficient into `[-clip_alpha, clip_alpha]`.
    pub(crate) fn project(&mut self) {
        if let Some(a) = self.clip_alpha {
            for c in &mut self.params {
                *c = c.clamp(-a, a);
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        match &self.topology {
            Topology::Dense { .. } => dense::forward(self, x),
            Topology::Hierarchical(spec) => hierarchical::forward(self, spec, x),
        }
    }

    /// Gradient of `(forward(x) - target)^2` with respect to every
    /// coefficient, in the order of [`NeuralNet::params`].
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = train::Workspace::new(self, 1);
        ws.loss_and_gradient(self, x, &[target], &mut grad);
        Ok(grad)
    }

    pub fn to_document(&self) -> NetDocument {
        NetDocument {
            format: NET_FORMAT.to_string(),
            topology: self.topology.clone(),
            activation: self.activation,
            clip_alpha: self.clip_alpha,
            layers: (0..self.num_layers())
                .map(|i| {
                    let l = self.layer(i);
                    LayerDocument {
                        weights: l.weights.chunks(l.cols).map(<[f64]>::to_vec).collect(),
                        biases: l.biases.to_vec(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_document(doc: NetDocument) -> Result<Self> {
        if doc.format != NET_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported network format {:?}, expected {NET_FORMAT:?}",
                doc.format
            )));
        }
        let dims = match &doc.topology {
            Topology::Dense { widths } => {
                if widths.len() < 2 || widths.contains(&0) || *widths.last().unwrap() != 1 {
                    return Err(Error::invalid("invalid dense widths"));
                }
                dense_dims(widths)
            }
            Topology::Hierarchical(spec) => {
                spec.validate()?;
                hierarchical::layer_dims(spec)
            }
        };
        if dims.len() != doc.layers.len() {
            return Err(Error::invalid(format!(
                "topology implies {} layers, document has {}",
                dims.len(),
                doc.layers.len()
            )));
        }
        let (shapes, total) = layout(dims);
        let mut params = Vec::with_capacity(total);
        for (i, (s, l)) in shapes.iter().zip(&doc.layers).enumerate() {
            if l.weights.len() != s.rows
                || l.weights.iter().any(|r| r.len() != s.cols)
                || l.biases.len() != s.rows
            {
                return Err(Error::invalid(format!(
                    "layer {i} does not have shape {}x{}",
                    s.rows, s.cols
                )));
            }
            l.weights.iter().for_each(|r| params.extend_from_slice(r));
            params.extend_from_slice(&l.biases);
        }
        if params.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("network coefficients must be finite"));
        }
        let net = Self {
            topology: doc.topology,
            activation: doc.activation,
            clip_alpha: None,
            shapes,
            params,
        };
        net.with_clip(doc.clip_alpha)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }
}

/// Versioned on-disk form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetDocument {
    pub format: String,
    pub topology: Topology,
    pub activation: Activation,
    pub clip_alpha: Option<f64>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Clamps `value` to `[-bound, bound]`; values inside pass unchanged.
pub fn trunc(value: f64, bound: f64) -> f64 {
    debug_assert!(bound > 0.0);
    if value.abs() <= bound {
        value
    } else if value > 0.0 {
        bound
    } else if value < 0.0 {
        -bound
    } else {
        0.0
    }
}
