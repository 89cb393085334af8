//! Feedforward networks: layers, inference, differentiation and training.
//!
//! A network is an ordered list of layers. Each layer applies an affine map
//! (dense matrix, 5x5 convolution, or a parameter-free 2x2 max-pool routing)
//! followed by an elementwise activation. The last layer emits logits.

mod diff;
mod io;
mod layer;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{check_len, Error, Result};
use crate::rng;

pub use diff::{hvp, input_gradient, ForwardTrace, HessianBatch, HessianOperator};
pub(crate) use diff::jacobian_rows;
pub use io::{load_network, read_network, save_network, write_network, NETWORK_MAGIC};
pub use layer::{CONV_KERNEL, CONV_PADDING, POOL_SIZE};
pub use train::{accuracy, argmax, train, train_with, EpochStats, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// First derivative. ReLU takes the left branch at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Relu | Activation::Identity => 0.0,
        }
    }

    pub fn is_piecewise_linear(self) -> bool {
        !matches!(self, Activation::Sigmoid)
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Sigmoid),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Identity),
            t => Err(Error::format(format!("unknown activation tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Usage(format!("unknown activation '{other}'"))),
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

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// `weights` is `out x in`.
    Dense { weights: Array2<f64>, bias: Array1<f64> },
    /// 5x5 kernel, stride 1, padding 2, so spatial size is preserved.
    /// `weights` is `out_channels x (in_channels * 25)`, tap order `(c, ky, kx)`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    /// 2x2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool2d { channels: usize, height: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl Layer {
    pub fn dense(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        check_len(weights.nrows(), bias.len())?;
        Ok(Layer { kind: LayerKind::Dense { weights, bias }, activation })
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Dense { weights, .. } => weights.ncols(),
            LayerKind::Conv2d { in_channels, height, width, .. } => in_channels * height * width,
            LayerKind::MaxPool2d { channels, height, width } => channels * height * width,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Dense { weights, .. } => weights.nrows(),
            LayerKind::Conv2d { out_channels, height, width, .. } => out_channels * height * width,
            LayerKind::MaxPool2d { channels, height, width } => {
                channels * (height / POOL_SIZE) * (width / POOL_SIZE)
            }
        }
    }

    pub fn has_params(&self) -> bool {
        !matches!(self.kind, LayerKind::MaxPool2d { .. })
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            LayerKind::Dense { weights, bias } => check_len(weights.nrows(), bias.len()),
            LayerKind::Conv2d { in_channels, out_channels, weights, bias, height, width } => {
                check_len(*out_channels, weights.nrows())?;
                check_len(in_channels * CONV_KERNEL * CONV_KERNEL, weights.ncols())?;
                check_len(*out_channels, bias.len())?;
                if *height == 0 || *width == 0 || *in_channels == 0 {
                    return Err(Error::arg("conv layer with empty extent"));
                }
                Ok(())
            }
            LayerKind::MaxPool2d { channels, height, width } => {
                if *channels == 0 || *height < POOL_SIZE || *width < POOL_SIZE {
                    return Err(Error::arg("max-pool input smaller than its window"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Validates that consecutive layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        for layer in &layers {
            layer.validate()?;
        }
        for pair in layers.windows(2) {
            check_len(pair[0].output_dim(), pair[1].input_dim())?;
        }
        Ok(Network { layers })
    }

    /// Fully connected network with `hidden` widths, `activation` on hidden
    /// layers and identity logits. Weights and biases are drawn uniformly
    /// from `±1/sqrt(fan_in)`.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for (i, &width) in hidden.iter().chain(std::iter::once(&output_dim)).enumerate() {
            if width == 0 || fan_in == 0 {
                return Err(Error::arg("layer widths must be positive"));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = Array2::from_shape_fn((width, fan_in), |_| rng.random_range(-bound..bound));
            let bias = Array1::from_shape_fn(width, |_| rng.random_range(-bound..bound));
            let act = if i == hidden.len() { Activation::Identity } else { activation };
            layers.push(Layer::dense(weights, bias, act)?);
            fan_in = width;
        }
        Network::new(layers)
    }

    /// Two conv(5x5)+pool(2x2) stages with 16 and 32 channels, a dense hidden
    /// layer of `hidden` units and identity logits.
    pub fn cnn(
        height: usize,
        width: usize,
        hidden: usize,
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let mut conv = |in_channels: usize, out_channels: usize, h: usize, w: usize| {
            let fan_in = in_channels * CONV_KERNEL * CONV_KERNEL;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights =
                Array2::from_shape_fn((out_channels, fan_in), |_| rng.random_range(-bound..bound));
            let bias = Array1::from_shape_fn(out_channels, |_| rng.random_range(-bound..bound));
            Layer {
                kind: LayerKind::Conv2d { in_channels, out_channels, height: h, width: w, weights, bias },
                activation,
            }
        };
        let c1 = conv(1, 16, height, width);
        let (h1, w1) = (height / POOL_SIZE, width / POOL_SIZE);
        let c2 = conv(16, 32, h1, w1);
        let (h2, w2) = (h1 / POOL_SIZE, w1 / POOL_SIZE);
        let pool = |channels, height, width| Layer {
            kind: LayerKind::MaxPool2d { channels, height, width },
            activation: Activation::Identity,
        };
        let flat = 32 * h2 * w2;
        let head = Network::mlp(flat, &[hidden], output_dim, activation, rng.random())?;
        let mut layers = vec![c1, pool(16, height, width), c2, pool(32, h1, w1)];
        layers.extend(head.layers);
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for callers that edit parameters in place. Shapes must
    /// not be changed.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// True when every activation is piecewise linear, so the Hessian is zero
    /// almost everywhere and curvature cannot be estimated from it.
    pub fn is_piecewise_linear(&self) -> bool {
        self.layers
            .iter()
            .filter(|l| l.has_params())
            .all(|l| l.activation.is_piecewise_linear())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward_batch(xs)?.row(0).to_vec())
    }

    /// Logits for each row of `xs`.
    pub fn forward_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len(self.input_dim(), xs.ncols())?;
        let mut a = xs.to_owned();
        for layer in &self.layers {
            let (mut z, _) = layer.affine(a.view());
            let act = layer.activation;
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Argmax class for each row, lowest index on ties.
    pub fn predict_batch(&self, xs: ArrayView2<f64>) -> Result<Vec<usize>> {
        let logits = self.forward_batch(xs)?;
        Ok(logits.axis_iter(Axis(0)).map(|row| argmax(row.as_slice().unwrap())).collect())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.kind {
                LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. } => {
                    weights.len() + bias.len()
                }
                LayerKind::MaxPool2d { .. } => 0,
            })
            .sum()
    }

    /// Multiplies the logits by `s` (last layer's weights and bias).
    pub fn scale_output(&mut self, s: f64) {
        let last = self.layers.len() - 1;
        if let LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. } =
            &mut self.layers[last].kind
        {
            weights.mapv_inplace(|w| w * s);
            bias.mapv_inplace(|b| b * s);
        }
    }

    /// Short architecture summary such as `784-200-10 sigmoid`.
    pub fn describe(&self) -> String {
        let mut parts = vec![self.input_dim().to_string()];
        for layer in &self.layers {
            let tag = match &layer.kind {
                LayerKind::Dense { .. } => format!("{}", layer.output_dim()),
                LayerKind::Conv2d { out_channels, .. } => format!("conv{out_channels}"),
                LayerKind::MaxPool2d { .. } => "pool".to_string(),
            };
            parts.push(tag);
        }
        let hidden = self
            .layers
            .iter()
            .rev()
            .skip(1)
            .find(|l| l.has_params())
            .map(|l| l.activation.name())
            .unwrap_or("identity");
        format!("{} {}", parts.join("-"), hidden)
    }
}
