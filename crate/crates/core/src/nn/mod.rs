//! Fixed-topology convolutional network with hand-written forward and
//! backward passes.
//!
//! A [`Network`] is built from a list of [`LayerSpec`]s and an input shape.
//! Shapes are inferred layer by layer at construction, so a topology that
//! cannot be wired is rejected before any data flows through it.
//! [`Network::forward`] records per-layer caches that
//! [`Network::backward`] consumes; [`Network::infer`] is the cache-free path
//! used for encoding.

mod activation;
mod checkpoint;
mod conv;
mod init;
mod linear;
mod pool;
mod sgd;

pub use activation::{Relu, Tanh};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::Conv2d;
pub use init::{xavier_bound, xavier_init};
pub use linear::Linear;
pub use pool::{pooled_extent, MaxPool2d};
pub use sgd::{Sgd, SgdConfig};

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// CIFAR image geometry: channels, height, width.
pub const IMAGE_SHAPE: [usize; 3] = [3, 32, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Tanh,
    FullyConnected {
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "pool",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::FullyConnected { .. } => "fc",
        }
    }
}

/// The hashing network: three conv(5×5)/ReLU/max-pool(3×3, stride 2)
/// stages with 32, 32 and 64 filters, fc(500)/ReLU, then a linear fc(k).
pub fn canonical_specs(bits: usize) -> Vec<LayerSpec> {
    let conv = |filters| LayerSpec::Conv {
        filters,
        kernel: 5,
        stride: 1,
        pad: 2,
    };
    let pool = LayerSpec::MaxPool {
        window: 3,
        stride: 2,
    };
    vec![
        conv(32),
        LayerSpec::Relu,
        pool,
        conv(32),
        LayerSpec::Relu,
        pool,
        conv(64),
        LayerSpec::Relu,
        pool,
        LayerSpec::FullyConnected { outputs: 500 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { outputs: bits },
    ]
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    MaxPool(MaxPool2d),
    Relu(Relu<T>),
    Tanh(Tanh<T>),
    Linear(Linear<T>),
}

impl<T: Scalar> Layer<T> {
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::Tanh(l) => Ok(l.infer(x)),
            Layer::Linear(l) => l.infer(x),
        }
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Tanh(l) => Ok(l.forward(x)),
            Layer::Linear(l) => l.forward(x),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::MaxPool(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Tanh(l) => l.backward(dy),
            Layer::Linear(l) => l.backward(dy),
        }
    }
}

/// A trainable parameter with its current gradient.
pub struct Param<'a, T> {
    pub name: String,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a Tensor<T>,
    /// Weight decay applies to weights only, never to biases.
    pub decays: bool,
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    names: Vec<String>,
    /// Per-item shape entering each layer, plus the final output shape.
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    /// Wires `specs` onto per-item input shape `input` (`[C, H, W]`).
    pub fn new(input: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut names = Vec::with_capacity(specs.len());
        let mut shapes = vec![input.to_vec()];
        let mut counts = std::collections::HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            let count = counts.entry(spec.kind()).or_insert(0usize);
            *count += 1;
            let name = format!("{}{}", spec.kind(), count);
            let cur = shapes.last().expect("input shape present").clone();
            let bad = |why: &str| {
                Error::Config(format!("layer {i} ({name}): {why}; incoming shape {cur:?}"))
            };
            let (layer, next) = match *spec {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    pad,
                } => {
                    if cur.len() != 3 {
                        return Err(bad("convolution needs a [C, H, W] input"));
                    }
                    if filters == 0 {
                        return Err(bad("zero filters"));
                    }
                    let conv = Conv2d::new(cur[0], filters, kernel, stride, pad);
                    let (ho, wo) = conv
                        .output_hw(cur[1], cur[2])
                        .ok_or_else(|| bad("kernel does not fit"))?;
                    (Layer::Conv(conv), vec![filters, ho, wo])
                }
                LayerSpec::MaxPool { window, stride } => {
                    if cur.len() != 3 {
                        return Err(bad("pooling needs a [C, H, W] input"));
                    }
                    let pool = MaxPool2d::new(window, stride);
                    let (ho, wo) = pool
                        .output_hw(cur[1], cur[2])
                        .ok_or_else(|| bad("pool window does not fit"))?;
                    (Layer::MaxPool(pool), vec![cur[0], ho, wo])
                }
                LayerSpec::Relu => (Layer::Relu(Relu::default()), cur.clone()),
                LayerSpec::Tanh => (Layer::Tanh(Tanh::default()), cur.clone()),
                LayerSpec::FullyConnected { outputs } => {
                    if outputs == 0 {
                        return Err(bad("zero outputs"));
                    }
                    let fin: usize = cur.iter().product();
                    (Layer::Linear(Linear::new(fin, outputs)), vec![outputs])
                }
            };
            layers.push(layer);
            names.push(name);
            shapes.push(next);
        }
        Ok(Network {
            layers,
            names,
            shapes,
        })
    }

    /// The canonical hashing network for CIFAR-sized input and `bits` outputs.
    pub fn canonical(bits: usize) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Config("code length k must be positive".into()));
        }
        Network::new(&IMAGE_SHAPE, &canonical_specs(bits))
    }

    /// Same as [`Network::canonical`] with a tanh head, as used by the
    /// asymmetric solver.
    pub fn canonical_tanh(bits: usize) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Config("code length k must be positive".into()));
        }
        let mut specs = canonical_specs(bits);
        specs.push(LayerSpec::Tanh);
        Network::new(&IMAGE_SHAPE, &specs)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().expect("shapes non-empty").iter().product()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    /// Per-item shape entering layer `i` (`i == len` gives the output shape).
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != self.shapes[0].len() + 1 || x.shape()[1..] != self.shapes[0][..] {
            let mut expected = vec![x.shape().first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.shapes[0]);
            return Err(Error::LayerShape {
                layer: format!("input to layer 0 ({})", self.names.first().map_or("", |s| s)),
                expected,
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn wrap(&self, i: usize, e: Error) -> Error {
        match e {
            Error::Shape(msg) => Error::Config(format!("layer {i} ({}): {msg}", self.names[i])),
            other => other,
        }
    }

    /// Forward pass without recording caches. Returns `[M, k]`.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.infer(&cur).map_err(|e| self.wrap(i, e))?;
        }
        let n = x.shape()[0];
        cur.reshape(&[n, self.output_dim()])
    }

    /// Forward pass recording the activations needed by [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for i in 0..self.layers.len() {
            cur = match self.layers[i].forward(&cur) {
                Ok(t) => t,
                Err(e) => return Err(self.wrap(i, e)),
            };
        }
        let n = x.shape()[0];
        cur.reshape(&[n, self.output_dim()])
    }

    /// Back-propagates `upstream` (`[M, k]`), storing parameter gradients in
    /// the layers and returning the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let n = upstream.shape().first().copied().unwrap_or(0);
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(self.shapes.last().expect("shapes non-empty"));
        let mut cur = upstream.clone().reshape(&out_shape)?;
        for i in (0..self.layers.len()).rev() {
            cur = match self.layers[i].backward(&cur) {
                Ok(t) => t,
                Err(e) => return Err(self.wrap(i, e)),
            };
            let mut s = vec![n];
            s.extend_from_slice(&self.shapes[i]);
            cur = cur.reshape(&s)?;
        }
        Ok(cur)
    }

    pub fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter_mut().zip(&self.names) {
            let (w, wg, b, bg) = match layer {
                Layer::Conv(l) => (&mut l.weight, &l.weight_grad, &mut l.bias, &l.bias_grad),
                Layer::Linear(l) => (&mut l.weight, &l.weight_grad, &mut l.bias, &l.bias_grad),
                _ => continue,
            };
            out.push(Param {
                name: format!("{name}.weight"),
                value: w,
                grad: wg,
                decays: true,
            });
            out.push(Param {
                name: format!("{name}.bias"),
                value: b,
                grad: bg,
                decays: false,
            });
        }
        out
    }

    /// `(name, value, gradient)` for every parameter, in layer order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>, &Tensor<T>)> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter().zip(&self.names) {
            let (w, wg, b, bg) = match layer {
                Layer::Conv(l) => (&l.weight, &l.weight_grad, &l.bias, &l.bias_grad),
                Layer::Linear(l) => (&l.weight, &l.weight_grad, &l.bias, &l.bias_grad),
                _ => continue,
            };
            out.push((format!("{name}.weight"), w, wg));
            out.push((format!("{name}.bias"), b, bg));
        }
        out
    }

    /// Converts all parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(l) => {
                    let mut c = Conv2d::new(l.in_channels, l.out_channels, l.kernel, l.stride, l.pad);
                    c.weight = l.weight.cast();
                    c.bias = l.bias.cast();
                    Layer::Conv(c)
                }
                Layer::Linear(l) => {
                    let mut f = Linear::new(l.in_features, l.out_features);
                    f.weight = l.weight.cast();
                    f.bias = l.bias.cast();
                    Layer::Linear(f)
                }
                Layer::MaxPool(p) => Layer::MaxPool(MaxPool2d::new(p.window, p.stride)),
                Layer::Relu(_) => Layer::Relu(Relu::default()),
                Layer::Tanh(_) => Layer::Tanh(Tanh::default()),
            })
            .collect();
        Network {
            layers,
            names: self.names.clone(),
            shapes: self.shapes.clone(),
        }
    }
}

impl<T> fmt::Display for Network<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in self.names.iter().enumerate() {
            writeln!(f, "{name:>6}: {:?} -> {:?}", self.shapes[i], self.shapes[i + 1])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_spatial_plumbing() {
        let net = Network::<f32>::canonical(12).unwrap();
        assert_eq!(net.shape_at(3), &[32, 16, 16]);
        assert_eq!(net.shape_at(6), &[32, 8, 8]);
        assert_eq!(net.shape_at(9), &[64, 4, 4]);
        match &net.layers()[9] {
            Layer::Linear(l) => assert_eq!((l.in_features, l.out_features), (1024, 500)),
            _ => panic!("expected fc(500)"),
        }
        assert_eq!(net.output_dim(), 12);
    }

    #[test]
    fn zero_bits_is_a_config_error() {
        assert!(matches!(Network::<f32>::canonical(0), Err(Error::Config(_))));
    }

    #[test]
    fn unwirable_spec_names_the_layer() {
        let specs = [
            LayerSpec::MaxPool {
                window: 3,
                stride: 2,
            },
            LayerSpec::MaxPool {
                window: 3,
                stride: 2,
            },
        ];
        let err = Network::<f32>::new(&[1, 4, 4], &specs).unwrap_err();
        assert!(err.to_string().contains("pool2"), "{err}");
    }

    #[test]
    fn wrong_input_shape_is_reported() {
        let net = Network::<f32>::canonical(4).unwrap();
        let x = Tensor::zeros(&[2, 3, 28, 28]);
        assert!(matches!(net.infer(&x), Err(Error::LayerShape { .. })));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut net = Network::<f64>::canonical(4).unwrap();
        let dy = Tensor::zeros(&[1, 4]);
        assert!(matches!(net.backward(&dy), Err(Error::State(_))));
    }
}
