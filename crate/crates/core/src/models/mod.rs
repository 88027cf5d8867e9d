//! Layer graphs, the two mini architectures, and their forward/backward passes.
//!
//! A [`ModelGraph`] is an ordered list of [`LayerSpec`]s plus a name-keyed
//! parameter map. Shapes are checked once, when the graph is built; a graph
//! that builds can run forward on any batch of its input shape.
//!
//! The graph emits logits. Softmax is applied by the caller: fused with the
//! loss during training, explicitly for reported probabilities.

mod inception;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use inception::{inception_module, InceptionConfig, InceptionModule};
use inception::InceptionCache;

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d, conv2d_backward, conv_output_extent, dense, dense_backward, dropout,
    dropout_backward, global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward,
    relu, relu_backward, softmax, DropoutMode, DropoutState, PoolIndices, Tensor,
};

pub type Mode = DropoutMode;

/// Named gradient tensors, keyed like the model's parameters.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Maxpool {
        window: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        ratio: f64,
    },
    Flatten,
    GlobalAvgPool,
    Inception {
        name: String,
        module: InceptionModule,
    },
}

/// Activation shape between layers, excluding the batch axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    fn describe(&self) -> String {
        match self {
            Shape::Spatial { c, h, w } => format!("{c}x{h}x{w}"),
            Shape::Flat(f) => format!("{f} features"),
        }
    }
}

/// Which builder produced a graph; stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Plain,
    Inception,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Plain => "plain",
            Architecture::Inception => "inception",
        }
    }

    pub fn build(
        &self,
        num_classes: usize,
        input_shape: [usize; 3],
        dropout_ratio: f64,
        seed: u64,
    ) -> Result<ModelGraph> {
        match self {
            Architecture::Plain => {
                build_mini_plainnet_with_dropout(num_classes, input_shape, dropout_ratio, seed)
            }
            Architecture::Inception => {
                build_mini_inceptionnet_with_dropout(num_classes, input_shape, dropout_ratio, seed)
            }
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Architecture::Plain),
            "inception" => Ok(Architecture::Inception),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {other:?}; expected plain or inception"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    layers: Vec<LayerSpec>,
    parameters: BTreeMap<String, Tensor>,
    input_shape: [usize; 3],
    num_classes: usize,
    architecture: Option<Architecture>,
}

/// Incrementally assembles a graph, checking each layer against the running
/// activation shape and initializing its parameters.
pub struct GraphBuilder {
    layers: Vec<LayerSpec>,
    parameters: BTreeMap<String, Tensor>,
    input_shape: [usize; 3],
    shape: Shape,
    rng: ChaCha8Rng,
}

fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}

impl GraphBuilder {
    pub fn new(input_shape: [usize; 3], seed: u64) -> Result<Self> {
        let [c, h, w] = input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::BadShape(format!("input shape {input_shape:?} has a zero extent")));
        }
        Ok(Self {
            layers: Vec::new(),
            parameters: BTreeMap::new(),
            input_shape,
            shape: Shape::Spatial { c, h, w },
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn spatial(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape {
            Shape::Spatial { c, h, w } => Ok((c, h, w)),
            Shape::Flat(_) => Err(Error::BadShape(format!(
                "{what} needs a spatial input, got {}",
                self.shape.describe()
            ))),
        }
    }

    fn add_conv_params(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        let w = he_normal(&mut self.rng, &[cout, cin, k, k], cin * k * k);
        self.parameters.insert(format!("{name}.weight"), w);
        self.parameters.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.parameters.keys().any(|k| k.split('.').next() == Some(name)) {
            return Err(Error::BadShape(format!("duplicate layer name {name}")));
        }
        Ok(())
    }

    pub fn conv(
        mut self,
        name: &str,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        self.check_name(name)?;
        let (c, h, w) = self.spatial("conv")?;
        if out_channels == 0 || kernel == 0 {
            return Err(Error::BadShape(format!("conv {name} has a zero extent")));
        }
        let bad = |e: Error| Error::BadShape(format!("conv {name}: {e}"));
        let oh = conv_output_extent(h, kernel, stride, padding).map_err(bad)?;
        let ow = conv_output_extent(w, kernel, stride, padding).map_err(bad)?;
        self.add_conv_params(name, c, out_channels, kernel);
        self.layers.push(LayerSpec::Conv {
            name: name.into(),
            in_channels: c,
            out_channels,
            kernel,
            stride,
            padding,
        });
        self.shape = Shape::Spatial {
            c: out_channels,
            h: oh,
            w: ow,
        };
        Ok(self)
    }

    pub fn maxpool(mut self, window: usize, stride: usize, padding: usize) -> Result<Self> {
        let (c, h, w) = self.spatial("maxpool")?;
        if window == 0 || padding >= window {
            return Err(Error::BadShape(format!(
                "maxpool window {window} with padding {padding} is invalid"
            )));
        }
        let bad = |e: Error| Error::BadShape(format!("maxpool: {e}"));
        let oh = conv_output_extent(h, window, stride, padding).map_err(bad)?;
        let ow = conv_output_extent(w, window, stride, padding).map_err(bad)?;
        self.layers.push(LayerSpec::Maxpool {
            window,
            stride,
            padding,
        });
        self.shape = Shape::Spatial { c, h: oh, w: ow };
        Ok(self)
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(LayerSpec::Relu);
        self
    }

    pub fn dropout(mut self, ratio: f64) -> Result<Self> {
        DropoutState::new(ratio, Mode::Inference)?;
        self.layers.push(LayerSpec::Dropout { ratio });
        Ok(self)
    }

    pub fn flatten(mut self) -> Result<Self> {
        let (c, h, w) = self.spatial("flatten")?;
        self.layers.push(LayerSpec::Flatten);
        self.shape = Shape::Flat(c * h * w);
        Ok(self)
    }

    pub fn global_avg_pool(mut self) -> Result<Self> {
        let (c, _, _) = self.spatial("global_avg_pool")?;
        self.layers.push(LayerSpec::GlobalAvgPool);
        self.shape = Shape::Flat(c);
        Ok(self)
    }

    pub fn dense(mut self, name: &str, out_features: usize) -> Result<Self> {
        self.check_name(name)?;
        let Shape::Flat(in_features) = self.shape else {
            return Err(Error::BadShape(format!(
                "dense {name} needs a flat input, got {}; add flatten or global_avg_pool",
                self.shape.describe()
            )));
        };
        if out_features == 0 {
            return Err(Error::BadShape(format!("dense {name} has zero outputs")));
        }
        let w = he_normal(&mut self.rng, &[out_features, in_features], in_features);
        self.parameters.insert(format!("{name}.weight"), w);
        self.parameters
            .insert(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        self.layers.push(LayerSpec::Dense {
            name: name.into(),
            in_features,
            out_features,
        });
        self.shape = Shape::Flat(out_features);
        Ok(self)
    }

    pub fn inception(mut self, name: &str, config: InceptionConfig) -> Result<Self> {
        self.check_name(name)?;
        let (c, h, w) = self.spatial("inception")?;
        let module = inception_module(c, config)?;
        for conv in module.convs() {
            self.add_conv_params(
                &format!("{name}.{}", conv.suffix),
                conv.in_channels,
                conv.out_channels,
                conv.kernel,
            );
        }
        self.layers.push(LayerSpec::Inception {
            name: name.into(),
            module,
        });
        self.shape = Shape::Spatial {
            c: module.output_channels(),
            h,
            w,
        };
        Ok(self)
    }

    /// Finishes the graph; the last layer must emit `num_classes` features.
    pub fn build(self, num_classes: usize) -> Result<ModelGraph> {
        if self.shape != Shape::Flat(num_classes) || num_classes == 0 {
            return Err(Error::BadShape(format!(
                "graph ends with {}, expected {num_classes} class logits",
                self.shape.describe()
            )));
        }
        Ok(ModelGraph {
            layers: self.layers,
            parameters: self.parameters,
            input_shape: self.input_shape,
            num_classes,
            architecture: None,
        })
    }
}

/// Default dropout ratio of both mini architectures.
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// conv(16)/relu/pool → conv(32)/relu/pool → conv(64)/relu/pool → flatten →
/// dense(128)/relu → dropout(0.5) → dense(classes). All convs are 3×3 with
/// padding 1, all pools 2×2 stride 2.
pub fn build_mini_plainnet(num_classes: usize, input_shape: [usize; 3], seed: u64) -> Result<ModelGraph> {
    build_mini_plainnet_with_dropout(num_classes, input_shape, DEFAULT_DROPOUT, seed)
}

pub fn build_mini_plainnet_with_dropout(
    num_classes: usize,
    input_shape: [usize; 3],
    dropout_ratio: f64,
    seed: u64,
) -> Result<ModelGraph> {
    let mut g = GraphBuilder::new(input_shape, seed)?
        .conv("conv1", 16, 3, 1, 1)?
        .relu()
        .maxpool(2, 2, 0)?
        .conv("conv2", 32, 3, 1, 1)?
        .relu()
        .maxpool(2, 2, 0)?
        .conv("conv3", 64, 3, 1, 1)?
        .relu()
        .maxpool(2, 2, 0)?
        .flatten()?
        .dense("fc1", 128)?
        .relu()
        .dropout(dropout_ratio)?
        .dense("fc2", num_classes)?
        .build(num_classes)?;
    g.architecture = Some(Architecture::Plain);
    Ok(g)
}

/// Inception block settings of the mini inception network.
pub const INCEPTION_A: InceptionConfig = InceptionConfig::new(16, 16, 32, 8, 16, 16);
pub const INCEPTION_B: InceptionConfig = InceptionConfig::new(64, 96, 96, 32, 48, 64);

/// stem conv(16, 3×3)/relu/pool → inception A → pool → inception B →
/// global average pool → dropout(0.5) → dense(classes).
pub fn build_mini_inceptionnet(
    num_classes: usize,
    input_shape: [usize; 3],
    seed: u64,
) -> Result<ModelGraph> {
    build_mini_inceptionnet_with_dropout(num_classes, input_shape, DEFAULT_DROPOUT, seed)
}

pub fn build_mini_inceptionnet_with_dropout(
    num_classes: usize,
    input_shape: [usize; 3],
    dropout_ratio: f64,
    seed: u64,
) -> Result<ModelGraph> {
    let mut g = GraphBuilder::new(input_shape, seed)?
        .conv("stem", 16, 3, 1, 1)?
        .relu()
        .maxpool(2, 2, 0)?
        .inception("inc_a", INCEPTION_A)?
        .maxpool(2, 2, 0)?
        .inception("inc_b", INCEPTION_B)?
        .global_avg_pool()?
        .dropout(dropout_ratio)?
        .dense("fc", num_classes)?
        .build(num_classes)?;
    g.architecture = Some(Architecture::Inception);
    Ok(g)
}

/// Total number of scalar parameters.
pub fn count_parameters(model: &ModelGraph) -> usize {
    model.parameters.values().map(Tensor::len).sum()
}

enum LayerCache {
    Conv(Tensor),
    Pool(PoolIndices),
    Relu(Tensor),
    Dense(Tensor),
    Dropout(DropoutState),
    Flatten(Vec<usize>),
    GlobalAvgPool(Vec<usize>),
    Inception(Box<InceptionCache>),
}

/// Logits plus everything the backward pass needs.
pub struct ForwardPass {
    pub logits: Tensor,
    caches: Vec<LayerCache>,
}

impl ForwardPass {
    /// Every ReLU sign and max-pool choice made during the pass. Two passes
    /// with equal signatures lie on the same linear piece of the network.
    pub fn activation_signature(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for cache in &self.caches {
            match cache {
                LayerCache::Relu(x) => out.extend(x.data().iter().map(|&v| (v > 0.0) as usize)),
                LayerCache::Pool(idx) => out.extend_from_slice(&idx.argmax),
                LayerCache::Inception(c) => c.pattern(&mut out),
                _ => {}
            }
        }
        out
    }

    /// Keep-masks drawn by the dropout layers, in layer order.
    pub fn dropout_masks(&self) -> Vec<Vec<bool>> {
        self.caches
            .iter()
            .filter_map(|c| match c {
                LayerCache::Dropout(st) => st.mask().map(<[bool]>::to_vec),
                _ => None,
            })
            .collect()
    }
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ModelGraph {
    /// Reassembles a graph from stored parts, checking that `parameters`
    /// has exactly the names and shapes the architecture needs.
    pub fn with_parameters(mut self, parameters: BTreeMap<String, Tensor>) -> Result<Self> {
        if parameters.len() != self.parameters.len() {
            return Err(Error::BadShape(format!(
                "expected {} parameter tensors, got {}",
                self.parameters.len(),
                parameters.len()
            )));
        }
        for (name, t) in &parameters {
            match self.parameters.get(name) {
                Some(own) if own.shape() == t.shape() => {}
                Some(own) => {
                    return Err(Error::BadShape(format!(
                        "parameter {name}: expected shape {:?}, got {:?}",
                        own.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::BadShape(format!("unexpected parameter {name}"))),
            }
        }
        self.parameters = parameters;
        Ok(self)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn parameters(&self) -> &BTreeMap<String, Tensor> {
        &self.parameters
    }

    pub fn parameters_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.parameters
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn architecture(&self) -> Option<Architecture> {
        self.architecture
    }

    /// Dropout ratio of the first dropout layer, if any.
    pub fn dropout_ratio(&self) -> Option<f64> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::Dropout { ratio } => Some(*ratio),
            _ => None,
        })
    }

    fn param(&self, key: &str) -> Result<&Tensor> {
        self.parameters
            .get(key)
            .ok_or_else(|| Error::BadShape(format!("missing parameter {key}")))
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let (_, c, h, w) = batch.dims4()?;
        if [c, h, w] != self.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "model expects N×{:?} input, got {:?}",
                self.input_shape,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Logits for a batch. Training mode draws dropout masks from `seed`;
    /// inference mode ignores it.
    pub fn forward(&self, batch: &Tensor, mode: Mode, seed: u64) -> Result<Tensor> {
        Ok(self.forward_with_cache(batch, mode, seed)?.logits)
    }

    /// Softmax probabilities in inference mode.
    pub fn predict_probabilities(&self, batch: &Tensor) -> Result<Tensor> {
        softmax(&self.forward(batch, Mode::Inference, 0)?)
    }

    pub fn forward_with_cache(&self, batch: &Tensor, mode: Mode, seed: u64) -> Result<ForwardPass> {
        self.run_forward(batch, mode, seed, None)
    }

    /// Forward pass that reuses previously drawn dropout masks instead of
    /// sampling new ones.
    pub fn forward_with_masks(&self, batch: &Tensor, masks: &[Vec<bool>]) -> Result<ForwardPass> {
        self.run_forward(batch, Mode::Training, 0, Some(masks))
    }

    fn run_forward(
        &self,
        batch: &Tensor,
        mode: Mode,
        seed: u64,
        masks: Option<&[Vec<bool>]>,
    ) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut dropout_index = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = match layer {
                LayerSpec::Conv {
                    name,
                    stride,
                    padding,
                    ..
                } => {
                    let w = self.param(&format!("{name}.weight"))?;
                    let b = self.param(&format!("{name}.bias"))?;
                    (conv2d(&x, w, b, *stride, *padding)?, LayerCache::Conv(x))
                }
                LayerSpec::Maxpool {
                    window,
                    stride,
                    padding,
                } => {
                    let (y, idx) = maxpool2d(&x, *window, *stride, *padding)?;
                    (y, LayerCache::Pool(idx))
                }
                LayerSpec::Relu => (relu(&x), LayerCache::Relu(x)),
                LayerSpec::Dense { name, .. } => {
                    let w = self.param(&format!("{name}.weight"))?;
                    let b = self.param(&format!("{name}.bias"))?;
                    (dense(&x, w, b)?, LayerCache::Dense(x))
                }
                LayerSpec::Dropout { ratio } => {
                    let mut state = DropoutState::new(*ratio, mode)?;
                    let y = match masks {
                        Some(masks) => {
                            let mask = masks.get(dropout_index).ok_or_else(|| {
                                Error::ShapeMismatch("fewer dropout masks than layers".into())
                            })?;
                            if mask.len() != x.len() {
                                return Err(Error::ShapeMismatch(format!(
                                    "dropout mask has {} entries for {} activations",
                                    mask.len(),
                                    x.len()
                                )));
                            }
                            state.set_mask(mask.clone());
                            crate::tensor::dropout_with_mask(&x, &state)
                        }
                        None => dropout(&x, &mut state, layer_seed(seed, i)),
                    };
                    dropout_index += 1;
                    (y, LayerCache::Dropout(state))
                }
                LayerSpec::Flatten => {
                    let shape = x.shape().to_vec();
                    let n = shape[0];
                    let f = x.len() / n;
                    (x.reshape(&[n, f])?, LayerCache::Flatten(shape))
                }
                LayerSpec::GlobalAvgPool => {
                    let shape = x.shape().to_vec();
                    (global_avg_pool(&x)?, LayerCache::GlobalAvgPool(shape))
                }
                LayerSpec::Inception { name, module } => {
                    let (y, cache) = module.forward(name, &self.parameters, &x)?;
                    (y, LayerCache::Inception(Box::new(cache)))
                }
            };
            caches.push(cache);
            x = y;
        }
        Ok(ForwardPass { logits: x, caches })
    }

    /// Gradients of a scalar loss with respect to every parameter, given the
    /// loss gradient at the logits.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Tensor) -> Result<Gradients> {
        Ok(self.backward_with_input(pass, grad_logits)?.0)
    }

    /// Like [`backward`](Self::backward), also returning the input gradient.
    pub fn backward_with_input(
        &self,
        pass: &ForwardPass,
        grad_logits: &Tensor,
    ) -> Result<(Gradients, Tensor)> {
        if grad_logits.shape() != pass.logits.shape() {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient {:?} does not match logits {:?}",
                grad_logits.shape(),
                pass.logits.shape()
            )));
        }
        let mut grads = Gradients::new();
        let mut g = grad_logits.clone();
        for (layer, cache) in self.layers.iter().zip(&pass.caches).rev() {
            g = match (layer, cache) {
                (
                    LayerSpec::Conv {
                        name,
                        stride,
                        padding,
                        ..
                    },
                    LayerCache::Conv(input),
                ) => {
                    let w = self.param(&format!("{name}.weight"))?;
                    let cg = conv2d_backward(&g, input, w, *stride, *padding)?;
                    grads.insert(format!("{name}.weight"), cg.weights);
                    grads.insert(format!("{name}.bias"), cg.bias);
                    cg.input
                }
                (LayerSpec::Maxpool { .. }, LayerCache::Pool(idx)) => maxpool2d_backward(&g, idx)?,
                (LayerSpec::Relu, LayerCache::Relu(input)) => relu_backward(&g, input)?,
                (LayerSpec::Dense { name, .. }, LayerCache::Dense(input)) => {
                    let w = self.param(&format!("{name}.weight"))?;
                    let dg = dense_backward(&g, input, w)?;
                    grads.insert(format!("{name}.weight"), dg.weights);
                    grads.insert(format!("{name}.bias"), dg.bias);
                    dg.input
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout(state)) => {
                    dropout_backward(&g, state)?
                }
                (LayerSpec::Flatten, LayerCache::Flatten(shape)) => g.reshape(shape)?,
                (LayerSpec::GlobalAvgPool, LayerCache::GlobalAvgPool(shape)) => {
                    global_avg_pool_backward(&g, shape)?
                }
                (LayerSpec::Inception { name, module }, LayerCache::Inception(cache)) => {
                    module.backward(name, &self.parameters, cache, &g, &mut grads)?
                }
                _ => unreachable!("cache kinds are produced in layer order"),
            };
        }
        Ok((grads, g))
    }
}
