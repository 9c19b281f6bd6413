use serde::{Deserialize, Serialize};

use super::layers::{BasicBlock, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Relu};
use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Tensor;

/// Architecture descriptor from which a model can be rebuilt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArchSpec {
    /// Flatten, then dense + ReLU for each hidden width, then a dense classifier.
    Mlp {
        input_shape: Vec<usize>,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// CIFAR-style residual network: 3×3 stem, three segments of
    /// `blocks_per_segment` basic blocks with widths `w, 2w, 4w` (stride 2
    /// entering segments 2 and 3), global average pooling, dense classifier.
    /// `width = 16, blocks_per_segment = 3` is ResNet-20.
    ResNet {
        in_channels: usize,
        image_size: usize,
        width: usize,
        blocks_per_segment: usize,
        classes: usize,
    },
}

impl ArchSpec {
    pub fn resnet20(classes: usize) -> Self {
        ArchSpec::ResNet {
            in_channels: 3,
            image_size: 32,
            width: 16,
            blocks_per_segment: 3,
            classes,
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            ArchSpec::Mlp { input_shape, .. } => input_shape.clone(),
            ArchSpec::ResNet {
                in_channels,
                image_size,
                ..
            } => vec![*in_channels, *image_size, *image_size],
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ArchSpec::Mlp { classes, .. } | ArchSpec::ResNet { classes, .. } => *classes,
        }
    }
}

/// Butterfly substitution applied on top of an architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ButterflySpec {
    /// Number of trailing segments whose convolutions are substituted.
    pub segments: usize,
    /// Number of factors per substituted weight matrix.
    pub factors: usize,
}

#[derive(Clone, Debug)]
// blocks dominate the size; layers are few and long-lived, so no boxing
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    BatchNorm(BatchNorm2d),
    Relu(Relu),
    GlobalAvgPool(GlobalAvgPool),
    Flatten(Flatten),
    BasicBlock(BasicBlock),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu(_) => "relu",
            Layer::GlobalAvgPool(_) => "avgpool",
            Layer::Flatten(_) => "flatten",
            Layer::BasicBlock(_) => "basic-block",
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2d(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::GlobalAvgPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::BasicBlock(l) => l.forward(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward_train(x),
            Layer::Conv2d(l) => l.forward_train(x),
            Layer::BatchNorm(l) => l.forward_train(x),
            Layer::Relu(l) => l.forward_train(x),
            Layer::GlobalAvgPool(l) => l.forward_train(x),
            Layer::Flatten(l) => l.forward_train(x),
            Layer::BasicBlock(l) => l.forward_train(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.backward(dy),
            Layer::Conv2d(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::GlobalAvgPool(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::BasicBlock(l) => l.backward(dy),
        }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        match self {
            Layer::Dense(l) => l.collect(prefix, out),
            Layer::Conv2d(l) => l.collect(prefix, out),
            Layer::BatchNorm(l) => l.collect(prefix, out),
            Layer::BasicBlock(l) => l.collect(prefix, out),
            Layer::Relu(_) | Layer::GlobalAvgPool(_) | Layer::Flatten(_) => {}
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        match self {
            Layer::Dense(l) => l.collect_mut(prefix, out),
            Layer::Conv2d(l) => l.collect_mut(prefix, out),
            Layer::BatchNorm(l) => l.collect_mut(prefix, out),
            Layer::BasicBlock(l) => l.collect_mut(prefix, out),
            Layer::Relu(_) | Layer::GlobalAvgPool(_) | Layer::Flatten(_) => {}
        }
    }
}

/// Named tensors (parameters, then buffers) capturing a model's full state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub tensors: Vec<(String, Tensor)>,
}

/// An ordered stack of layers with named parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub(crate) arch: ArchSpec,
    pub(crate) butterfly: Option<ButterflySpec>,
    pub(crate) layers: Vec<Layer>,
}

fn rename_shape_error(e: Error, index: usize, kind: &str) -> Error {
    match e {
        Error::Shape {
            layer,
            expected,
            got,
        } => Error::Shape {
            layer: format!("layer {index} ({kind}): {layer}"),
            expected,
            got,
        },
        other => other,
    }
}

impl Model {
    pub fn new(arch: ArchSpec, layers: Vec<Layer>) -> Self {
        Model {
            arch,
            butterfly: None,
            layers,
        }
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn butterfly(&self) -> Option<ButterflySpec> {
        self.butterfly
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.arch.input_shape()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let expected = self.input_shape();
        if x.shape().len() != expected.len() + 1 || x.shape()[1..] != expected[..] {
            let mut want = vec![x.rows()];
            want.extend(&expected);
            return Err(Error::shape("model input", want, x.shape()));
        }
        Ok(())
    }

    /// Inference pass (batch-norm uses running statistics). Returns logits.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h).map_err(|e| rename_shape_error(e, i, layer.kind()))?;
        }
        Ok(h)
    }

    /// Training pass: batch statistics, caches kept for [`Model::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            h = layer
                .forward_train(&h)
                .map_err(|e| rename_shape_error(e, i, kind))?;
        }
        Ok(h)
    }

    /// Back-propagates `dloss/dlogits`, accumulating into parameter gradients.
    /// Gradients at masked positions are zero. Returns the input gradient.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        for (_, p) in self.params_mut() {
            p.mask_grad();
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.collect(&i.to_string(), &mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.collect_mut(&i.to_string(), &mut out);
        }
        out
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let p = i.to_string();
            match l {
                Layer::BatchNorm(bn) => bn.buffers(&p, &mut out),
                Layer::BasicBlock(b) => b.buffers(&p, &mut out),
                _ => {}
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = i.to_string();
            match l {
                Layer::BatchNorm(bn) => bn.buffers_mut(&p, &mut out),
                Layer::BasicBlock(b) => b.buffers_mut(&p, &mut out),
                _ => {}
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn apply_masks(&mut self) {
        for (_, p) in self.params_mut() {
            p.apply_mask();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// ReLU on/off pattern of the last training forward pass.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Relu(r) => r.pattern(&mut out),
                Layer::BasicBlock(b) => b.relu_pattern(&mut out),
                _ => {}
            }
        }
        out
    }

    /// Layer indices of the basic blocks of each segment, in order.
    ///
    /// Fails if a segment is not made of consecutive blocks of equal width.
    pub fn segments(&self) -> Result<Vec<Vec<usize>>> {
        let mut segs: Vec<Vec<usize>> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, l) in self.layers.iter().enumerate() {
            let Layer::BasicBlock(b) = l else { continue };
            match last {
                Some((seg, prev)) if seg == b.segment => {
                    if prev + 1 != i {
                        return Err(Error::Config(format!(
                            "segment {seg} blocks are not consecutive"
                        )));
                    }
                    segs.last_mut().expect("open segment").push(i);
                }
                _ => {
                    if b.segment != segs.len() {
                        return Err(Error::Config(format!(
                            "segment index {} out of order",
                            b.segment
                        )));
                    }
                    segs.push(vec![i]);
                }
            }
            last = Some((b.segment, i));
        }
        for seg in &segs {
            let widths: Vec<usize> = seg
                .iter()
                .map(|&i| match &self.layers[i] {
                    Layer::BasicBlock(b) => b.out_channels(),
                    _ => unreachable!(),
                })
                .collect();
            if widths.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::Config(format!(
                    "segment with unequal filter counts {widths:?}"
                )));
            }
        }
        Ok(segs)
    }

    pub fn state(&self) -> ModelState {
        let mut tensors: Vec<(String, Tensor)> = self
            .params()
            .into_iter()
            .map(|(n, p)| (n, p.value.clone()))
            .collect();
        tensors.extend(self.buffers().into_iter().map(|(n, t)| (n, t.clone())));
        ModelState { tensors }
    }

    /// Restores values from `state`, which must match this model's layout.
    /// Nothing is modified when the layout differs.
    pub fn load_state(&mut self, state: &ModelState) -> Result<()> {
        let layout: Vec<(String, Vec<usize>)> = self
            .params()
            .into_iter()
            .map(|(n, p)| (n, p.value.shape().to_vec()))
            .chain(self.buffers().into_iter().map(|(n, t)| (n, t.shape().to_vec())))
            .collect();
        if layout.len() != state.tensors.len() {
            return Err(Error::shape(
                "model state",
                format!("{} tensors", layout.len()),
                state.tensors.len(),
            ));
        }
        for ((name, shape), (sname, src)) in layout.iter().zip(&state.tensors) {
            if name != sname || shape[..] != *src.shape() {
                return Err(Error::shape(
                    format!("model state entry {name}"),
                    shape,
                    format!("{sname} {:?}", src.shape()),
                ));
            }
        }
        let n_params = self.params().len();
        let (ps, bs) = state.tensors.split_at(n_params);
        for ((_, p), (_, src)) in self.params_mut().into_iter().zip(ps) {
            p.value.data_mut().copy_from_slice(src.data());
        }
        for ((_, dst), (_, src)) in self.buffers_mut().into_iter().zip(bs) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
