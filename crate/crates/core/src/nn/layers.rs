//! Layer implementations. Every layer offers an inference forward (`&self`),
//! a training forward that records what backward needs, and a backward pass
//! that accumulates parameter gradients and returns the input gradient.

use super::weight::{WeightCache, WeightMatrix};
use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Tensor;

pub(crate) fn no_forward(layer: &str) -> Error {
    Error::Usage(format!("{layer}: backward called without a training forward pass"))
}

fn expect_rank(layer: &str, x: &Tensor, rank: usize) -> Result<()> {
    if x.shape().len() != rank {
        return Err(Error::shape(
            layer,
            format!("rank-{rank} input"),
            x.shape(),
        ));
    }
    Ok(())
}

/// Fully connected layer `y = W x + b`. The weight may be butterfly-factorized.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: WeightMatrix,
    pub bias: Parameter,
    cache: Option<(Vec<f64>, usize, WeightCache)>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: WeightMatrix::dense(outputs, inputs, true),
            bias: Parameter::zeros(&[outputs], false),
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        expect_rank("dense", x, 2)?;
        if x.shape()[1] != self.inputs() {
            return Err(Error::shape("dense", [x.rows(), self.inputs()], x.shape()));
        }
        Ok(x.rows())
    }

    fn add_bias(&self, y: &mut [f64]) {
        let b = self.bias.value.data();
        for row in y.chunks_mut(b.len()) {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check(x)?;
        let mut y = self.weight.apply_rows(x.data(), n);
        self.add_bias(&mut y);
        Tensor::from_vec(&[n, self.outputs()], y)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let n = self.check(x)?;
        let (mut y, wc) = self.weight.forward_rows(x.data(), n);
        self.add_bias(&mut y);
        self.cache = Some((x.data().to_vec(), n, wc));
        Tensor::from_vec(&[n, self.outputs()], y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (x, n, wc) = self.cache.take().ok_or_else(|| no_forward("dense"))?;
        let outs = self.outputs();
        let gb = self.bias.grad_mut();
        for row in dy.data().chunks(outs) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        let dx = self.weight.backward_rows(&x, &wc, dy.data(), n);
        Tensor::from_vec(&[n, self.inputs()], dx)
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        self.weight.collect(&format!("{prefix}.weight"), out);
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn collect_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        self.weight.collect_mut(&format!("{prefix}.weight"), out);
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

#[derive(Clone, Debug)]
struct ConvCache {
    patches: Vec<f64>,
    n: usize,
    h: usize,
    w: usize,
    weight: WeightCache,
}

/// 2-d convolution over `(batch, channels, height, width)` inputs, computed
/// as `W · patches` where `W` is `out_channels × (in_channels·k·k)` with
/// input channel outermost in each kernel row.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: WeightMatrix,
    pub bias: Option<Parameter>,
    cache: Option<ConvCache>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: WeightMatrix::dense(out_channels, in_channels * kernel * kernel, true),
            bias: bias.then(|| Parameter::zeros(&[out_channels], false)),
            cache: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.padding - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        expect_rank("conv2d", x, 4)?;
        let s = x.shape();
        if s[1] != self.in_channels || s[2] + 2 * self.padding < self.kernel || s[3] + 2 * self.padding < self.kernel {
            return Err(Error::shape(
                "conv2d",
                format!("[n, {}, h >= {}, w >= {}]", self.in_channels, self.kernel, self.kernel),
                s,
            ));
        }
        Ok((s[0], s[2], s[3]))
    }

    fn im2col(&self, x: &[f64], n: usize, h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let cols = self.fan_in();
        let mut out = vec![0.0; n * oh * ow * cols];
        let pad = self.padding as isize;
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * cols;
                    for c in 0..self.in_channels {
                        let plane = &x[(b * self.in_channels + c) * h * w..][..h * w];
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                out[row + (c * k + ky) * k + kx] = plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, dpatches: &[f64], n: usize, h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let cols = self.fan_in();
        let mut dx = vec![0.0; n * self.in_channels * h * w];
        let pad = self.padding as isize;
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * cols;
                    for c in 0..self.in_channels {
                        let base = (b * self.in_channels + c) * h * w;
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dx[base + iy as usize * w + ix as usize] +=
                                    dpatches[row + (c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Rows `(b, y, x)` × out-channels  →  `(b, out, y, x)` plus bias.
    fn to_nchw(&self, rows: &[f64], n: usize, oh: usize, ow: usize) -> Vec<f64> {
        let oc = self.out_channels;
        let mut out = vec![0.0; n * oc * oh * ow];
        for b in 0..n {
            for p in 0..oh * ow {
                let src = &rows[(b * oh * ow + p) * oc..][..oc];
                for (o, v) in src.iter().enumerate() {
                    out[(b * oc + o) * oh * ow + p] = *v;
                }
            }
        }
        if let Some(bias) = &self.bias {
            for b in 0..n {
                for (o, bv) in bias.value.data().iter().enumerate() {
                    out[(b * oc + o) * oh * ow..][..oh * ow]
                        .iter_mut()
                        .for_each(|v| *v += bv);
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, h, w) = self.check(x)?;
        let (oh, ow) = self.output_hw(h, w);
        let patches = self.im2col(x.data(), n, h, w);
        let rows = self.weight.apply_rows(&patches, n * oh * ow);
        Tensor::from_vec(&[n, self.out_channels, oh, ow], self.to_nchw(&rows, n, oh, ow))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (n, h, w) = self.check(x)?;
        let (oh, ow) = self.output_hw(h, w);
        let patches = self.im2col(x.data(), n, h, w);
        let (rows, wc) = self.weight.forward_rows(&patches, n * oh * ow);
        let out = self.to_nchw(&rows, n, oh, ow);
        self.cache = Some(ConvCache {
            patches,
            n,
            h,
            w,
            weight: wc,
        });
        Tensor::from_vec(&[n, self.out_channels, oh, ow], out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| no_forward("conv2d"))?;
        let ConvCache { patches, n, h, w, weight } = cache;
        let (oh, ow) = self.output_hw(h, w);
        let oc = self.out_channels;
        let g = dy.data();
        let mut drows = vec![0.0; n * oh * ow * oc];
        for b in 0..n {
            for o in 0..oc {
                let plane = &g[(b * oc + o) * oh * ow..][..oh * ow];
                for (p, v) in plane.iter().enumerate() {
                    drows[(b * oh * ow + p) * oc + o] = *v;
                }
            }
        }
        if let Some(bias) = self.bias.as_mut() {
            let gb = bias.grad_mut();
            for b in 0..n {
                for (o, gbo) in gb.iter_mut().enumerate() {
                    *gbo += g[(b * oc + o) * oh * ow..][..oh * ow].iter().sum::<f64>();
                }
            }
        }
        let dpatches = self.weight.backward_rows(&patches, &weight, &drows, n * oh * ow);
        let dx = self.col2im(&dpatches, n, h, w);
        Tensor::from_vec(&[n, self.in_channels, h, w], dx)
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        self.weight.collect(&format!("{prefix}.weight"), out);
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b));
        }
    }

    pub(crate) fn collect_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        self.weight.collect_mut(&format!("{prefix}.weight"), out);
        if let Some(b) = self.bias.as_mut() {
            out.push((format!("{prefix}.bias"), b));
        }
    }
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Batch normalization over the channel axis of `(n, C)` or `(n, C, H, W)` inputs.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Parameter::new(Tensor::full(&[channels], 1.0), false),
            beta: Parameter::zeros(&[channels], false),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if (s.len() != 2 && s.len() != 4) || s[1] != self.channels() {
            return Err(Error::shape(
                "batchnorm",
                format!("[n, {}, ..]", self.channels()),
                s,
            ));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, hw) = self.dims(x)?;
        let c = self.channels();
        let mut y = x.clone();
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let (rm, rv) = (self.running_mean.data(), self.running_var.data());
        for s in 0..n {
            for ch in 0..c {
                let inv = 1.0 / (rv[ch] + self.eps).sqrt();
                for v in &mut y.data_mut()[(s * c + ch) * hw..][..hw] {
                    *v = g[ch] * (*v - rm[ch]) * inv + b[ch];
                }
            }
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (n, hw) = self.dims(x)?;
        let c = self.channels();
        let count = (n * hw) as f64;
        let data = x.data();
        let mut xhat = vec![0.0; data.len()];
        let mut inv_std = vec![0.0; c];
        let mut y = vec![0.0; data.len()];
        for ch in 0..c {
            let mut mean = 0.0;
            for s in 0..n {
                mean += data[(s * c + ch) * hw..][..hw].iter().sum::<f64>();
            }
            mean /= count;
            let mut var = 0.0;
            for s in 0..n {
                var += data[(s * c + ch) * hw..][..hw]
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>();
            }
            var /= count;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = inv;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    xhat[i] = (data[i] - mean) * inv;
                    y[i] = g * xhat[i] + b;
                }
            }
            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * unbiased;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Tensor::from_vec(x.shape(), y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let BnCache { xhat, inv_std } = self.cache.take().ok_or_else(|| no_forward("batchnorm"))?;
        let (n, hw) = self.dims(dy)?;
        let c = self.channels();
        let count = (n * hw) as f64;
        let g = dy.data();
        let mut dx = vec![0.0; g.len()];
        let gamma = self.gamma.value.data().to_vec();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    sum_dy += g[i];
                    sum_dy_xhat += g[i] * xhat[i];
                }
            }
            dgamma[ch] = sum_dy_xhat;
            dbeta[ch] = sum_dy;
            let (mdy, mdyx) = (sum_dy / count, sum_dy_xhat / count);
            let scale = gamma[ch] * inv_std[ch];
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    dx[i] = scale * (g[i] - mdy - xhat[i] * mdyx);
                }
            }
        }
        self.gamma.grad_mut().iter_mut().zip(&dgamma).for_each(|(a, b)| *a += b);
        self.beta.grad_mut().iter_mut().zip(&dbeta).for_each(|(a, b)| *a += b);
        Tensor::from_vec(dy.shape(), dx)
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    pub(crate) fn collect_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }

    pub(crate) fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.running_mean"), &self.running_mean));
        out.push((format!("{prefix}.running_var"), &self.running_var));
    }

    pub(crate) fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.running_mean"), &mut self.running_mean));
        out.push((format!("{prefix}.running_var"), &mut self.running_var));
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        self.forward(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mask = self.mask.take().ok_or_else(|| no_forward("relu"))?;
        let mut dx = dy.clone();
        for (v, &on) in dx.data_mut().iter_mut().zip(&mask) {
            if !on {
                *v = 0.0;
            }
        }
        Ok(dx)
    }

    pub(crate) fn pattern(&self, out: &mut Vec<bool>) {
        if let Some(m) = &self.mask {
            out.extend_from_slice(m);
        }
    }
}

/// Mean over the spatial axes: `(n, C, H, W) → (n, C)`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        expect_rank("avgpool", x, 4)?;
        let s = x.shape();
        let hw = s[2] * s[3];
        let out = x
            .data()
            .chunks(hw)
            .map(|p| p.iter().sum::<f64>() / hw as f64)
            .collect();
        Tensor::from_vec(&[s[0], s[1]], out)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let s = self.input_shape.take().ok_or_else(|| no_forward("avgpool"))?;
        let hw = s[2] * s[3];
        let mut dx = Vec::with_capacity(s.iter().product());
        for &g in dy.data() {
            dx.extend(std::iter::repeat_n(g / hw as f64, hw));
        }
        Tensor::from_vec(&s, dx)
    }
}

/// `(n, ...) → (n, prod(...))`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, w) = (x.rows(), x.row_len());
        x.clone().reshape(&[n, w])
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.input_shape = Some(x.shape().to_vec());
        self.forward(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let s = self.input_shape.take().ok_or_else(|| no_forward("flatten"))?;
        dy.clone().reshape(&s)
    }
}

/// Two 3×3 convolutions with batch norm around a residual connection:
/// `relu(bn2(conv2(relu(bn1(conv1 x)))) + shortcut(x))`. The shortcut is the
/// identity, or a 1×1 convolution with batch norm when the shape changes.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    relu1: Relu,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub shortcut: Option<(Conv2d, BatchNorm2d)>,
    relu_out: Relu,
    /// Index of the segment (group of blocks with equal width) this block belongs to.
    pub segment: usize,
}

impl BasicBlock {
    pub fn new(in_channels: usize, out_channels: usize, stride: usize, segment: usize) -> Self {
        let shortcut = (stride != 1 || in_channels != out_channels).then(|| {
            (
                Conv2d::new(in_channels, out_channels, 1, stride, 0, false),
                BatchNorm2d::new(out_channels),
            )
        });
        BasicBlock {
            conv1: Conv2d::new(in_channels, out_channels, 3, stride, 1, false),
            bn1: BatchNorm2d::new(out_channels),
            relu1: Relu::default(),
            conv2: Conv2d::new(out_channels, out_channels, 3, 1, 1, false),
            bn2: BatchNorm2d::new(out_channels),
            shortcut,
            relu_out: Relu::default(),
            segment,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?;
        let h = self.relu1.forward(&self.bn1.forward(&h)?)?;
        let mut h = self.bn2.forward(&self.conv2.forward(&h)?)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?)?,
            None => x.clone(),
        };
        if skip.shape() != h.shape() {
            return Err(Error::shape("basic block shortcut", h.shape(), skip.shape()));
        }
        h.data_mut().iter_mut().zip(skip.data()).for_each(|(a, b)| *a += b);
        self.relu_out.forward(&h)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward_train(x)?;
        let h = self.bn1.forward_train(&h)?;
        let h = self.relu1.forward_train(&h)?;
        let h = self.conv2.forward_train(&h)?;
        let mut h = self.bn2.forward_train(&h)?;
        let skip = match self.shortcut.as_mut() {
            Some((conv, bn)) => bn.forward_train(&conv.forward_train(x)?)?,
            None => x.clone(),
        };
        if skip.shape() != h.shape() {
            return Err(Error::shape("basic block shortcut", h.shape(), skip.shape()));
        }
        h.data_mut().iter_mut().zip(skip.data()).for_each(|(a, b)| *a += b);
        self.relu_out.forward_train(&h)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let g = self.relu_out.backward(dy)?;
        let gm = self.bn2.backward(&g)?;
        let gm = self.conv2.backward(&gm)?;
        let gm = self.relu1.backward(&gm)?;
        let gm = self.bn1.backward(&gm)?;
        let mut dx = self.conv1.backward(&gm)?;
        let gs = match self.shortcut.as_mut() {
            Some((conv, bn)) => conv.backward(&bn.backward(&g)?)?,
            None => g,
        };
        dx.data_mut().iter_mut().zip(gs.data()).for_each(|(a, b)| *a += b);
        Ok(dx)
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        self.conv1.collect(&format!("{prefix}.conv1"), out);
        self.bn1.collect(&format!("{prefix}.bn1"), out);
        self.conv2.collect(&format!("{prefix}.conv2"), out);
        self.bn2.collect(&format!("{prefix}.bn2"), out);
        if let Some((conv, bn)) = &self.shortcut {
            conv.collect(&format!("{prefix}.shortcut.conv"), out);
            bn.collect(&format!("{prefix}.shortcut.bn"), out);
        }
    }

    pub(crate) fn collect_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        self.conv1.collect_mut(&format!("{prefix}.conv1"), out);
        self.bn1.collect_mut(&format!("{prefix}.bn1"), out);
        self.conv2.collect_mut(&format!("{prefix}.conv2"), out);
        self.bn2.collect_mut(&format!("{prefix}.bn2"), out);
        if let Some((conv, bn)) = self.shortcut.as_mut() {
            conv.collect_mut(&format!("{prefix}.shortcut.conv"), out);
            bn.collect_mut(&format!("{prefix}.shortcut.bn"), out);
        }
    }

    pub(crate) fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.bn1.buffers(&format!("{prefix}.bn1"), out);
        self.bn2.buffers(&format!("{prefix}.bn2"), out);
        if let Some((_, bn)) = &self.shortcut {
            bn.buffers(&format!("{prefix}.shortcut.bn"), out);
        }
    }

    pub(crate) fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.bn1.buffers_mut(&format!("{prefix}.bn1"), out);
        self.bn2.buffers_mut(&format!("{prefix}.bn2"), out);
        if let Some((_, bn)) = self.shortcut.as_mut() {
            bn.buffers_mut(&format!("{prefix}.shortcut.bn"), out);
        }
    }

    pub(crate) fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.relu1.pattern(out);
        self.relu_out.pattern(out);
    }
}
