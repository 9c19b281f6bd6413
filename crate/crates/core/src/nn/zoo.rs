//! Model construction and parameter initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::layers::{BasicBlock, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Relu};
use super::model::{ArchSpec, Layer, Model};
use super::weight::WeightMatrix;
use crate::error::{Error, Result};
use crate::nn::Parameter;

/// Builds the layer stack for `arch` with zero-valued parameters.
pub fn build(arch: &ArchSpec) -> Result<Model> {
    let layers = match arch {
        ArchSpec::Mlp {
            input_shape,
            hidden,
            classes,
        } => {
            let inputs: usize = input_shape.iter().product();
            if input_shape.is_empty() || inputs == 0 || *classes == 0 || hidden.contains(&0) {
                return Err(Error::Config(format!(
                    "MLP has a zero-sized layer (input {input_shape:?}, hidden {hidden:?}, classes {classes})"
                )));
            }
            let mut layers = vec![Layer::Flatten(Flatten::default())];
            let mut width = inputs;
            for &h in hidden {
                layers.push(Layer::Dense(Dense::new(width, h)));
                layers.push(Layer::Relu(Relu::default()));
                width = h;
            }
            layers.push(Layer::Dense(Dense::new(width, *classes)));
            layers
        }
        ArchSpec::ResNet {
            in_channels,
            image_size,
            width,
            blocks_per_segment,
            classes,
        } => {
            if [*in_channels, *image_size, *width, *blocks_per_segment, *classes].contains(&0) {
                return Err(Error::Config(format!("residual network has a zero-sized dimension: {arch:?}")));
            }
            if *image_size < 4 {
                return Err(Error::Config(format!(
                    "image size {image_size} too small for two stride-2 segments"
                )));
            }
            let mut layers = vec![
                Layer::Conv2d(Conv2d::new(*in_channels, *width, 3, 1, 1, false)),
                Layer::BatchNorm(BatchNorm2d::new(*width)),
                Layer::Relu(Relu::default()),
            ];
            let mut channels = *width;
            for segment in 0..3 {
                let out = width << segment;
                for block in 0..*blocks_per_segment {
                    let stride = if segment > 0 && block == 0 { 2 } else { 1 };
                    layers.push(Layer::BasicBlock(BasicBlock::new(channels, out, stride, segment)));
                    channels = out;
                }
            }
            layers.push(Layer::GlobalAvgPool(GlobalAvgPool::default()));
            layers.push(Layer::Dense(Dense::new(channels, *classes)));
            layers
        }
    };
    Ok(Model::new(arch.clone(), layers))
}

fn uniform(p: &mut Parameter, bound: f64, rng: &mut ChaCha8Rng) {
    for v in p.value.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

fn init_weight(w: &mut WeightMatrix, fan_in: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    match w {
        WeightMatrix::Dense(p) => {
            if fan_in == 0 {
                return Err(Error::Config("layer with zero fan-in".into()));
            }
            uniform(p, 1.0 / (fan_in as f64).sqrt(), rng);
        }
        WeightMatrix::Butterfly(chain) => chain.init_uniform(rng),
    }
    Ok(())
}

fn init_conv(conv: &mut Conv2d, rng: &mut ChaCha8Rng) -> Result<()> {
    let fan_in = conv.fan_in();
    init_weight(&mut conv.weight, fan_in, rng)?;
    if let Some(b) = conv.bias.as_mut() {
        uniform(b, 1.0 / (fan_in as f64).sqrt(), rng);
    }
    Ok(())
}

fn init_bn(bn: &mut BatchNorm2d) {
    bn.gamma.value.fill(1.0);
    bn.beta.value.fill(0.0);
    bn.running_mean.fill(0.0);
    bn.running_var.fill(1.0);
}

/// Draws every weight (and bias) uniformly on `(-1/√n, 1/√n)`, `n` being the
/// fan-in: input features for dense layers, `in_channels·k·k` for
/// convolutions. Butterfly factors use their own fan-in `c` (see
/// [`crate::butterfly::ButterflyFactor::init_uniform`]). Batch norm starts at
/// scale 1, shift 0. Masks are re-applied afterwards.
pub fn init_params(model: &mut Model, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in model.layers_mut() {
        match layer {
            Layer::Dense(d) => {
                let fan_in = d.inputs();
                init_weight(&mut d.weight, fan_in, &mut rng)?;
                uniform(&mut d.bias, 1.0 / (fan_in as f64).sqrt(), &mut rng);
            }
            Layer::Conv2d(c) => init_conv(c, &mut rng)?,
            Layer::BatchNorm(bn) => init_bn(bn),
            Layer::BasicBlock(b) => {
                init_conv(&mut b.conv1, &mut rng)?;
                init_bn(&mut b.bn1);
                init_conv(&mut b.conv2, &mut rng)?;
                init_bn(&mut b.bn2);
                if let Some((conv, bn)) = b.shortcut.as_mut() {
                    init_conv(conv, &mut rng)?;
                    init_bn(bn);
                }
            }
            Layer::Relu(_) | Layer::GlobalAvgPool(_) | Layer::Flatten(_) => {}
        }
    }
    model.apply_masks();
    Ok(())
}

/// Builds and initializes in one step.
pub fn build_initialized(arch: &ArchSpec, seed: u64) -> Result<Model> {
    let mut m = build(arch)?;
    init_params(&mut m, seed)?;
    Ok(m)
}
