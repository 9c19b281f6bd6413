use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chain::ButterflyChain;
use super::select::{select_min_param_chain, ChainSpec};
use crate::error::{Error, Result};
use crate::nn::layers::Conv2d;
use crate::nn::{ButterflySpec, Layer, Model, WeightMatrix};

fn chain_for(
    conv: &Conv2d,
    factors: usize,
    cache: &mut BTreeMap<(usize, usize), ChainSpec>,
) -> Result<ButterflyChain> {
    let key = (conv.weight.rows(), conv.weight.cols());
    if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(key) {
        e.insert(select_min_param_chain(key.0, key.1, factors)?);
    }
    Ok(ButterflyChain::from_spec(&cache[&key]))
}

/// Replaces the 3×3 convolution weights of the basic blocks in the last
/// `segments` segments by zero-valued minimum-parameter monotone chains of
/// `factors` factors. Projection shortcuts stay dense. Each kernel matrix is
/// `out_channels × (in_channels·k·k)`.
pub(crate) fn apply_butterfly_structure(model: &mut Model, spec: ButterflySpec) -> Result<()> {
    let segs = model.segments()?;
    if spec.segments > segs.len() {
        return Err(Error::Config(format!(
            "cannot substitute {} segments: model has {}",
            spec.segments,
            segs.len()
        )));
    }
    if spec.segments == 0 {
        return Ok(());
    }
    if spec.factors == 0 {
        return Err(Error::Config("butterfly substitution needs at least one factor".into()));
    }
    let mut cache = BTreeMap::new();
    for seg in &segs[segs.len() - spec.segments..] {
        for &i in seg {
            let Layer::BasicBlock(block) = &mut model.layers_mut()[i] else {
                unreachable!("segment entries are basic blocks")
            };
            for conv in [&mut block.conv1, &mut block.conv2] {
                let chain = chain_for(conv, spec.factors, &mut cache)?;
                conv.weight = WeightMatrix::Butterfly(chain);
            }
        }
    }
    model.butterfly = Some(spec);
    Ok(())
}

/// Substitutes butterfly-factorized weights in the last `segments` segments
/// and initializes every new factor value uniformly on `(-1/√c, 1/√c)` from
/// a generator seeded with `seed`. `segments = 0` leaves the model unchanged.
pub fn substitute_butterfly(model: &mut Model, segments: usize, factors: usize, seed: u64) -> Result<()> {
    if model.butterfly.is_some() {
        return Err(Error::Usage("model already carries butterfly layers".into()));
    }
    apply_butterfly_structure(model, ButterflySpec { segments, factors })?;
    if segments == 0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in model.layers_mut() {
        if let Layer::BasicBlock(b) = layer {
            for conv in [&mut b.conv1, &mut b.conv2] {
                if let WeightMatrix::Butterfly(chain) = &mut conv.weight {
                    chain.init_uniform(&mut rng);
                }
            }
        }
    }
    Ok(())
}

/// Replaces every butterfly weight by its dense product (for oracle comparisons).
pub fn densify(model: &Model) -> Model {
    let mut m = model.clone();
    let fix = |c: &mut Conv2d| c.weight = c.weight.densified();
    for layer in m.layers_mut() {
        match layer {
            Layer::Dense(d) => d.weight = d.weight.densified(),
            Layer::Conv2d(c) => fix(c),
            Layer::BasicBlock(b) => {
                fix(&mut b.conv1);
                fix(&mut b.conv2);
                if let Some((c, _)) = b.shortcut.as_mut() {
                    fix(c);
                }
            }
            _ => {}
        }
    }
    m.butterfly = None;
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Parameters of the equivalent dense model (a butterfly weight counts as `rows·cols`).
    pub total: usize,
    /// Structural nonzeros: chain values for butterfly weights, mask survivors
    /// for pruned tensors, every entry otherwise.
    pub nonzero: usize,
}

impl ParamCount {
    pub fn percentage(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Undefined("nonzero percentage of a model without parameters".into()));
        }
        Ok(100.0 * self.nonzero as f64 / self.total as f64)
    }
}

fn count_weight(w: &WeightMatrix, acc: &mut ParamCount) {
    match w {
        WeightMatrix::Dense(p) => {
            acc.total += p.len();
            acc.nonzero += p.surviving();
        }
        WeightMatrix::Butterfly(c) => {
            acc.total += c.rows() * c.cols();
            acc.nonzero += c.num_params();
        }
    }
}

pub fn count_model_params(model: &Model) -> ParamCount {
    let mut acc = ParamCount { total: 0, nonzero: 0 };
    let mut weights: Vec<&WeightMatrix> = Vec::new();
    for layer in model.layers() {
        match layer {
            Layer::Dense(d) => weights.push(&d.weight),
            Layer::Conv2d(c) => weights.push(&c.weight),
            Layer::BasicBlock(b) => {
                weights.push(&b.conv1.weight);
                weights.push(&b.conv2.weight);
                if let Some((c, _)) = &b.shortcut {
                    weights.push(&c.weight);
                }
            }
            _ => {}
        }
    }
    for w in &weights {
        count_weight(w, &mut acc);
    }
    // everything that is not a weight matrix (biases, batch-norm affine terms)
    let weight_entries: usize = weights
        .iter()
        .map(|w| match w {
            WeightMatrix::Dense(p) => p.len(),
            WeightMatrix::Butterfly(c) => c.num_params(),
        })
        .sum();
    let rest = model.num_params() - weight_entries;
    acc.total += rest;
    acc.nonzero += rest;
    acc
}
