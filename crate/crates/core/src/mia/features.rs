use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::seed::derive_seed;
use crate::Tensor;

/// Which output vector `R(x)` the sensitivity feature differentiates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    #[default]
    Softmax,
    Logits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub epsilon: f64,
    pub n_noise: usize,
    #[serde(default)]
    pub output: OutputMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            epsilon: 1e-3,
            n_noise: 5,
            output: OutputMode::Softmax,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) || self.n_noise == 0 {
            return Err(Error::Config(format!(
                "sensitivity needs epsilon > 0 and n_noise > 0, got {} and {}",
                self.epsilon, self.n_noise
            )));
        }
        Ok(())
    }
}

/// Per-point attack features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackExample {
    pub label: usize,
    /// Softmax output at the point.
    pub prediction: Vec<f64>,
    /// `(1/ε) · mean_k |R(x) − R(x + ε N_k)|`, elementwise, `N_k` standard Gaussian.
    pub sensitivity: Vec<f64>,
    pub member: bool,
}

/// Points per forward pass during extraction.
const POINTS_PER_BATCH: usize = 32;

fn output(mode: OutputMode, logits: &Tensor) -> Tensor {
    match mode {
        OutputMode::Softmax => logits.softmax_rows(),
        OutputMode::Logits => logits.clone(),
    }
}

/// Features for a batch of points; point `i` draws its noise from `seeds[i]`.
fn extract_batch(
    model: &Model,
    xs: &[Vec<f64>],
    labels: &[usize],
    config: &FeatureConfig,
    seeds: &[u64],
) -> Result<Vec<AttackExample>> {
    let input_shape = model.input_shape();
    let width: usize = input_shape.iter().product();
    let rows = 1 + config.n_noise;
    let mut data = Vec::with_capacity(xs.len() * rows * width);
    for (x, &seed) in xs.iter().zip(seeds) {
        if x.len() != width {
            return Err(Error::shape("attack features input", &input_shape, x.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        data.extend_from_slice(x);
        for _ in 0..config.n_noise {
            // noise is independent of epsilon, so different epsilons share draws
            data.extend(x.iter().map(|&v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                v + config.epsilon * n
            }));
        }
    }
    let mut shape = vec![xs.len() * rows];
    shape.extend(&input_shape);
    let logits = model.forward(&Tensor::from_vec(&shape, data)?)?;
    let probs = logits.softmax_rows();
    let r = output(config.output, &logits);
    let classes = logits.row_len();
    let scale = 1.0 / (config.epsilon * config.n_noise as f64);
    let mut out = Vec::with_capacity(xs.len());
    for (p, &label) in labels.iter().enumerate() {
        let base = p * rows;
        let r0 = r.row(base);
        let mut sens = vec![0.0; classes];
        for k in 1..rows {
            for (s, (a, b)) in sens.iter_mut().zip(r0.iter().zip(r.row(base + k))) {
                *s += (a - b).abs();
            }
        }
        sens.iter_mut().for_each(|s| *s *= scale);
        out.push(AttackExample {
            label,
            prediction: probs.row(base).to_vec(),
            sensitivity: sens,
            member: false,
        });
    }
    Ok(out)
}

/// Features of a single point; `membership` is left unset (false).
pub fn extract_features(
    model: &Model,
    x: &[f64],
    class_label: usize,
    config: &FeatureConfig,
    seed: u64,
) -> Result<AttackExample> {
    config.validate()?;
    let mut v = extract_batch(model, &[x.to_vec()], &[class_label], config, &[seed])?;
    Ok(v.remove(0))
}

/// A labelled set of attack examples, members first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSet {
    pub classes: usize,
    pub examples: Vec<AttackExample>,
}

impl AttackSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn members(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.member).collect()
    }

    pub fn feature_width(&self) -> usize {
        3 * self.classes
    }

    /// Discriminator inputs `one_hot(label) ⊕ prediction ⊕ sensitivity` (`n × 3C`).
    pub fn feature_matrix(&self) -> Tensor {
        let c = self.classes;
        let mut data = Vec::with_capacity(self.len() * 3 * c);
        for e in &self.examples {
            data.extend((0..c).map(|k| if k == e.label { 1.0 } else { 0.0 }));
            data.extend_from_slice(&e.prediction);
            data.extend_from_slice(&e.sensitivity);
        }
        Tensor::from_vec(&[self.len(), 3 * c], data).expect("attack feature shape")
    }

    /// Tab-separated export: header, then one row per example.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let c = self.classes;
        let mut header = vec!["label".to_string()];
        header.extend((0..c).map(|k| format!("pred_{k}")));
        header.extend((0..c).map(|k| format!("sens_{k}")));
        header.push("member".into());
        writeln!(out, "{}", header.join("\t"))?;
        for e in &self.examples {
            let mut row = vec![e.label.to_string()];
            row.extend(e.prediction.iter().map(|v| v.to_string()));
            row.extend(e.sensitivity.iter().map(|v| v.to_string()));
            row.push(u8::from(e.member).to_string());
            writeln!(out, "{}", row.join("\t"))?;
        }
        Ok(())
    }
}

/// One example per index, members (label 1) then non-members (label 0).
///
/// Both splits must be nonempty, equally sized and disjoint. Point `i` of
/// the dataset draws its noise from `derive_seed(seed, [i])`, so features
/// do not depend on batching or on which other points are included.
pub fn build_attack_dataset(
    model: &Model,
    data: &ImageDataset,
    members: &[usize],
    non_members: &[usize],
    config: &FeatureConfig,
    seed: u64,
) -> Result<AttackSet> {
    config.validate()?;
    if members.is_empty() || non_members.is_empty() {
        return Err(Error::Empty("attack split".into()));
    }
    if members.len() != non_members.len() {
        return Err(Error::Config(format!(
            "unbalanced attack splits: {} members vs {} non-members",
            members.len(),
            non_members.len()
        )));
    }
    let mut m = members.to_vec();
    m.sort_unstable();
    if non_members.iter().any(|i| m.binary_search(i).is_ok()) {
        return Err(Error::Config("member and non-member splits overlap".into()));
    }
    if let Some(&bad) = members.iter().chain(non_members).find(|&&i| i >= data.len()) {
        return Err(Error::Config(format!("index {bad} out of range for {} samples", data.len())));
    }
    let tagged: Vec<(usize, bool)> = members
        .iter()
        .map(|&i| (i, true))
        .chain(non_members.iter().map(|&i| (i, false)))
        .collect();
    let chunks: Vec<Vec<AttackExample>> = tagged
        .par_chunks(POINTS_PER_BATCH)
        .map(|chunk| {
            let xs: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&(i, _)| data.sample(i).iter().map(|&v| v as f64).collect())
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&(i, _)| data.labels()[i]).collect();
            let seeds: Vec<u64> = chunk.iter().map(|&(i, _)| derive_seed(seed, &[i as u64])).collect();
            let mut ex = extract_batch(model, &xs, &labels, config, &seeds)?;
            for (e, &(_, member)) in ex.iter_mut().zip(chunk) {
                e.member = member;
            }
            Ok(ex)
        })
        .collect::<Result<_>>()?;
    Ok(AttackSet {
        classes: model.classes(),
        examples: chunks.into_iter().flatten().collect(),
    })
}
