use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::ImageDataset;
use crate::error::{Error, Result};

/// Gaussian class-conditional data: class `k` has mean `separation · u_k`
/// with `u_k` a random unit vector, and identity covariance. Labels are
/// assigned round-robin (so classes are balanced to within one sample) and
/// the sample order is shuffled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub classes: usize,
    pub sample_shape: Vec<usize>,
    pub separation: f64,
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<ImageDataset> {
    let dim: usize = spec.sample_shape.iter().product();
    if spec.classes == 0 || dim == 0 {
        return Err(Error::Config(format!("invalid synthetic spec {spec:?}")));
    }
    if spec.separation.is_nan() || spec.separation < 0.0 {
        return Err(Error::Config(format!("separation {} must be >= 0", spec.separation)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| spec.separation * x / norm).collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..spec.count).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let mut images = Vec::with_capacity(spec.count * dim);
    for &y in &labels {
        for m in &means[y] {
            let z: f64 = StandardNormal.sample(&mut rng);
            images.push((m + z) as f32);
        }
    }
    ImageDataset::new(images, spec.sample_shape.clone(), labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(count: usize, separation: f64) -> SyntheticSpec {
        SyntheticSpec {
            count,
            classes: 4,
            sample_shape: vec![6],
            separation,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_synthetic(&spec(50, 2.0), 5).unwrap(), gen_synthetic(&spec(50, 2.0), 5).unwrap());
        assert_ne!(gen_synthetic(&spec(50, 2.0), 5).unwrap(), gen_synthetic(&spec(50, 2.0), 6).unwrap());
    }

    #[test]
    fn classes_balanced() {
        let ds = gen_synthetic(&spec(1001, 1.0), 1).unwrap();
        let n = ds.len() as f64;
        for k in 0..4 {
            let f = ds.labels().iter().filter(|&&l| l == k).count() as f64 / n;
            assert!((f - 0.25).abs() <= 2.0 / n.sqrt());
        }
    }
}
