//! Random horizontal flips and zero-padded random crops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub horizontal_flip_prob: f64,
    /// Zero padding added on every side before cropping back to the original size.
    pub crop_padding: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: false,
            horizontal_flip_prob: 0.5,
            crop_padding: 4,
        }
    }
}

impl AugmentConfig {
    pub fn standard() -> Self {
        AugmentConfig {
            enabled: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.horizontal_flip_prob) {
            return Err(Error::Config(format!(
                "flip probability {} outside [0, 1]",
                self.horizontal_flip_prob
            )));
        }
        Ok(())
    }
}

/// Mirrors one `(C, H, W)` image left-right in place.
pub fn hflip(image: &mut [f64], channels: usize, h: usize, w: usize) {
    debug_assert_eq!(image.len(), channels * h * w);
    for row in image.chunks_mut(w) {
        row.reverse();
    }
}

/// Crops an `H × W` window at offset `(dy, dx)` from the image zero-padded
/// by `pad` on every side. `(pad, pad)` returns the image unchanged.
pub fn pad_crop(image: &[f64], channels: usize, h: usize, w: usize, pad: usize, dy: usize, dx: usize) -> Vec<f64> {
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..h {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx) as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[(c * h + y) * w + x] = image[(c * h + sy as usize) * w + sx as usize];
            }
        }
    }
    out
}

/// Augments a `(n, C, H, W)` batch: each image is independently flipped with
/// probability `horizontal_flip_prob`, then cropped at a uniform offset in
/// `[0, 2·pad]²` from its zero-padded canvas. Identity when disabled or for
/// inputs that are not image batches.
pub fn augment_batch<R: Rng>(batch: &Tensor, config: &AugmentConfig, rng: &mut R) -> Tensor {
    let s = batch.shape();
    if !config.enabled || s.len() != 4 {
        return batch.clone();
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let per = c * h * w;
    let pad = config.crop_padding;
    let mut out = batch.clone();
    for img in out.data_mut().chunks_mut(per) {
        if rng.random::<f64>() < config.horizontal_flip_prob {
            hflip(img, c, h, w);
        }
        if pad > 0 {
            let dy = rng.random_range(0..=2 * pad);
            let dx = rng.random_range(0..=2 * pad);
            let cropped = pad_crop(img, c, h, w, pad, dy, dx);
            img.copy_from_slice(&cropped);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image() -> Vec<f64> {
        (0..2 * 5 * 6).map(|v| v as f64 + 1.0).collect()
    }

    #[test]
    fn disabled_is_identity() {
        let t = Tensor::from_vec(&[1, 2, 5, 6], image()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_batch(&t, &AugmentConfig::default(), &mut rng), t);
    }

    #[test]
    fn flip_twice_is_identity() {
        let mut img = image();
        hflip(&mut img, 2, 5, 6);
        assert_ne!(img, image());
        hflip(&mut img, 2, 5, 6);
        assert_eq!(img, image());
    }

    #[test]
    fn centered_crop_recovers_image() {
        assert_eq!(pad_crop(&image(), 2, 5, 6, 4, 4, 4), image());
    }

    #[test]
    fn shifted_crop_moves_pixels() {
        let img = image();
        let out = pad_crop(&img, 2, 5, 6, 4, 5, 4);
        // shifted up by one row: first row of output = second row of input
        assert_eq!(out[..6], img[6..12]);
        assert!(out[4 * 6..5 * 6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn augmentation_preserves_shape_and_range() {
        let t = Tensor::from_vec(&[3, 2, 5, 6], (0..180).map(|v| (v % 7) as f64 / 7.0).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = augment_batch(&t, &AugmentConfig::standard(), &mut rng);
        assert_eq!(a.shape(), t.shape());
        assert!(a.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }
}
