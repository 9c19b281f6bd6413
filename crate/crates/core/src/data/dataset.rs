use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labelled samples stored contiguously (`count × sample_shape`), normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    images: Vec<f32>,
    sample_shape: Vec<usize>,
    labels: Vec<usize>,
    classes: usize,
}

impl ImageDataset {
    pub fn new(images: Vec<f32>, sample_shape: Vec<usize>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || images.len() != per * labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} values ({} samples of {sample_shape:?})", per * labels.len(), labels.len()),
                images.len(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Config(format!("label {bad} outside [0, {classes})")));
        }
        Ok(ImageDataset {
            images,
            sample_shape,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let w = self.sample_len();
        &self.images[i * w..(i + 1) * w]
    }

    /// Stacks the given samples into a `(len, sample_shape...)` tensor.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let w = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend(self.sample(i).iter().map(|&v| v as f64));
        }
        let mut shape = vec![indices.len()];
        shape.extend(&self.sample_shape);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::from_vec(&shape, data).expect("batch shape"), labels)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<ImageDataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Config(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let mut images = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            images.extend_from_slice(self.sample(i));
        }
        Ok(ImageDataset {
            images,
            sample_shape: self.sample_shape.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        })
    }

    /// Concatenates datasets of identical sample shape and class count.
    pub fn concat(parts: &[ImageDataset]) -> Result<ImageDataset> {
        let first = parts.first().ok_or_else(|| Error::Empty("no datasets to concatenate".into()))?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.sample_shape != first.sample_shape || p.classes != first.classes {
                return Err(Error::shape("dataset concat", &first.sample_shape, &p.sample_shape));
            }
            images.extend_from_slice(&p.images);
            labels.extend_from_slice(&p.labels);
        }
        ImageDataset::new(images, first.sample_shape.clone(), labels, first.classes)
    }
}
