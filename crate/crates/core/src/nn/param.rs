use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// A trainable tensor with its gradient and an optional pruning mask.
///
/// When a mask is present, `mask[i] == false` marks a pruned position whose
/// value and gradient are held at exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    #[serde(skip, default)]
    pub grad: Option<Tensor>,
    pub mask: Option<Vec<bool>>,
    /// Eligible for magnitude pruning.
    pub prunable: bool,
    /// Subject to weight decay (weights yes; biases and batch-norm affine terms no).
    pub decay: bool,
}

impl Parameter {
    /// A parameter that is decayed iff it is prunable.
    pub fn new(value: Tensor, prunable: bool) -> Self {
        Parameter {
            value,
            grad: None,
            mask: None,
            prunable,
            decay: prunable,
        }
    }

    pub fn with_decay(mut self, decay: bool) -> Self {
        self.decay = decay;
        self
    }

    pub fn zeros(shape: &[usize], prunable: bool) -> Self {
        Self::new(Tensor::zeros(shape), prunable)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Gradient buffer, allocated (zeroed) on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let shape = self.value.shape().to_vec();
        self.grad
            .get_or_insert_with(|| Tensor::zeros(&shape))
            .data_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Number of positions not removed by the mask.
    pub fn surviving(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&keep| keep).count(),
            None => self.len(),
        }
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    /// Zeroes masked positions of the value and (if allocated) the gradient.
    pub fn apply_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (v, &keep) in self.value.data_mut().iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
            if let Some(g) = self.grad.as_mut() {
                for (v, &keep) in g.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    pub fn mask_grad(&mut self) {
        if let (Some(mask), Some(g)) = (&self.mask, self.grad.as_mut()) {
            for (v, &keep) in g.data_mut().iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }
}
