use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp applied before taking logarithms in the binary cross entropy.
pub const BCE_EPS: f64 = 1e-7;

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::shape(
            "cross entropy",
            format!("[{}, classes]", labels.len()),
            logits.shape(),
        ));
    }
    let classes = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Config(format!("label {bad} outside [0, {classes})")));
    }
    Ok(classes)
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -log_softmax_row(logits.row(i))[y])
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross entropy and its gradient with respect to the logits.
pub fn cross_entropy_grad(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let classes = check_labels(logits, labels)?;
    let n = labels.len().max(1) as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let ls = log_softmax_row(logits.row(i));
        total -= ls[y];
        let g = &mut grad.data_mut()[i * classes..(i + 1) * classes];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = (ls[k].exp() - if k == y { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Mean of `-[y log p + (1-y) log(1-p)]`, probabilities clamped to `[BCE_EPS, 1-BCE_EPS]`.
pub fn binary_cross_entropy(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::shape("binary cross entropy", probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy of `sigmoid(logits)` and its gradient with respect
/// to the logits (`n × 1`). Where the clamp is active the gradient is zero.
pub fn bce_with_logits_grad(logits: &Tensor, labels: &[f64]) -> Result<(f64, Tensor)> {
    if logits.len() != labels.len() {
        return Err(Error::shape("binary cross entropy", labels.len(), logits.shape()));
    }
    let probs: Vec<f64> = logits.data().iter().map(|&z| sigmoid(z)).collect();
    let loss = binary_cross_entropy(&probs, labels)?;
    let n = labels.len().max(1) as f64;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                0.0
            } else {
                let dp = (-y / p + (1.0 - y) / (1.0 - p)) / n;
                dp * p * (1.0 - p)
            }
        })
        .collect();
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let t = Tensor::zeros(&[3, 10]);
        let l = cross_entropy(&t, &[0, 4, 9]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_near_zero() {
        let t = Tensor::from_vec(&[1, 3], vec![0.0, 100.0, 0.0]).unwrap();
        assert!(cross_entropy(&t, &[1]).unwrap() < 1e-40);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let t = Tensor::zeros(&[1, 3]);
        assert!(cross_entropy(&t, &[3]).is_err());
        assert!(cross_entropy(&t, &[0, 1]).is_err());
    }

    #[test]
    fn bce_half_is_ln2() {
        for y in [0.0, 1.0] {
            let l = binary_cross_entropy(&[0.5], &[y]).unwrap();
            assert!((l - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_exact_label_is_clamped_near_zero() {
        let l = binary_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((0.0..1e-6).contains(&l));
        assert!(l.is_finite());
        let wrong = binary_cross_entropy(&[0.0], &[1.0]).unwrap();
        assert!((wrong + BCE_EPS.ln()).abs() < 1e-12);
    }
}
