//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest norm-wise relative error over all checked tensors (parameters and input).
    pub max_rel_error: f64,
    /// Name of the tensor attaining `max_rel_error`.
    pub worst: String,
    pub checked: usize,
    /// Coordinates skipped because a perturbation flipped a ReLU.
    pub skipped: usize,
}

/// Gradient norms below this are compared absolutely: they sit in the
/// round-off floor of a central difference on an `O(1)` loss.
pub const ABS_FLOOR: f64 = 1e-7;

/// `‖a − b‖ / max(‖a‖, ‖b‖, ABS_FLOOR)`.
fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(ABS_FLOOR)
}

fn probe(model: &mut Model, x: &Tensor, weights: &[f64]) -> Result<(f64, Vec<bool>)> {
    let out = model.forward_train(x)?;
    let loss = out.data().iter().zip(weights).map(|(o, w)| o * w).sum();
    Ok((loss, model.relu_pattern()))
}

/// Compares analytic gradients of the scalar `L = Σ r ⊙ logits` (`r` a
/// seeded random tensor) with central differences of step `step`, in
/// training mode. At most `max_coords` coordinates per tensor are probed.
/// Coordinates whose perturbation changes the ReLU activation pattern are
/// skipped since the loss is not differentiable across the kink.
pub fn check_gradients(
    model: &mut Model,
    x: &Tensor,
    step: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = model.forward_train(x)?;
    let weights: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base_pattern = model.relu_pattern();
    model.zero_grad();
    let grad_out = Tensor::from_vec(out.shape(), weights.clone())?;
    let grad_x = model.backward(&grad_out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped: 0,
    };
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let record = |report: &mut GradCheckReport, name: &str, a: &[f64], f: &[f64]| {
        let e = rel_error(a, f);
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = name.to_string();
        }
    };

    for (pi, name) in names.iter().enumerate() {
        let (len, analytic, kept) = {
            let params = model.params();
            let p = params[pi].1;
            let g = p.grad.as_ref().map_or(vec![0.0; p.len()], |g| g.data().to_vec());
            let kept: Vec<bool> = (0..p.len()).map(|i| p.is_kept(i)).collect();
            (p.len(), g, kept)
        };
        let coords: Vec<usize> = if len <= max_coords {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let (mut a, mut f) = (Vec::new(), Vec::new());
        for i in coords {
            if !kept[i] {
                // pruned coordinates are frozen: gradient must be exactly zero
                a.push(analytic[i]);
                f.push(0.0);
                continue;
            }
            let orig = model.params()[pi].1.value.data()[i];
            model.params_mut()[pi].1.value.data_mut()[i] = orig + step;
            let (lp, pp) = probe(model, x, &weights)?;
            model.params_mut()[pi].1.value.data_mut()[i] = orig - step;
            let (lm, pm) = probe(model, x, &weights)?;
            model.params_mut()[pi].1.value.data_mut()[i] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped += 1;
                continue;
            }
            a.push(analytic[i]);
            f.push((lp - lm) / (2.0 * step));
            report.checked += 1;
        }
        record(&mut report, name, &a, &f);
    }

    let mut xp = x.clone();
    let coords: Vec<usize> = if x.len() <= max_coords {
        (0..x.len()).collect()
    } else {
        sample(&mut rng, x.len(), max_coords).into_vec()
    };
    let (mut a, mut f) = (Vec::new(), Vec::new());
    for i in coords {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + step;
        let (lp, pp) = probe(model, &xp, &weights)?;
        xp.data_mut()[i] = orig - step;
        let (lm, pm) = probe(model, &xp, &weights)?;
        xp.data_mut()[i] = orig;
        if pp != base_pattern || pm != base_pattern {
            report.skipped += 1;
            continue;
        }
        a.push(grad_x.data()[i]);
        f.push((lp - lm) / (2.0 * step));
        report.checked += 1;
    }
    record(&mut report, "input", &a, &f);
    Ok(report)
}
