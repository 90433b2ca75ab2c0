use super::layer::softmax_in_place;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// Softmax cross-entropy of one example: `(loss, d loss / d logits)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Bounds {
            index: label,
            len: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over a `[B, C]` batch with gradient scaled by `1/B`.
pub fn cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = match logits.shape() {
        [b, c] => (*b, *c),
        s => return Err(Error::shape(format!("logits must be [B, C], got {s:?}"))),
    };
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for batch of {b}", labels.len())));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(b * c);
    for (r, &label) in labels.iter().enumerate() {
        let (loss, g) = cross_entropy(logits.row(r), label)?;
        total += loss;
        grad.extend(g.into_iter().map(|v| v / b as f64));
    }
    Ok((total / b as f64, Tensor::new(vec![b, c], grad)?))
}
