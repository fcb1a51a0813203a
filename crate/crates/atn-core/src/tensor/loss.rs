//! Training losses: mean squared error for the steering head, softmax
//! cross-entropy for the segmentation and pretext classifiers.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// MSE over all elements. Returns (loss, dloss/dpred).
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Usage(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Usage("mse on empty tensors".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for i in 0..pred.len() {
        let d = (pred.data()[i] - target.data()[i]).to_f64_();
        loss += d * d;
        grad.data_mut()[i] = T::from_f64(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Softmax cross-entropy over class logits [N, K] with integer labels.
/// Returns (mean loss, dloss/dlogits).
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(Error::Usage(format!(
            "cross entropy expects [N, K] logits, got {s:?}"
        )));
    }
    let (n, k) = (s[0], s[1]);
    if labels.len() != n {
        return Err(Error::Usage(format!(
            "cross entropy got {n} rows but {} labels",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(s);
    for b in 0..n {
        let label = labels[b];
        if label >= k {
            return Err(Error::Usage(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let row = &logits.data()[b * k..(b + 1) * k];
        let maxv = row
            .iter()
            .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v - maxv).to_f64_().exp();
        }
        let log_denom = denom.ln();
        let log_p = (row[label] - maxv).to_f64_() - log_denom;
        loss -= log_p;
        let grow = &mut grad.data_mut()[b * k..(b + 1) * k];
        for (j, g) in grow.iter_mut().enumerate() {
            let p = (row[j] - maxv).to_f64_().exp() / denom;
            let indicator = if j == label { 1.0 } else { 0.0 };
            *g = T::from_f64((p - indicator) / n as f64);
        }
    }
    Ok((loss / n as f64, grad))
}
