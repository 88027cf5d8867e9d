use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    expect_shape("relu grad", grad_out, input.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Row-wise softmax of an `N×C` tensor, computed after subtracting each
/// row's maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, c) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &x in row {
            let e = (x - max).exp();
            sum += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= sum);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

fn check_labels(labels: &[usize], n: usize, c: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    Ok(())
}

/// Mean negative log-probability of the true class; probabilities are floored
/// at 1e-12 before the log.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, c) = probs.dims2()?;
    check_labels(labels, n, c)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.data()[i * c + l].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of `cross_entropy(softmax(logits))` with respect to the logits:
/// `(probs − onehot) / N`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, c) = probs.dims2()?;
    check_labels(labels, n, c)?;
    let mut grad = probs.clone();
    let g = grad.data_mut();
    for (i, &l) in labels.iter().enumerate() {
        g[i * c + l] -= 1.0;
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    Ok(grad)
}
