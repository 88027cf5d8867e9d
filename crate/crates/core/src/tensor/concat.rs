use super::Tensor;
use crate::error::{Error, Result};

/// Concatenates `N×Ci×H×W` tensors along the channel axis, in argument order.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::ShapeMismatch("concat of zero tensors".into()))?;
    let (n, _, h, w) = first.dims4()?;
    let mut channels = Vec::with_capacity(inputs.len());
    for t in inputs {
        let (tn, tc, th, tw) = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "concat operands disagree: {:?} vs {:?}",
                t.shape(),
                first.shape()
            )));
        }
        channels.push(tc);
    }
    let total: usize = channels.iter().sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for s in 0..n {
        for (t, &c) in inputs.iter().zip(&channels) {
            data.extend_from_slice(&t.data()[s * c * plane..(s + 1) * c * plane]);
        }
    }
    Tensor::new(vec![n, total, h, w], data)
}

/// Splits a channel-concatenated tensor back into pieces of the given
/// channel counts. This is the backward of `concat_channels`.
pub fn split_channels(grad: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = grad.dims4()?;
    if channels.iter().sum::<usize>() != c || channels.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "cannot split {c} channels into {channels:?}"
        )));
    }
    let plane = h * w;
    let mut parts: Vec<Vec<f64>> = channels
        .iter()
        .map(|&ci| Vec::with_capacity(n * ci * plane))
        .collect();
    for s in 0..n {
        let mut offset = s * c * plane;
        for (part, &ci) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&grad.data()[offset..offset + ci * plane]);
            offset += ci * plane;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(d, &ci)| Tensor::new(vec![n, ci, h, w], d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_input_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, &[2, 3, 2, 2]);
        assert_eq!(concat_channels(&[&x]).unwrap(), x);
    }

    #[test]
    fn two_and_three_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_tensor(&mut rng, &[2, 2, 3, 3]);
        let b = random_tensor(&mut rng, &[2, 3, 3, 3]);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 5, 3, 3]);
        for s in 0..2 {
            for c in 0..5 {
                for y in 0..3 {
                    for x in 0..3 {
                        let want = if c < 2 { a.at4(s, c, y, x) } else { b.at4(s, c - 2, y, x) };
                        assert_eq!(cat.at4(s, c, y, x), want);
                    }
                }
            }
        }
        let parts = split_channels(&cat, &[2, 3]).unwrap();
        assert_eq!(parts, vec![a, b]);
    }

    #[test]
    fn mismatched_spatial_rejected() {
        let a = Tensor::zeros(&[1, 2, 3, 3]);
        let b = Tensor::zeros(&[1, 2, 4, 3]);
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(concat_channels(&[]).is_err());
        assert!(split_channels(&a, &[1, 2]).is_err());
    }

    #[test]
    fn backward_by_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tensor(&mut rng, &[2, 1, 2, 3]);
        let b = random_tensor(&mut rng, &[2, 2, 2, 3]);
        let c = random_tensor(&mut rng, &[2, 3, 2, 3]);
        let proj = random_tensor(&mut rng, &[2, 6, 2, 3]);
        let parts = split_channels(&proj, &[1, 2, 3]).unwrap();
        let dot = |t: &Tensor| t.data().iter().zip(proj.data()).map(|(u, v)| u * v).sum::<f64>();
        assert_grad_close(&parts[0], &numeric_grad(&a, |t| dot(&concat_channels(&[t, &b, &c]).unwrap())));
        assert_grad_close(&parts[1], &numeric_grad(&b, |t| dot(&concat_channels(&[&a, t, &c]).unwrap())));
        assert_grad_close(&parts[2], &numeric_grad(&c, |t| dot(&concat_channels(&[&a, &b, t]).unwrap())));
    }
}
