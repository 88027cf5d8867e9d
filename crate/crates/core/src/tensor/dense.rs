use super::gemm::{gemm, MatRef};
use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, fan_in) = input.dims2()?;
    let (out, w_in) = weights.dims2()?;
    if fan_in != w_in {
        return Err(Error::ShapeMismatch(format!(
            "dense weights expect {w_in} inputs, got {fan_in}"
        )));
    }
    Ok((n, fan_in, out))
}

/// Affine map `y = x·Wᵀ + b` applied to each row of an `N×In` batch.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, fan_in, out) = dims(input, weights)?;
    expect_shape("dense bias", bias, &[out])?;
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(bias.data());
    }
    gemm(
        MatRef::new(input.data(), n, fan_in),
        MatRef::new(weights.data(), out, fan_in).t(),
        &mut y,
        1.0,
    );
    Tensor::new(vec![n, out], y)
}

pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weights: &Tensor) -> Result<DenseGrads> {
    let (n, fan_in, out) = dims(input, weights)?;
    expect_shape("dense grad_out", grad_out, &[n, out])?;
    let mut gx = vec![0.0; n * fan_in];
    gemm(
        MatRef::new(grad_out.data(), n, out),
        MatRef::new(weights.data(), out, fan_in),
        &mut gx,
        0.0,
    );
    let mut gw = vec![0.0; out * fan_in];
    gemm(
        MatRef::new(grad_out.data(), n, out).t(),
        MatRef::new(input.data(), n, fan_in),
        &mut gw,
        0.0,
    );
    let mut gb = vec![0.0; out];
    for row in grad_out.data().chunks(out) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n, fan_in], gx)?,
        weights: Tensor::new(vec![out, fan_in], gw)?,
        bias: Tensor::new(vec![out], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_bias_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, &[3, 4]);
        let eye = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[4])).unwrap(), x);

        let b = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let y = dense(&x, &Tensor::zeros(&[2, 4]), &b).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), b.data());
        }
    }

    #[test]
    fn matches_double_loop_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, &[5, 7]);
        let w = random_tensor(&mut rng, &[3, 7]);
        let b = random_tensor(&mut rng, &[3]);
        let y = dense(&x, &w, &b).unwrap();
        for i in 0..5 {
            for o in 0..3 {
                let mut acc = b.data()[o];
                for k in 0..7 {
                    acc += x.data()[i * 7 + k] * w.data()[o * 7 + k];
                }
                assert!((y.data()[i * 3 + o] - acc).abs() < 1e-12);
            }
        }
        let proj = random_tensor(&mut rng, &[5, 3]);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
            let o = dense(x, w, b).unwrap();
            o.data().iter().zip(proj.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let g = dense_backward(&proj, &x, &w).unwrap();
        assert_grad_close(&g.input, &numeric_grad(&x, |t| loss(t, &w, &b)));
        assert_grad_close(&g.weights, &numeric_grad(&w, |t| loss(&x, t, &b)));
        assert_grad_close(&g.bias, &numeric_grad(&b, |t| loss(&x, &w, t)));
    }

    #[test]
    fn rejects_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(dense(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2])).is_err());
        assert!(dense(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3])).is_err());
    }
}
