use super::conv::conv_output_extent;
use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Flat input index chosen by each max-pool output element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Max pooling over `window × window` patches. Padded positions never win.
/// Ties resolve to the first maximum in row-major window order.
pub fn maxpool2d(
    input: &Tensor,
    window: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    if window == 0 {
        return Err(Error::ShapeMismatch("pool window must be positive".into()));
    }
    if padding >= window {
        return Err(Error::ShapeMismatch(format!(
            "pool padding {padding} must be smaller than window {window}"
        )));
    }
    let oh = conv_output_extent(h, window, stride, padding)?;
    let ow = conv_output_extent(w, window, stride, padding)?;
    let data = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best: Option<(f64, usize)> = None;
                for ky in 0..window {
                    let Some(y) = (oy * stride + ky).checked_sub(padding).filter(|&y| y < h) else {
                        continue;
                    };
                    for kx in 0..window {
                        let Some(x) = (ox * stride + kx).checked_sub(padding).filter(|&x| x < w)
                        else {
                            continue;
                        };
                        let idx = base + y * w + x;
                        if best.is_none_or(|(v, _)| data[idx] > v) {
                            best = Some((data[idx], idx));
                        }
                    }
                }
                let (v, idx) = best.ok_or_else(|| {
                    Error::ShapeMismatch("pool window lies entirely in padding".into())
                })?;
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the input element that won its window.
pub fn maxpool2d_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool grad has {} elements, forward produced {}",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in indices.argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

/// Mean over each `H×W` plane: `N×C×H×W → N×C`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let area = (h * w) as f64;
    let data = input
        .data()
        .chunks(h * w)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect();
    Tensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let [n, c, h, w] = input_shape[..] else {
        return Err(Error::ShapeMismatch(format!(
            "global pool input must be rank 4, got {input_shape:?}"
        )));
    };
    expect_shape("global pool grad", grad_out, &[n, c])?;
    let area = (h * w) as f64;
    let mut data = Vec::with_capacity(n * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / area, h * w));
    }
    Tensor::new(input_shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_picks_first() {
        let x = Tensor::full(&[1, 1, 4, 4], 3.0);
        let (out, idx) = maxpool2d(&x, 2, 2, 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.0));
        assert_eq!(idx.argmax, vec![0, 2, 8, 10]);
    }

    #[test]
    fn increasing_raster_picks_bottom_right() {
        let x = Tensor::from_fn(&[1, 1, 4, 6], |i| i as f64);
        let (out, idx) = maxpool2d(&x, 2, 2, 0).unwrap();
        assert_eq!(out.data(), &[7.0, 9.0, 11.0, 19.0, 21.0, 23.0]);
        assert_eq!(idx.argmax, vec![7, 9, 11, 19, 21, 23]);
    }

    #[test]
    fn padded_pool_keeps_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, &[2, 3, 5, 5]);
        let (out, _) = maxpool2d(&x, 3, 1, 1).unwrap();
        assert_eq!(out.shape(), &[2, 3, 5, 5]);
        // corner sees only the 2x2 block of real pixels
        let want = [x.at4(0, 0, 0, 0), x.at4(0, 0, 0, 1), x.at4(0, 0, 1, 0), x.at4(0, 0, 1, 1)]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.at4(0, 0, 0, 0), want);
    }

    #[test]
    fn rejects_oversized_window() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(maxpool2d(&x, 3, 1, 0).is_err());
        assert!(maxpool2d(&x, 2, 0, 0).is_err());
        assert!(maxpool2d(&x, 2, 1, 2).is_err());
    }

    #[test]
    fn backward_routes_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor(&mut rng, &[2, 2, 6, 6]);
        let (out, idx) = maxpool2d(&x, 2, 2, 0).unwrap();
        let proj = random_tensor(&mut rng, out.shape());
        let g = maxpool2d_backward(&proj, &idx).unwrap();
        let numeric = numeric_grad(&x, |t| {
            let (o, _) = maxpool2d(t, 2, 2, 0).unwrap();
            o.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        });
        assert_grad_close(&g, &numeric);
    }

    #[test]
    fn global_pool_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_tensor(&mut rng, &[3, 4, 3, 5]);
        let out = global_avg_pool(&x).unwrap();
        assert_eq!(out.shape(), &[3, 4]);
        let mean: f64 = x.data()[..15].iter().sum::<f64>() / 15.0;
        assert!((out.data()[0] - mean).abs() < 1e-12);
        let proj = random_tensor(&mut rng, &[3, 4]);
        let g = global_avg_pool_backward(&proj, x.shape()).unwrap();
        let numeric = numeric_grad(&x, |t| {
            let o = global_avg_pool(t).unwrap();
            o.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        });
        assert_grad_close(&g, &numeric);
    }
}
