use super::gemm::{gemm, MatRef};
use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Output extent of a sliding window: `(size + 2·padding − kernel) / stride + 1`.
pub fn conv_output_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::ShapeMismatch("stride must be positive".into()));
    }
    if size + 2 * padding < kernel {
        return Err(Error::ShapeMismatch(format!(
            "kernel {kernel} larger than padded extent {}",
            size + 2 * padding
        )));
    }
    Ok((size + 2 * padding - kernel) / stride + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new(input: &Tensor, weights: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (n, cin, h, w) = input.dims4()?;
        let (cout, wcin, kh, kw) = weights.dims4()?;
        if wcin != cin {
            return Err(Error::ShapeMismatch(format!(
                "conv weights expect {wcin} input channels, input has {cin}"
            )));
        }
        let oh = conv_output_extent(h, kh, stride, padding)?;
        let ow = conv_output_extent(w, kw, stride, padding)?;
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh,
            ow,
            stride,
            padding,
        })
    }

    /// A 1×1, stride-1, unpadded conv reads each sample as its own column
    /// matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for output position (oy, ox) and kernel tap (ky, kx), if
    /// it falls inside the unpadded input.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < self.h && x < self.w).then_some((y, x))
    }

    /// Unrolls one sample into a `patch_len × out_len` matrix.
    fn im2col(&self, sample: &[f64], cols: &mut [f64]) {
        let ol = self.out_len();
        for c in 0..self.cin {
            let plane = &sample[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * ol..(row + 1) * ol];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match self.source(oy, ox, ky, kx) {
                                Some((y, x)) => plane[y * self.w + x],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: accumulates column gradients back onto pixels.
    fn col2im(&self, cols: &[f64], sample_grad: &mut [f64]) {
        let ol = self.out_len();
        for c in 0..self.cin {
            let plane = &mut sample_grad[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * ol..(row + 1) * ol];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                plane[y * self.w + x] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of an `N×Cin×H×W` batch with `Cout×Cin×Kh×Kw`
/// weights plus a per-output-channel bias, zero padding on all sides.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input, weights, stride, padding)?;
    expect_shape("conv bias", bias, &[g.cout])?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * ol;
    let mut cols = vec![0.0; if g.is_pointwise() { 0 } else { pl * ol }];
    let mut out = vec![0.0; g.n * out_stride];
    for s in 0..g.n {
        let sample = &input.data()[s * in_stride..(s + 1) * in_stride];
        let cols: &[f64] = if g.is_pointwise() {
            sample
        } else {
            g.im2col(sample, &mut cols);
            &cols
        };
        let dst = &mut out[s * out_stride..(s + 1) * out_stride];
        for (co, plane) in dst.chunks_mut(ol).enumerate() {
            plane.fill(bias.data()[co]);
        }
        gemm(
            MatRef::new(weights.data(), g.cout, pl),
            MatRef::new(cols, pl, ol),
            dst,
            1.0,
        );
    }
    Tensor::new(vec![g.n, g.cout, g.oh, g.ow], out)
}

/// Gradients of `conv2d` with respect to its input, weights and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let g = Geometry::new(input, weights, stride, padding)?;
    expect_shape("conv grad_out", grad_out, &[g.n, g.cout, g.oh, g.ow])?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * ol;

    let scratch = if g.is_pointwise() { 0 } else { pl * ol };
    let mut cols = vec![0.0; scratch];
    let mut grad_cols = vec![0.0; scratch];
    let mut grad_input = vec![0.0; input.len()];
    let mut grad_weights = vec![0.0; weights.len()];
    let mut grad_bias = vec![0.0; g.cout];

    for s in 0..g.n {
        let go = &grad_out.data()[s * out_stride..(s + 1) * out_stride];
        for (co, plane) in go.chunks(ol).enumerate() {
            grad_bias[co] += plane.iter().sum::<f64>();
        }
        let sample = &input.data()[s * in_stride..(s + 1) * in_stride];
        let cols: &[f64] = if g.is_pointwise() {
            sample
        } else {
            g.im2col(sample, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        gemm(
            MatRef::new(go, g.cout, ol),
            MatRef::new(cols, pl, ol).t(),
            &mut grad_weights,
            1.0,
        );
        // dcols = Wᵀ · dY
        let gi = &mut grad_input[s * in_stride..(s + 1) * in_stride];
        let wt = MatRef::new(weights.data(), g.cout, pl).t();
        if g.is_pointwise() {
            gemm(wt, MatRef::new(go, g.cout, ol), gi, 0.0);
        } else {
            gemm(wt, MatRef::new(go, g.cout, ol), &mut grad_cols, 0.0);
            g.col2im(&grad_cols, gi);
        }
    }

    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), grad_input)?,
        weights: Tensor::new(weights.shape().to_vec(), grad_weights)?,
        bias: Tensor::new(vec![g.cout], grad_bias)?,
    })
}
