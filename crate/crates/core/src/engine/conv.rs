//! Valid-padding 2-D cross-correlation and max pooling.
//!
//! Batched activations are stored as `[batch × (channels·height·width)]`.
//! Convolution is lowered to a single product per batch: the kernel matrix
//! `[F × C·k·k]` times the column matrix `[C·k·k × batch·H'·W']`, where column
//! rows are ordered `(channel, ky, kx)`.

use super::linalg::{gemm, Bias};
use super::tensor::{transpose_into, Tensor};
use crate::error::{Error, Result};

/// Geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_dims(&self) -> Result<(usize, usize)> {
        let out = |size: usize, what: &str| -> Result<usize> {
            if self.stride == 0 || self.kernel == 0 || self.kernel > size {
                return Err(Error::shape(format!(
                    "kernel {} / stride {} do not fit {what} {size}",
                    self.kernel, self.stride
                )));
            }
            let span = size - self.kernel;
            if !span.is_multiple_of(self.stride) {
                return Err(Error::shape(format!(
                    "({size} - {}) / {} is not integral for {what}",
                    self.kernel, self.stride
                )));
            }
            Ok(span / self.stride + 1)
        };
        Ok((out(self.height, "height")?, out(self.width, "width")?))
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        let (oh, ow) = self.out_dims().unwrap_or((0, 0));
        self.filters * oh * ow
    }
}

fn im2col(geo: &ConvGeometry, input: &[f32], batch: usize) -> Vec<f32> {
    let (oh, ow) = geo.out_dims().expect("validated geometry");
    let plane = oh * ow;
    let cols_n = batch * plane;
    let (h, w, k, st) = (geo.height, geo.width, geo.kernel, geo.stride);
    let in_len = geo.input_len();
    let mut cols = vec![0.0; geo.patch_len() * cols_n];
    for c in 0..geo.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for s in 0..batch {
                    let src = &input[s * in_len + c * h * w..s * in_len + (c + 1) * h * w];
                    for oy in 0..oh {
                        let iy = oy * st + ky;
                        let base = s * plane + oy * ow;
                        for ox in 0..ow {
                            dst[base + ox] = src[iy * w + ox * st + kx];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(geo: &ConvGeometry, cols: &[f32], batch: usize, out: &mut [f32]) {
    let (oh, ow) = geo.out_dims().expect("validated geometry");
    let plane = oh * ow;
    let cols_n = batch * plane;
    let (h, w, k, st) = (geo.height, geo.width, geo.kernel, geo.stride);
    let in_len = geo.input_len();
    for c in 0..geo.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for s in 0..batch {
                    let dst = &mut out[s * in_len + c * h * w..s * in_len + (c + 1) * h * w];
                    for oy in 0..oh {
                        let iy = oy * st + ky;
                        let base = s * plane + oy * ow;
                        for ox in 0..ow {
                            dst[iy * w + ox * st + kx] += src[base + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched forward pass. `input` is `[batch × C·H·W]`, `kernels` is
/// `[F × C·k·k]` flat. Returns `[batch × F·H'·W']`.
pub(crate) fn conv_forward_batch(
    geo: &ConvGeometry,
    input: &[f32],
    batch: usize,
    kernels: &[f32],
    bias: &[f32],
) -> Vec<f32> {
    let (oh, ow) = geo.out_dims().expect("validated geometry");
    let plane = oh * ow;
    let cols = im2col(geo, input, batch);
    let mut prod = vec![0.0; geo.filters * batch * plane];
    gemm(
        kernels,
        &cols,
        geo.filters,
        geo.patch_len(),
        batch * plane,
        Bias::PerRow(bias),
        &mut prod,
    );
    if batch == 1 {
        return prod;
    }
    let mut out = vec![0.0; batch * geo.filters * plane];
    for f in 0..geo.filters {
        for s in 0..batch {
            out[(s * geo.filters + f) * plane..(s * geo.filters + f + 1) * plane]
                .copy_from_slice(&prod[(f * batch + s) * plane..(f * batch + s + 1) * plane]);
        }
    }
    out
}

/// Gradients of one batched convolution.
pub(crate) struct ConvGrads {
    pub kernels: Vec<f32>,
    pub bias: Vec<f32>,
    pub input: Option<Vec<f32>>,
}

pub(crate) fn conv_backward_batch(
    geo: &ConvGeometry,
    input: &[f32],
    batch: usize,
    kernels: &[f32],
    dout: &[f32],
    need_input_grad: bool,
) -> ConvGrads {
    let (oh, ow) = geo.out_dims().expect("validated geometry");
    let plane = oh * ow;
    let cols_n = batch * plane;
    let patch = geo.patch_len();

    // [batch × F × plane] -> [F × batch·plane]
    let mut dy = vec![0.0; geo.filters * cols_n];
    for s in 0..batch {
        for f in 0..geo.filters {
            dy[(f * batch + s) * plane..(f * batch + s + 1) * plane].copy_from_slice(
                &dout[(s * geo.filters + f) * plane..(s * geo.filters + f + 1) * plane],
            );
        }
    }

    let bias = dy
        .chunks_exact(cols_n)
        .map(|row| row.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();

    let cols = im2col(geo, input, batch);
    let mut cols_t = vec![0.0; cols.len()];
    transpose_into(&cols, patch, cols_n, &mut cols_t);
    let mut dk = vec![0.0; geo.filters * patch];
    gemm(
        &dy,
        &cols_t,
        geo.filters,
        cols_n,
        patch,
        Bias::None,
        &mut dk,
    );

    let input_grad = need_input_grad.then(|| {
        let mut k_t = vec![0.0; kernels.len()];
        transpose_into(kernels, geo.filters, patch, &mut k_t);
        let mut dcols = vec![0.0; patch * cols_n];
        gemm(
            &k_t,
            &dy,
            patch,
            geo.filters,
            cols_n,
            Bias::None,
            &mut dcols,
        );
        let mut dx = vec![0.0; batch * geo.input_len()];
        col2im_add(geo, &dcols, batch, &mut dx);
        dx
    });

    ConvGrads {
        kernels: dk,
        bias,
        input: input_grad,
    }
}

/// Single-image convolution: `input [C×H×W]`, `kernels [F×C×k×k]`,
/// `bias [F]`, returns `[F×H'×W']`. Cross-correlation (no kernel flip),
/// valid padding.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f32],
    stride: usize,
) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::shape(format!("conv input must be C×H×W, got {s:?}"))),
    };
    let (f, kc, kh, kw) = match kernels.shape() {
        &[f, kc, kh, kw] => (f, kc, kh, kw),
        s => return Err(Error::shape(format!("kernels must be F×C×k×k, got {s:?}"))),
    };
    if kc != c || kh != kw {
        return Err(Error::shape(format!(
            "kernels {:?} incompatible with input {:?}",
            kernels.shape(),
            input.shape()
        )));
    }
    if bias.len() != f {
        return Err(Error::shape(format!(
            "{} biases for {f} filters",
            bias.len()
        )));
    }
    let geo = ConvGeometry {
        in_channels: c,
        height: h,
        width: w,
        filters: f,
        kernel: kh,
        stride,
    };
    let (oh, ow) = geo.out_dims()?;
    let out = conv_forward_batch(&geo, input.data(), 1, kernels.data(), bias);
    Tensor::new(vec![f, oh, ow], out)
}

/// Max pooling geometry (square window).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub stride: usize,
}

impl PoolGeometry {
    pub fn out_dims(&self) -> Result<(usize, usize)> {
        if self.size == 0 || self.stride == 0 || self.size > self.height || self.size > self.width {
            return Err(Error::shape(format!(
                "pool window {} / stride {} do not fit {}×{}",
                self.size, self.stride, self.height, self.width
            )));
        }
        Ok((
            (self.height - self.size) / self.stride + 1,
            (self.width - self.size) / self.stride + 1,
        ))
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        let (oh, ow) = self.out_dims().unwrap_or((0, 0));
        self.channels * oh * ow
    }
}

/// Returns pooled values and, per output, the flat within-sample index of the
/// winning input (first maximum in scan order).
pub(crate) fn maxpool_forward(
    geo: &PoolGeometry,
    input: &[f32],
    batch: usize,
) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = geo.out_dims().expect("validated geometry");
    let in_len = geo.input_len();
    let out_len = geo.output_len();
    let mut out = vec![0.0; batch * out_len];
    let mut arg = vec![0u32; batch * out_len];
    for s in 0..batch {
        let x = &input[s * in_len..(s + 1) * in_len];
        for c in 0..geo.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = f32::NEG_INFINITY;
                    for ky in 0..geo.size {
                        for kx in 0..geo.size {
                            let idx = (c * geo.height + oy * geo.stride + ky) * geo.width
                                + ox * geo.stride
                                + kx;
                            if best == usize::MAX || x[idx] > best_v {
                                best = idx;
                                best_v = x[idx];
                            }
                        }
                    }
                    let o = s * out_len + (c * oh + oy) * ow + ox;
                    out[o] = best_v;
                    arg[o] = best as u32;
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(
    geo: &PoolGeometry,
    argmax: &[u32],
    dout: &[f32],
    batch: usize,
) -> Vec<f32> {
    let in_len = geo.input_len();
    let out_len = geo.output_len();
    let mut dx = vec![0.0; batch * in_len];
    for s in 0..batch {
        for o in 0..out_len {
            dx[s * in_len + argmax[s * out_len + o] as usize] += dout[s * out_len + o];
        }
    }
    dx
}
