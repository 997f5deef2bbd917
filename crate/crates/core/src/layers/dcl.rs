//! Displacement convolution: a stride-1 convolution whose window is
//! recentred at every output position by a per-pixel displacement.
//!
//! For output `(i, j)` and tap `(a, b)` in `-w..=w` the layer reads
//! `I(i + a + d_y(i, j), j + b + d_x(i, j))` with bilinear interpolation.
//! Reads are clamped to the image border. A tap whose undisplaced position
//! `(i + a, j + b)` lies outside the image contributes nothing, exactly as in
//! the zero-padded convolution; with `d ≡ 0` the layer therefore reproduces
//! [`conv2d_forward`](super::conv2d_forward) bit for bit.

use crate::error::{Error, Result};
use crate::linalg::{gemm, Mat};
use crate::sampling::Stencil;
use crate::tensor::Tensor;

use super::conv::{add_bias, bias_grad, expect_upstream, ConvParams};
use super::{restore_rank, split_batch, BatchDims};

/// Border handling for displaced reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BorderMode {
    #[default]
    Clamp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DclParams {
    /// Stride 1, padding `k / 2`.
    pub conv: ConvParams,
    pub border_mode: BorderMode,
}

#[derive(Clone, Debug)]
pub struct DclGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
    /// Same layout as the flow argument: channel 0 is `d_x`, channel 1 is `d_y`.
    pub flow: Tensor,
}

impl DclParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let k = weight.shape().get(2).copied().unwrap_or(0);
        let conv = ConvParams::new(weight, bias, 1, k / 2)?;
        Ok(DclParams {
            conv,
            border_mode: BorderMode::Clamp,
        })
    }

    pub fn from_conv(conv: ConvParams) -> Result<Self> {
        if conv.stride != 1 || conv.padding != conv.kernel() / 2 || conv.kernel().is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "displacement layer needs an odd kernel, stride 1 and padding k/2".into(),
            ));
        }
        Ok(DclParams {
            conv,
            border_mode: BorderMode::Clamp,
        })
    }
}

fn check_flow(op: &'static str, dims: BatchDims, flow: &Tensor) -> Result<()> {
    let expected = if dims.batched {
        vec![dims.n, 2, dims.h, dims.w]
    } else {
        vec![2, dims.h, dims.w]
    };
    if flow.shape() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            op,
            expected,
            got: flow.shape().to_vec(),
        });
    }
    Ok(())
}

/// Stencils for every (tap, output position) of one sample; `None` where the
/// tap falls outside the undisplaced support.
fn stencils(flow: &[f64], h: usize, w: usize, k: usize) -> Vec<Option<Stencil>> {
    let half = (k / 2) as isize;
    let plane = h * w;
    let (fx, fy) = flow.split_at(plane);
    let mut out = Vec::with_capacity(k * k * plane);
    for a in -half..=half {
        for b in -half..=half {
            for i in 0..h {
                let ii = i as isize + a;
                for j in 0..w {
                    let jj = j as isize + b;
                    if ii < 0 || ii >= h as isize || jj < 0 || jj >= w as isize {
                        out.push(None);
                        continue;
                    }
                    let p = i * w + j;
                    out.push(Some(Stencil::new(
                        ii as f64 + fy[p],
                        jj as f64 + fx[p],
                        h,
                        w,
                    )));
                }
            }
        }
    }
    out
}

fn gather(x: &[f64], st: &[Option<Stencil>], c: usize, h: usize, w: usize, taps: usize, cols: &mut [f64]) {
    let plane = h * w;
    for ci in 0..c {
        let img = &x[ci * plane..(ci + 1) * plane];
        for t in 0..taps {
            let row = (ci * taps + t) * plane;
            let dst = &mut cols[row..row + plane];
            let src = &st[t * plane..(t + 1) * plane];
            for (v, s) in dst.iter_mut().zip(src) {
                *v = s.map_or(0.0, |s| s.sample(img, w));
            }
        }
    }
}

pub fn dcl_forward(input: &Tensor, p: &DclParams, flow: &Tensor) -> Result<Tensor> {
    let dims = split_batch("dcl", input)?;
    check_flow("dcl", dims, flow)?;
    let conv = &p.conv;
    if dims.c != conv.in_channels() {
        return Err(Error::ShapeMismatch {
            op: "dcl",
            expected: vec![conv.in_channels()],
            got: vec![dims.c],
        });
    }
    let (k, cout) = (conv.kernel(), conv.out_channels());
    let taps = k * k;
    let plane = dims.h * dims.w;
    let rows = dims.c * taps;
    let mut cols = vec![0.0; rows * plane];
    let mut out = vec![0.0; dims.n * cout * plane];
    let sample = dims.c * plane;
    for n in 0..dims.n {
        let st = stencils(&flow.data()[n * 2 * plane..(n + 1) * 2 * plane], dims.h, dims.w, k);
        gather(&input.data()[n * sample..(n + 1) * sample], &st, dims.c, dims.h, dims.w, taps, &mut cols);
        gemm(
            Mat::new(conv.weight.data(), cout, rows),
            Mat::new(&cols, rows, plane),
            &mut out[n * cout * plane..(n + 1) * cout * plane],
            0.0,
        );
    }
    add_bias(&mut out, conv.bias.data(), plane);
    let out = Tensor::from_parts_unchecked(vec![dims.n, cout, dims.h, dims.w], out);
    out.ensure_finite("dcl")?;
    Ok(restore_rank(out, dims))
}

pub fn dcl_backward(upstream: &Tensor, input: &Tensor, p: &DclParams, flow: &Tensor) -> Result<DclGrads> {
    let dims = split_batch("dcl_backward", input)?;
    check_flow("dcl_backward", dims, flow)?;
    let conv = &p.conv;
    let (k, cout) = (conv.kernel(), conv.out_channels());
    expect_upstream("dcl_backward", upstream, dims, cout, dims.h, dims.w)?;
    let taps = k * k;
    let (h, w) = (dims.h, dims.w);
    let plane = h * w;
    let rows = dims.c * taps;
    let sample = dims.c * plane;

    let mut cols = vec![0.0; rows * plane];
    let mut gcols = vec![0.0; rows * plane];
    let mut gw = vec![0.0; conv.weight.len()];
    let mut gin = vec![0.0; input.len()];
    let mut gflow = vec![0.0; flow.len()];
    for n in 0..dims.n {
        let x = &input.data()[n * sample..(n + 1) * sample];
        let up = &upstream.data()[n * cout * plane..(n + 1) * cout * plane];
        let st = stencils(&flow.data()[n * 2 * plane..(n + 1) * 2 * plane], h, w, k);
        gather(x, &st, dims.c, h, w, taps, &mut cols);
        gemm(
            Mat::new(up, cout, plane),
            Mat::new(&cols, rows, plane).t(),
            &mut gw,
            1.0,
        );
        gemm(
            Mat::new(conv.weight.data(), cout, rows).t(),
            Mat::new(up, cout, plane),
            &mut gcols,
            0.0,
        );
        let gx = &mut gin[n * sample..(n + 1) * sample];
        let (gfx, gfy) = gflow[n * 2 * plane..(n + 1) * 2 * plane].split_at_mut(plane);
        for ci in 0..dims.c {
            let img = &x[ci * plane..(ci + 1) * plane];
            let gimg = &mut gx[ci * plane..(ci + 1) * plane];
            for t in 0..taps {
                let g_row = &gcols[(ci * taps + t) * plane..(ci * taps + t + 1) * plane];
                for (pos, s) in st[t * plane..(t + 1) * plane].iter().enumerate() {
                    let Some(s) = s else { continue };
                    let g = g_row[pos];
                    s.scatter(gimg, w, g);
                    let (dy, dx) = s.gradient(img, w);
                    gfx[pos] += g * dx;
                    gfy[pos] += g * dy;
                }
            }
        }
    }
    Ok(DclGrads {
        input: Tensor::from_parts_unchecked(input.shape().to_vec(), gin),
        weight: Tensor::from_parts_unchecked(conv.weight.shape().to_vec(), gw),
        bias: Tensor::from_parts_unchecked(vec![cout], bias_grad(upstream.data(), cout, plane)),
        flow: Tensor::from_parts_unchecked(flow.shape().to_vec(), gflow),
    })
}
