//! Zero-padded convolution and its adjoint (transposed convolution), both
//! lowered to a single GEMM per sample through `im2col`/`col2im`.

use crate::error::{Error, Result};
use crate::linalg::{gemm, Mat};
use crate::tensor::Tensor;

use super::{restore_rank, split_batch, BatchDims};

/// Weights `[out_ch, in_ch, k, k]`, bias `[out_ch]`, stride and zero padding.
///
/// For a transposed convolution the same weight tensor is read as the adjoint
/// map, so its input has `out_ch` channels, it produces `in_ch` channels and
/// the bias has `in_ch` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended to a transposed convolution's output so it
    /// can invert a strided convolution that dropped a remainder. Must be
    /// smaller than `stride`. Ignored by the forward convolution.
    pub output_padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let p = ConvParams {
            weight,
            bias,
            stride,
            padding,
            output_padding: 0,
        };
        p.check_geometry()?;
        if p.kernel().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "convolution kernel size must be odd, got {}",
                p.kernel()
            )));
        }
        p.check_bias(p.out_channels())?;
        Ok(p)
    }

    pub fn transposed(
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        let p = ConvParams {
            weight,
            bias,
            stride,
            padding,
            output_padding,
        };
        p.check_geometry()?;
        if output_padding >= stride {
            return Err(Error::InvalidArgument(format!(
                "output_padding {output_padding} must be smaller than stride {stride}"
            )));
        }
        p.check_bias(p.in_channels())?;
        Ok(p)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Spatial output extent of the forward convolution, if non-empty.
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        conv_extent(input, self.kernel(), self.stride, self.padding)
    }

    /// Spatial output extent of the transposed convolution.
    pub fn transposed_extent(&self, input: usize) -> Option<usize> {
        ((input - 1) * self.stride + self.kernel() + self.output_padding).checked_sub(2 * self.padding)
            .filter(|&e| e > 0)
    }

    fn check_geometry(&self) -> Result<()> {
        let s = self.weight.shape();
        if s.len() != 4 || s[2] != s[3] {
            return Err(Error::InvalidArgument(format!(
                "convolution weight must be [out, in, k, k], got {s:?}"
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(())
    }

    fn check_bias(&self, expected: usize) -> Result<()> {
        if self.bias.shape() != [expected] {
            return Err(Error::ShapeMismatch {
                op: "conv bias",
                expected: vec![expected],
                got: self.bias.shape().to_vec(),
            });
        }
        Ok(())
    }
}

pub(crate) fn conv_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

#[derive(Clone, Copy)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Geometry {
    pub fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds one `[C, H, W]` sample into `[C·k·k, Ho·Wo]` patch columns.
/// Output columns `[lo, hi)` whose input column `oj·stride + kj − pad` lies in `0..w`.
fn valid_cols(g: Geometry, kj: usize) -> (usize, usize) {
    let lo = if g.pad > kj { (g.pad - kj).div_ceil(g.stride) } else { 0 };
    let hi = if g.w + g.pad > kj { (g.w + g.pad - kj).div_ceil(g.stride).min(g.wo) } else { 0 };
    (lo.min(hi), hi)
}

pub(crate) fn im2col(x: &[f64], g: Geometry, cols: &mut [f64]) {
    let n_out = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((c * g.k + ki) * g.k + kj) * n_out;
                let dst = &mut cols[row..row + n_out];
                let (lo, hi) = valid_cols(g, kj);
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let seg = &mut dst[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize || lo == hi {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    seg[..lo].fill(0.0);
                    seg[hi..].fill(0.0);
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        seg[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (v, s) in seg[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *v = *s;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into a `[C, H, W]` sample.
pub(crate) fn col2im(cols: &[f64], g: Geometry, x: &mut [f64]) {
    let n_out = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((c * g.k + ki) * g.k + kj) * n_out;
                let src = &cols[row..row + n_out];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w + first..(ii as usize + 1) * g.w];
                    let seg = &src[oi * g.wo + lo..oi * g.wo + hi];
                    for (d, s) in dst.iter_mut().step_by(g.stride).zip(seg) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

fn forward_geometry(op: &'static str, dims: BatchDims, p: &ConvParams) -> Result<Geometry> {
    if dims.c != p.in_channels() {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![p.in_channels()],
            got: vec![dims.c],
        });
    }
    let k = p.kernel();
    let (ho, wo) = match (p.output_extent(dims.h), p.output_extent(dims.w)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{op}: {}x{} input too small for kernel {k} with padding {}",
                dims.h, dims.w, p.padding
            )))
        }
    };
    Ok(Geometry {
        channels: dims.c,
        h: dims.h,
        w: dims.w,
        k,
        stride: p.stride,
        pad: p.padding,
        ho,
        wo,
    })
}

pub(crate) fn add_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

pub(crate) fn bias_grad(upstream: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    let mut g = vec![0.0; channels];
    for (i, chunk) in upstream.chunks(plane).enumerate() {
        g[i % channels] += chunk.iter().sum::<f64>();
    }
    g
}

/// Cross-correlation with zero padding. Accepts `[C, H, W]` or `[N, C, H, W]`.
pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let dims = split_batch("conv2d", input)?;
    let g = forward_geometry("conv2d", dims, p)?;
    let cout = p.out_channels();
    let mut cols = vec![0.0; g.rows() * g.cols()];
    let mut out = vec![0.0; dims.n * cout * g.cols()];
    let sample = dims.c * dims.h * dims.w;
    for n in 0..dims.n {
        im2col(&input.data()[n * sample..(n + 1) * sample], g, &mut cols);
        let dst = &mut out[n * cout * g.cols()..(n + 1) * cout * g.cols()];
        gemm(
            Mat::new(p.weight.data(), cout, g.rows()),
            Mat::new(&cols, g.rows(), g.cols()),
            dst,
            0.0,
        );
    }
    add_bias(&mut out, p.bias.data(), g.cols());
    let out = Tensor::from_parts_unchecked(vec![dims.n, cout, g.ho, g.wo], out);
    out.ensure_finite("conv2d")?;
    Ok(restore_rank(out, dims))
}

/// Exact gradients of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward(upstream: &Tensor, input: &Tensor, p: &ConvParams) -> Result<ConvGrads> {
    let dims = split_batch("conv2d_backward", input)?;
    let g = forward_geometry("conv2d_backward", dims, p)?;
    let cout = p.out_channels();
    expect_upstream("conv2d_backward", upstream, dims, cout, g.ho, g.wo)?;

    let sample = dims.c * dims.h * dims.w;
    let up_sample = cout * g.cols();
    let mut cols = vec![0.0; g.rows() * g.cols()];
    let mut gcols = vec![0.0; g.rows() * g.cols()];
    let mut gw = vec![0.0; p.weight.len()];
    let mut gin = vec![0.0; input.len()];
    for n in 0..dims.n {
        let x = &input.data()[n * sample..(n + 1) * sample];
        let up = &upstream.data()[n * up_sample..(n + 1) * up_sample];
        im2col(x, g, &mut cols);
        gemm(
            Mat::new(up, cout, g.cols()),
            Mat::new(&cols, g.rows(), g.cols()).t(),
            &mut gw,
            1.0,
        );
        gemm(
            Mat::new(p.weight.data(), cout, g.rows()).t(),
            Mat::new(up, cout, g.cols()),
            &mut gcols,
            0.0,
        );
        col2im(&gcols, g, &mut gin[n * sample..(n + 1) * sample]);
    }
    Ok(ConvGrads {
        input: Tensor::from_parts_unchecked(input.shape().to_vec(), gin),
        weight: Tensor::from_parts_unchecked(p.weight.shape().to_vec(), gw),
        bias: Tensor::from_parts_unchecked(vec![cout], bias_grad(upstream.data(), cout, g.cols())),
    })
}

fn transposed_geometry(op: &'static str, dims: BatchDims, p: &ConvParams) -> Result<Geometry> {
    if dims.c != p.out_channels() {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![p.out_channels()],
            got: vec![dims.c],
        });
    }
    let (h, w) = match (p.transposed_extent(dims.h), p.transposed_extent(dims.w)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{op}: padding {} leaves an empty output",
                p.padding
            )))
        }
    };
    // The geometry describes the forward convolution whose adjoint we apply.
    Ok(Geometry {
        channels: p.in_channels(),
        h,
        w,
        k: p.kernel(),
        stride: p.stride,
        pad: p.padding,
        ho: dims.h,
        wo: dims.w,
    })
}

/// Adjoint of [`conv2d_forward`] under the same weights, plus a bias over the
/// produced channels.
pub fn transposed_conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let dims = split_batch("transposed_conv2d", input)?;
    let g = transposed_geometry("transposed_conv2d", dims, p)?;
    let cy = p.out_channels();
    let cx = p.in_channels();
    let mut cols = vec![0.0; g.rows() * g.cols()];
    let out_sample = cx * g.h * g.w;
    let mut out = vec![0.0; dims.n * out_sample];
    let in_sample = cy * g.cols();
    for n in 0..dims.n {
        gemm(
            Mat::new(p.weight.data(), cy, g.rows()).t(),
            Mat::new(&input.data()[n * in_sample..(n + 1) * in_sample], cy, g.cols()),
            &mut cols,
            0.0,
        );
        col2im(&cols, g, &mut out[n * out_sample..(n + 1) * out_sample]);
    }
    add_bias(&mut out, p.bias.data(), g.h * g.w);
    let out = Tensor::from_parts_unchecked(vec![dims.n, cx, g.h, g.w], out);
    out.ensure_finite("transposed_conv2d")?;
    Ok(restore_rank(out, dims))
}

pub fn transposed_conv2d_backward(
    upstream: &Tensor,
    input: &Tensor,
    p: &ConvParams,
) -> Result<ConvGrads> {
    let dims = split_batch("transposed_conv2d_backward", input)?;
    let g = transposed_geometry("transposed_conv2d_backward", dims, p)?;
    let cy = p.out_channels();
    let cx = p.in_channels();
    expect_upstream("transposed_conv2d_backward", upstream, dims, cx, g.h, g.w)?;

    let up_sample = cx * g.h * g.w;
    let in_sample = cy * g.cols();
    let mut gcols = vec![0.0; g.rows() * g.cols()];
    let mut gw = vec![0.0; p.weight.len()];
    let mut gin = vec![0.0; input.len()];
    for n in 0..dims.n {
        im2col(&upstream.data()[n * up_sample..(n + 1) * up_sample], g, &mut gcols);
        let y = &input.data()[n * in_sample..(n + 1) * in_sample];
        gemm(
            Mat::new(y, cy, g.cols()),
            Mat::new(&gcols, g.rows(), g.cols()).t(),
            &mut gw,
            1.0,
        );
        gemm(
            Mat::new(p.weight.data(), cy, g.rows()),
            Mat::new(&gcols, g.rows(), g.cols()),
            &mut gin[n * in_sample..(n + 1) * in_sample],
            0.0,
        );
    }
    Ok(ConvGrads {
        input: Tensor::from_parts_unchecked(input.shape().to_vec(), gin),
        weight: Tensor::from_parts_unchecked(p.weight.shape().to_vec(), gw),
        bias: Tensor::from_parts_unchecked(vec![cx], bias_grad(upstream.data(), cx, g.h * g.w)),
    })
}

pub(crate) fn expect_upstream(
    op: &'static str,
    upstream: &Tensor,
    dims: BatchDims,
    c: usize,
    h: usize,
    w: usize,
) -> Result<()> {
    let expected = if dims.batched {
        vec![dims.n, c, h, w]
    } else {
        vec![c, h, w]
    };
    if upstream.shape() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            op,
            expected,
            got: upstream.shape().to_vec(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_kernel(k: usize) -> Tensor {
        let mut w = Tensor::zeros(&[1, 1, k, k]).unwrap();
        w.set(&[0, 0, k / 2, k / 2], 1.0).unwrap();
        w
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::from_vec(&[1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let p = ConvParams::new(delta_kernel(3), Tensor::zeros(&[1]).unwrap(), 1, 1).unwrap();
        assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
        let up = Tensor::from_vec(&[1, 3, 3], lcg(3, 9)).unwrap();
        let g = conv2d_backward(&up, &x, &p).unwrap();
        assert_eq!(g.input, up);
        assert!((g.bias.item().unwrap() - up.sum()).abs() < 1e-15);
    }

    #[test]
    fn centered_delta_with_ones_kernel() {
        let mut x = Tensor::zeros(&[1, 3, 3]).unwrap();
        x.set(&[0, 1, 1], 1.0).unwrap();
        let p = ConvParams::new(
            Tensor::full(&[1, 1, 3, 3], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            1,
        )
        .unwrap();
        assert_eq!(conv2d_forward(&x, &p).unwrap().data(), &[1.0; 9]);
    }

    #[test]
    fn bias_grad_is_channel_sum() {
        let x = Tensor::from_vec(&[2, 2, 4, 4], lcg(1, 64)).unwrap();
        let p = ConvParams::new(
            Tensor::from_vec(&[3, 2, 3, 3], lcg(2, 54)).unwrap(),
            Tensor::zeros(&[3]).unwrap(),
            2,
            1,
        )
        .unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
        let up = Tensor::from_vec(y.shape(), lcg(5, y.len())).unwrap();
        let g = conv2d_backward(&up, &x, &p).unwrap();
        for c in 0..3 {
            let mut s = 0.0;
            for n in 0..2 {
                for i in 0..4 {
                    s += up.data()[(n * 3 + c) * 4 + i];
                }
            }
            assert!((g.bias.data()[c] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn even_kernels_rejected_for_conv() {
        let r = ConvParams::new(
            Tensor::zeros(&[1, 1, 2, 2]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn transposed_shape_arithmetic() {
        let p = ConvParams::transposed(
            Tensor::full(&[1, 1, 2, 2], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            2,
            0,
            0,
        )
        .unwrap();
        let y = transposed_conv2d_forward(&Tensor::full(&[1, 2, 2], 1.0).unwrap(), &p).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        assert_eq!(y.data(), &[1.0; 16]);
    }

    #[test]
    fn transposed_delta_stamps_kernel() {
        let kernel: Vec<f64> = (1..=9).map(f64::from).collect();
        let p = ConvParams::transposed(
            Tensor::from_vec(&[1, 1, 3, 3], kernel.clone()).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            0,
            0,
        )
        .unwrap();
        let mut x = Tensor::zeros(&[1, 2, 2]).unwrap();
        x.set(&[0, 1, 0], 1.0).unwrap();
        let y = transposed_conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        for ki in 0..3 {
            for kj in 0..3 {
                assert_eq!(y.get(&[0, 1 + ki, kj]).unwrap(), kernel[ki * 3 + kj]);
            }
        }
        assert_eq!(y.sum(), kernel.iter().sum::<f64>());
    }

    #[test]
    fn channel_mismatch() {
        let p = ConvParams::new(
            Tensor::zeros(&[1, 2, 3, 3]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            1,
        )
        .unwrap();
        assert!(conv2d_forward(&Tensor::zeros(&[3, 4, 4]).unwrap(), &p).is_err());
    }
}
