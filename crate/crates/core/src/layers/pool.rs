use crate::error::{Error, Result};
use crate::linalg::{gemm, Mat};
use crate::tensor::Tensor;

use super::{restore_rank, split_batch};

/// Output of a 2×2/stride-2 max pool with the flat input index of each winner.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn maxpool2d_forward(input: &Tensor) -> Result<Pooled> {
    let dims = split_batch("maxpool2d", input)?;
    let (ho, wo) = (dims.h / 2, dims.w / 2);
    if ho == 0 || wo == 0 {
        return Err(Error::InvalidArgument(format!(
            "maxpool2d: {}x{} input is smaller than the 2x2 window",
            dims.h, dims.w
        )));
    }
    let x = input.data();
    let planes = dims.n * dims.c;
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut argmax = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * dims.h * dims.w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * dims.w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let at = base + (2 * i + di) * dims.w + 2 * j + dj;
                    if x[at] > x[best] {
                        best = at;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let output = Tensor::from_parts_unchecked(vec![dims.n, dims.c, ho, wo], out);
    Ok(Pooled {
        output: restore_rank(output, dims),
        argmax,
    })
}

pub fn maxpool2d_backward(upstream: &Tensor, input_shape: &[usize], argmax: &[usize]) -> Result<Tensor> {
    if upstream.len() != argmax.len() {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d_backward",
            expected: vec![argmax.len()],
            got: upstream.shape().to_vec(),
        });
    }
    let mut g = Tensor::zeros(input_shape)?;
    let gd = g.data_mut();
    for (&at, &u) in argmax.iter().zip(upstream.data()) {
        gd[at] += u;
    }
    Ok(g)
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn dense_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, f) = match *input.shape() {
        [f] => (1, f),
        [n, f] => (n, f),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "dense: expected [F] or [N, F] input, got {:?}",
                input.shape()
            )))
        }
    };
    let o = match *weight.shape() {
        [o, wf] if wf == f => o,
        _ => {
            return Err(Error::ShapeMismatch {
                op: "dense",
                expected: vec![weight.shape()[0], f],
                got: weight.shape().to_vec(),
            })
        }
    };
    if bias.shape() != [o] {
        return Err(Error::ShapeMismatch {
            op: "dense bias",
            expected: vec![o],
            got: bias.shape().to_vec(),
        });
    }
    Ok((n, f, o))
}

/// `x · Wᵀ + b` with weights `[out, in]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f, o) = dense_dims(input, weight, bias)?;
    let mut out = vec![0.0; n * o];
    for row in out.chunks_mut(o) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        Mat::new(input.data(), n, f),
        Mat::new(weight.data(), o, f).t(),
        &mut out,
        1.0,
    );
    let shape = if input.rank() == 1 { vec![o] } else { vec![n, o] };
    let out = Tensor::from_parts_unchecked(shape, out);
    out.ensure_finite("dense")?;
    Ok(out)
}

pub fn dense_backward(upstream: &Tensor, input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<DenseGrads> {
    let (n, f, o) = dense_dims(input, weight, bias)?;
    if upstream.len() != n * o {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            expected: vec![n, o],
            got: upstream.shape().to_vec(),
        });
    }
    let up = Mat::new(upstream.data(), n, o);
    let mut gin = vec![0.0; n * f];
    gemm(up, Mat::new(weight.data(), o, f), &mut gin, 0.0);
    let mut gw = vec![0.0; o * f];
    gemm(up.t(), Mat::new(input.data(), n, f), &mut gw, 0.0);
    let mut gb = vec![0.0; o];
    for row in upstream.data().chunks(o) {
        gb.iter_mut().zip(row).for_each(|(g, u)| *g += u);
    }
    Ok(DenseGrads {
        input: Tensor::from_parts_unchecked(input.shape().to_vec(), gin),
        weight: Tensor::from_parts_unchecked(weight.shape().to_vec(), gw),
        bias: Tensor::from_parts_unchecked(vec![o], gb),
    })
}
