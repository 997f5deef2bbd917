//! Layer kernels with explicit forward and backward passes.
//!
//! Spatial kernels accept a single `[C, H, W]` image or an `[N, C, H, W]`
//! batch and return the same rank they were given.

mod conv;
mod dcl;
mod pool;

pub use conv::{
    conv2d_backward, conv2d_forward, transposed_conv2d_backward, transposed_conv2d_forward,
    ConvGrads, ConvParams,
};
pub use dcl::{dcl_backward, dcl_forward, BorderMode, DclGrads, DclParams};
pub use pool::{dense_backward, dense_forward, maxpool2d_backward, maxpool2d_forward, DenseGrads, Pooled};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct BatchDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub batched: bool,
}

pub(crate) fn split_batch(op: &'static str, t: &Tensor) -> Result<BatchDims> {
    match *t.shape() {
        [c, h, w] => Ok(BatchDims {
            n: 1,
            c,
            h,
            w,
            batched: false,
        }),
        [n, c, h, w] => Ok(BatchDims {
            n,
            c,
            h,
            w,
            batched: true,
        }),
        _ => Err(Error::InvalidArgument(format!(
            "{op}: expected [C, H, W] or [N, C, H, W], got {:?}",
            t.shape()
        ))),
    }
}

pub(crate) fn restore_rank(t: Tensor, dims: BatchDims) -> Tensor {
    if dims.batched {
        t
    } else {
        let shape = t.shape()[1..].to_vec();
        Tensor::from_parts_unchecked(shape, t.into_data())
    }
}
