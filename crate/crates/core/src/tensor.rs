//! Dense row-major `f64` tensors and their binary encoding.
//!
//! Images use channels × height × width, with a batch axis prepended when
//! needed. Broadcasting is intentionally absent; every binary operation
//! requires identical shapes.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const TENSOR_MAGIC: &[u8; 4] = b"FITN";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor of `shape` filled with `value`.
    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = checked_len(shape)?;
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "item",
                expected: vec![1],
                got: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    /// Element at a multi-index.
    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let at = self.offset(index)?;
        self.data[at] = value;
        Ok(())
    }

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, n)| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "index {index:?} out of bounds for shape {:?}",
                self.shape
            )));
        }
        Ok(index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, n)| acc * n + i))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                expected: self.shape.clone(),
                got: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        ensure_same_shape(op, self, other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        ensure_same_shape("dot", self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        ensure_same_shape("max_abs_diff", self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Splits a leading batch axis: `[N, ...]` into `N` tensors of shape `[...]`.
    pub fn unstack(&self) -> Result<Vec<Tensor>> {
        if self.rank() < 2 {
            return Err(Error::InvalidArgument(format!(
                "unstack needs rank >= 2, got shape {:?}",
                self.shape
            )));
        }
        let inner = &self.shape[1..];
        let step: usize = inner.iter().product();
        Ok(self
            .data
            .chunks(step)
            .map(|c| Tensor::from_parts_unchecked(inner.to_vec(), c.to_vec()))
            .collect())
    }

    /// Stacks equal-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            ensure_same_shape("stack", first, t)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Writes the `FITN` encoding: magic, u32 rank, u32 extents, f64 payload (little-endian).
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.rank() + 8 * self.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::format("tensor", format!("bad magic {magic:?}")));
        }
        let rank = read_u32(r)? as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::format("tensor", format!("unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let len = checked_len(&shape).map_err(|e| Error::format("tensor", e.to_string()))?;
        let mut bytes = vec![0u8; len * 8];
        read_exact(r, &mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { shape, data })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Tensor> {
        Tensor::read_from(&mut bytes)
    }
}

pub(crate) fn ensure_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            expected: a.shape.clone(),
            got: b.shape.clone(),
        });
    }
    Ok(())
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidArgument("shape must have at least one axis".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "shape {shape:?} has a zero extent"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidArgument(format!("shape {shape:?} overflows")))
}

pub(crate) fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("stream", format!("truncated input ({e})")))
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fill() {
        let t = Tensor::full(&[2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn row_major_layout() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(&[0, 1, 0]).unwrap(), 3.0);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(Tensor::from_vec(&[3], vec![1.0, 2.0]).is_err());
        assert!(Tensor::zeros(&[0, 2]).is_err());
    }

    #[test]
    fn encoding_layout() {
        let t = Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"FITN");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1.5f64.to_le_bytes());
        assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
        assert!(Tensor::from_bytes(&bytes[..15]).is_err());
    }

    #[test]
    fn stack_unstack() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.unstack().unwrap(), vec![a, b]);
    }
}
