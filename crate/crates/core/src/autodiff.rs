//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] lives for one forward pass. Every operation appends a node that
//! owns its value; [`Tape::backward`] walks the nodes in reverse once and
//! accumulates `∂loss/∂leaf` into each tracked leaf.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::layers::{self, ConvParams, DclParams};
use crate::tensor::Tensor;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    id: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.id
    }
}

/// Elementwise operations exposed through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Square,
}

/// Second operand of [`Tape::elementwise`].
#[derive(Clone, Copy, Debug)]
pub enum Operand {
    Var(Var),
    Scalar(f64),
    None,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Reshape(usize),
    Concat(Vec<usize>),
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    },
    Dcl {
        x: usize,
        w: usize,
        b: usize,
        flow: usize,
    },
    MaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    tracked: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "variable {} does not belong to this tape",
                v.id
            )));
        }
        Ok(v.id)
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            tracked,
        });
        Ok(Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        })
    }

    /// Tracked leaf: gradients accumulate into it.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant, false, "constant")
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.check(v)?].value)
    }

    pub fn is_tracked(&self, v: Var) -> Result<bool> {
        Ok(self.nodes[self.check(v)?].tracked)
    }

    /// Accumulated gradient of a tracked leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Result<Option<&Tensor>> {
        Ok(self.nodes[self.check(v)?].grad.as_ref())
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let ia = self.check(a)?;
        let node = &self.nodes[ia];
        let (value, tracked) = (node.value.map(f), node.tracked);
        self.push(value, op(ia), tracked, name)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (na, nb) = (&self.nodes[ia], &self.nodes[ib]);
        let value = na.value.zip_map(&nb.value, name, f)?;
        let tracked = na.tracked || nb.tracked;
        self.push(value, op(ia, ib), tracked, name)
    }

    /// Dispatches one of the elementwise operations; `Scale` takes a scalar
    /// operand, the binary operations a variable, the unary ones nothing.
    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Operand) -> Result<Var> {
        use Elementwise as E;
        match (op, b) {
            (E::Add, Operand::Var(b)) => self.add(a, b),
            (E::Sub, Operand::Var(b)) => self.sub(a, b),
            (E::Mul, Operand::Var(b)) => self.mul(a, b),
            (E::Scale, Operand::Scalar(c)) => self.scale(a, c),
            (E::Relu, Operand::None) => self.relu(a),
            (E::Tanh, Operand::None) => self.tanh(a),
            (E::Sigmoid, Operand::None) => self.sigmoid(a),
            (E::Exp, Operand::None) => self.exp(a),
            (E::Square, Operand::None) => self.square(a),
            (op, b) => Err(Error::InvalidArgument(format!(
                "operand {b:?} does not fit elementwise {op:?}"
            ))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let node = &self.nodes[ia];
        let (value, tracked) = (node.value.map(|x| x * c), node.tracked);
        self.push(value, Op::Scale(ia, c), tracked, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "add_scalar", move |x| x + c, Op::AddScalar)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "relu", |x| x.max(0.0), Op::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "exp", f64::exp, Op::Exp)
    }

    /// Natural logarithm; non-positive inputs surface as a non-finite error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "log", f64::ln, Op::Log)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "square", |x| x * x, Op::Square)
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let node = &self.nodes[ia];
        let (value, tracked) = (Tensor::scalar(node.value.sum()), node.tracked);
        self.push(value, Op::Sum(ia), tracked, "sum")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let node = &self.nodes[ia];
        let (value, tracked) = (node.value.reshape(shape)?, node.tracked);
        self.push(value, Op::Reshape(ia), tracked, "reshape")
    }

    /// Concatenates along the channel axis (axis 0 of `[C, H, W]`, axis 1 of `[N, C, H, W]`).
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let ids = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>>>()?;
        let first = ids
            .first()
            .map(|&i| &self.nodes[i].value)
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rank = first.rank();
        if rank != 3 && rank != 4 {
            return Err(Error::InvalidArgument("concat_channels needs rank 3 or 4".into()));
        }
        let caxis = rank - 3;
        let outer: usize = first.shape()[..caxis].iter().product();
        let mut channels = 0;
        for &i in &ids {
            let s = self.nodes[i].value.shape();
            if s.len() != rank || s[..caxis] != first.shape()[..caxis] || s[caxis + 1..] != first.shape()[caxis + 1..] {
                return Err(Error::ShapeMismatch {
                    op: "concat_channels",
                    expected: first.shape().to_vec(),
                    got: s.to_vec(),
                });
            }
            channels += s[caxis];
        }
        let mut shape = first.shape().to_vec();
        shape[caxis] = channels;
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &i in &ids {
                let v = &self.nodes[i].value;
                let chunk = v.len() / outer;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let tracked = ids.iter().any(|&i| self.nodes[i].tracked);
        self.push(Tensor::from_parts_unchecked(shape, data), Op::Concat(ids), tracked, "concat_channels")
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (ix, iw, ib) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let p = self.conv_params(iw, ib, stride, pad)?;
        let value = layers::conv2d_forward(&self.nodes[ix].value, &p)?;
        let tracked = self.any_tracked(&[ix, iw, ib]);
        self.push(value, Op::Conv2d { x: ix, w: iw, b: ib, stride, pad }, tracked, "conv2d")
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize, out_pad: usize) -> Result<Var> {
        let (ix, iw, ib) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let p = self.tconv_params(iw, ib, stride, pad, out_pad)?;
        let value = layers::transposed_conv2d_forward(&self.nodes[ix].value, &p)?;
        let tracked = self.any_tracked(&[ix, iw, ib]);
        let op = Op::ConvTranspose2d {
            x: ix,
            w: iw,
            b: ib,
            stride,
            pad,
            out_pad,
        };
        self.push(value, op, tracked, "conv_transpose2d")
    }

    /// Displacement convolution; `flow` is `[2, H, W]` or `[N, 2, H, W]` with `(d_x, d_y)` channels.
    pub fn dcl(&mut self, x: Var, w: Var, b: Var, flow: Var) -> Result<Var> {
        let (ix, iw, ib, iflow) = (self.check(x)?, self.check(w)?, self.check(b)?, self.check(flow)?);
        let p = self.dcl_params(iw, ib)?;
        let value = layers::dcl_forward(&self.nodes[ix].value, &p, &self.nodes[iflow].value)?;
        let tracked = self.any_tracked(&[ix, iw, ib, iflow]);
        self.push(value, Op::Dcl { x: ix, w: iw, b: ib, flow: iflow }, tracked, "dcl")
    }

    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let pooled = layers::maxpool2d_forward(&self.nodes[ix].value)?;
        let tracked = self.nodes[ix].tracked;
        self.push(pooled.output, Op::MaxPool { x: ix, argmax: pooled.argmax }, tracked, "maxpool2d")
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let value = layers::dense_forward(&self.nodes[ix].value, &self.nodes[iw].value, &self.nodes[ib].value)?;
        let tracked = self.any_tracked(&[ix, iw, ib]);
        self.push(value, Op::Dense { x: ix, w: iw, b: ib }, tracked, "dense")
    }

    fn any_tracked(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].tracked)
    }

    fn conv_params(&self, w: usize, b: usize, stride: usize, pad: usize) -> Result<ConvParams> {
        ConvParams::new(self.nodes[w].value.clone(), self.nodes[b].value.clone(), stride, pad)
    }

    fn tconv_params(&self, w: usize, b: usize, stride: usize, pad: usize, out_pad: usize) -> Result<ConvParams> {
        ConvParams::transposed(self.nodes[w].value.clone(), self.nodes[b].value.clone(), stride, pad, out_pad)
    }

    fn dcl_params(&self, w: usize, b: usize) -> Result<DclParams> {
        DclParams::new(self.nodes[w].value.clone(), self.nodes[b].value.clone())
    }

    /// Accumulates `∂loss/∂leaf` into every tracked leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let il = self.check(loss)?;
        let node = &self.nodes[il];
        if !node.value.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                expected: vec![1],
                got: node.value.shape().to_vec(),
            });
        }
        if !node.tracked {
            return Err(Error::InvalidArgument(
                "loss does not depend on any tracked leaf".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; il + 1];
        grads[il] = Some(vec![1.0]);
        let mut leaves = Vec::new();
        for id in (0..=il).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.tracked {
                continue;
            }
            if let Op::Leaf = node.op {
                leaves.push((id, g));
                continue;
            }
            for (input, contribution) in self.propagate(id, g)? {
                if !self.nodes[input].tracked {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        for (id, g) in leaves {
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(Tensor::from_parts_unchecked(node.value.shape().to_vec(), g)),
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `id` for each of its inputs.
    fn propagate(&self, id: usize, g: Vec<f64>) -> Result<Vec<(usize, Vec<f64>)>> {
        let node = &self.nodes[id];
        let val = |i: usize| self.nodes[i].value.data();
        let map1 = |a: usize, f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
            // f(upstream, input, output)
            g.iter()
                .zip(val(a))
                .zip(node.value.data())
                .map(|((&u, &x), &y)| f(u, x, y))
                .collect()
        };
        let upstream = || Tensor::from_parts_unchecked(node.value.shape().to_vec(), g.clone());
        Ok(match &node.op {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g)],
            Op::Sub(a, b) => {
                let neg = g.iter().map(|v| -v).collect();
                vec![(*a, g), (*b, neg)]
            }
            Op::Mul(a, b) => {
                let ga = g.iter().zip(val(*b)).map(|(u, y)| u * y).collect();
                let gb = g.iter().zip(val(*a)).map(|(u, x)| u * x).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|u| u * c).collect())],
            Op::AddScalar(a) | Op::Reshape(a) => vec![(*a, g)],
            Op::Relu(a) => vec![(*a, map1(*a, &|u, x, _| if x > 0.0 { u } else { 0.0 }))],
            Op::Tanh(a) => vec![(*a, map1(*a, &|u, _, y| u * (1.0 - y * y)))],
            Op::Sigmoid(a) => vec![(*a, map1(*a, &|u, _, y| u * y * (1.0 - y)))],
            Op::Exp(a) => vec![(*a, map1(*a, &|u, _, y| u * y))],
            Op::Log(a) => vec![(*a, map1(*a, &|u, x, _| u / x))],
            Op::Square(a) => vec![(*a, map1(*a, &|u, x, _| 2.0 * x * u))],
            Op::Sum(a) => vec![(*a, vec![g[0]; self.nodes[*a].value.len()])],
            Op::Concat(ids) => {
                let rank = node.value.rank();
                let outer: usize = node.value.shape()[..rank - 3].iter().product();
                let mut parts: Vec<Vec<f64>> = ids.iter().map(|&i| Vec::with_capacity(self.nodes[i].value.len())).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (k, &i) in ids.iter().enumerate() {
                        let chunk = self.nodes[i].value.len() / outer;
                        parts[k].extend_from_slice(&g[offset..offset + chunk]);
                        offset += chunk;
                    }
                }
                ids.iter().copied().zip(parts).collect()
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let p = self.conv_params(*w, *b, *stride, *pad)?;
                let gr = layers::conv2d_backward(&upstream(), &self.nodes[*x].value, &p)?;
                vec![(*x, gr.input.into_data()), (*w, gr.weight.into_data()), (*b, gr.bias.into_data())]
            }
            Op::ConvTranspose2d { x, w, b, stride, pad, out_pad } => {
                let p = self.tconv_params(*w, *b, *stride, *pad, *out_pad)?;
                let gr = layers::transposed_conv2d_backward(&upstream(), &self.nodes[*x].value, &p)?;
                vec![(*x, gr.input.into_data()), (*w, gr.weight.into_data()), (*b, gr.bias.into_data())]
            }
            Op::Dcl { x, w, b, flow } => {
                let p = self.dcl_params(*w, *b)?;
                let gr = layers::dcl_backward(&upstream(), &self.nodes[*x].value, &p, &self.nodes[*flow].value)?;
                vec![
                    (*x, gr.input.into_data()),
                    (*w, gr.weight.into_data()),
                    (*b, gr.bias.into_data()),
                    (*flow, gr.flow.into_data()),
                ]
            }
            Op::MaxPool { x, argmax } => {
                let gi = layers::maxpool2d_backward(&upstream(), self.nodes[*x].value.shape(), argmax)?;
                vec![(*x, gi.into_data())]
            }
            Op::Dense { x, w, b } => {
                let (xv, wv, bv) = (&self.nodes[*x].value, &self.nodes[*w].value, &self.nodes[*b].value);
                let gr = layers::dense_backward(&upstream(), xv, wv, bv)?;
                vec![(*x, gr.input.into_data()), (*w, gr.weight.into_data()), (*b, gr.bias.into_data())]
            }
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn add_and_relu_values() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1.0, 2.0])).unwrap();
        let b = tape.constant(t(&[3.0, 4.0])).unwrap();
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).unwrap().data(), &[4.0, 6.0]);
        let r = tape.constant(t(&[-1.0, 2.0])).unwrap();
        let r = tape.relu(r).unwrap();
        assert_eq!(tape.value(r).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3.0])).unwrap();
        let y = tape.square(x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().unwrap().data(), &[6.0]);
    }

    #[test]
    fn sum_of_sum_gives_ones() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1.0, 2.0, 3.0])).unwrap();
        let b = tape.leaf(t(&[4.0, 5.0, 6.0])).unwrap();
        let c = tape.add(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        assert_eq!(tape.value(s).unwrap().item().unwrap(), 21.0);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().unwrap().data(), &[1.0; 3]);
        assert_eq!(tape.grad(b).unwrap().unwrap().data(), &[1.0; 3]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3.0])).unwrap();
        let y = tape.mul(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().unwrap().data(), &[12.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, 2.0])).unwrap();
        assert!(tape.backward(x).is_err());
        let c = tape.constant(t(&[1.0])).unwrap();
        assert!(tape.backward(c).is_err());
        let other = Tape::new();
        assert!(other.value(x).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[0.0])).unwrap();
        assert!(matches!(tape.log(x), Err(Error::NonFinite { .. })));
        assert!(tape.constant(t(&[f64::NAN])).is_err());
    }

    #[test]
    fn elementwise_dispatch_checks_operands() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, -1.0])).unwrap();
        let y = tape.elementwise(Elementwise::Scale, x, Operand::Scalar(2.0)).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[2.0, -2.0]);
        assert!(tape.elementwise(Elementwise::Add, x, Operand::None).is_err());
        let z = tape.constant(t(&[1.0, 2.0, 3.0])).unwrap();
        assert!(tape.add(x, z).is_err());
    }

    #[test]
    fn concat_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::full(&[1, 1, 2, 2], 1.0).unwrap()).unwrap();
        let b = tape.leaf(Tensor::full(&[1, 2, 2, 2], 2.0).unwrap()).unwrap();
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(c).unwrap().shape(), &[1, 3, 2, 2]);
        let w = tape.constant(Tensor::from_vec(&[1, 3, 2, 2], (0..12).map(f64::from).collect()).unwrap()).unwrap();
        let m = tape.mul(c, w).unwrap();
        let s = tape.sum(m).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().unwrap().data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(tape.grad(b).unwrap().unwrap().data(), &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
