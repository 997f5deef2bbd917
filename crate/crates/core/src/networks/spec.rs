use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Displacement convolution (stride 1, padding `kernel / 2`); inputs are
    /// `[features, flow]`.
    Dcl {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
    },
    ConvTranspose2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    MaxPool2,
    Flatten,
    Act(Activation),
    /// Elementwise sum of all inputs.
    Add,
    /// Multiplies the single input by a constant.
    Scale(f64),
    /// Channel concatenation.
    Concat,
}

impl LayerKind {
    /// Parameter tensors this layer owns, as (suffix, shape).
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerKind::Conv2d { in_ch, out_ch, kernel, .. } | LayerKind::Dcl { in_ch, out_ch, kernel } => vec![
                ("weight", vec![out_ch, in_ch, kernel, kernel]),
                ("bias", vec![out_ch]),
            ],
            LayerKind::ConvTranspose2d { in_ch, out_ch, kernel, .. } => vec![
                ("weight", vec![in_ch, out_ch, kernel, kernel]),
                ("bias", vec![out_ch]),
            ],
            LayerKind::Dense { in_features, out_features } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d { in_ch, kernel, .. } | LayerKind::Dcl { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerKind::ConvTranspose2d { in_ch, kernel, stride, .. } => (in_ch * kernel * kernel / (stride * stride)).max(1),
            LayerKind::Dense { in_features, .. } => in_features,
            _ => 1,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Conv2d { in_ch, out_ch, kernel, stride, .. } => {
                write!(f, "conv{kernel}x{kernel}/{stride} {in_ch}->{out_ch}")
            }
            LayerKind::Dcl { in_ch, out_ch, kernel } => write!(f, "dcl{kernel}x{kernel} {in_ch}->{out_ch}"),
            LayerKind::ConvTranspose2d { in_ch, out_ch, kernel, stride, .. } => {
                write!(f, "tconv{kernel}x{kernel}/{stride} {in_ch}->{out_ch}")
            }
            LayerKind::Dense { in_features, out_features } => write!(f, "dense {in_features}->{out_features}"),
            LayerKind::MaxPool2 => write!(f, "maxpool2"),
            LayerKind::Flatten => write!(f, "flatten"),
            LayerKind::Act(a) => write!(f, "{}", format!("{a:?}").to_lowercase()),
            LayerKind::Add => write!(f, "add"),
            LayerKind::Scale(c) => write!(f, "scale {c}"),
            LayerKind::Concat => write!(f, "concat"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input(usize),
    Layer(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub inputs: Vec<Source>,
    /// Parameter name prefix; layers with the same name share parameters.
    pub param: Option<String>,
}

/// `[N, C, H, W]` to `[N, C·H·W]`; an unbatched `[C, H, W]` becomes one row.
/// Rank-2 inputs pass through.
fn flatten(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.value(x)?.shape().to_vec();
    let n = match shape.len() {
        2 => return Ok(x),
        4 => shape[0],
        _ => 1,
    };
    let total: usize = shape.iter().product();
    tape.reshape(x, &[n, total / n])
}

/// A layer graph in topological order. The last layer is the output.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub layers: Vec<LayerDesc>,
    /// (encoder layer, decoder layer) pairs joined by a residual sum.
    pub skips: Vec<(usize, usize)>,
    /// Named intermediate layers callers may read back (e.g. a predicted flow).
    pub taps: BTreeMap<String, usize>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, inputs: &[&str]) -> Self {
        NetworkSpec {
            name: name.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            layers: Vec::new(),
            skips: Vec::new(),
            taps: BTreeMap::new(),
        }
    }

    /// Appends a layer and returns its source handle.
    pub fn push(&mut self, kind: LayerKind, inputs: &[Source], param: Option<&str>) -> Source {
        self.layers.push(LayerDesc {
            kind,
            inputs: inputs.to_vec(),
            param: param.map(str::to_string),
        });
        Source::Layer(self.layers.len() - 1)
    }

    pub fn output(&self) -> usize {
        self.layers.len() - 1
    }

    /// Parameter names bound to more than one layer, with those layers.
    pub fn sharing_groups(&self) -> BTreeMap<String, Vec<usize>> {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            if let Some(p) = &l.param {
                groups.entry(p.clone()).or_default().push(i);
            }
        }
        groups.retain(|_, v| v.len() > 1);
        groups
    }

    /// Checks topological order, arity, and that shared layers agree on geometry.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig(format!("{}: no layers", self.name)));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for s in &l.inputs {
                let ok = match *s {
                    Source::Input(k) => k < self.inputs.len(),
                    Source::Layer(k) => k < i,
                };
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "{}: layer {i} reads {s:?} out of order",
                        self.name
                    )));
                }
            }
            let arity_ok = match l.kind {
                LayerKind::Dcl { .. } => l.inputs.len() == 2,
                LayerKind::Add | LayerKind::Concat => l.inputs.len() >= 2,
                _ => l.inputs.len() == 1,
            };
            if !arity_ok {
                return Err(Error::InvalidConfig(format!(
                    "{}: layer {i} ({}) has {} inputs",
                    self.name,
                    l.kind,
                    l.inputs.len()
                )));
            }
            if !l.kind.param_shapes().is_empty() && l.param.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "{}: layer {i} ({}) needs a parameter name",
                    self.name, l.kind
                )));
            }
        }
        for (name, members) in self.sharing_groups() {
            let first = &self.layers[members[0]].kind;
            if members.iter().any(|&m| self.layers[m].kind.param_shapes() != first.param_shapes()) {
                return Err(Error::InvalidConfig(format!(
                    "{}: shared parameter `{name}` used by layers of different geometry",
                    self.name
                )));
            }
        }
        for &(enc, dec) in &self.skips {
            if enc >= self.layers.len() || dec >= self.layers.len() || enc >= dec {
                return Err(Error::InvalidConfig(format!(
                    "{}: bad skip pair ({enc}, {dec})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Parameter names and shapes, each shared name listed once.
    pub fn param_shapes(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out = BTreeMap::new();
        for l in &self.layers {
            if let Some(p) = &l.param {
                for (suffix, shape) in l.kind.param_shapes() {
                    out.insert(format!("{p}.{suffix}"), shape);
                }
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_shapes().values().map(|s| s.iter().product::<usize>()).sum()
    }

    /// He-normal weights and zero biases, drawn in sorted-name order.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = BTreeMap::new();
        for l in &self.layers {
            if let Some(p) = &l.param {
                fan_in.insert(p.clone(), l.kind.fan_in());
            }
        }
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)?
            } else {
                let prefix = name.trim_end_matches(".weight");
                let std = (2.0 / fan_in[prefix] as f64).sqrt();
                let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                let n = shape.iter().product();
                Tensor::from_vec(&shape, (0..n).map(|_| normal.sample(&mut rng)).collect())?
            };
            store.insert(name, t);
        }
        Ok(store)
    }

    /// Runs the graph on `tape` and returns every layer's output.
    pub fn forward_all(&self, tape: &mut Tape, params: &BoundParams, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} inputs ({}), got {}",
                self.name,
                self.inputs.len(),
                self.inputs.join(", "),
                inputs.len()
            )));
        }
        let mut outs: Vec<Var> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let src: Vec<Var> = l
                .inputs
                .iter()
                .map(|s| match *s {
                    Source::Input(k) => inputs[k],
                    Source::Layer(k) => outs[k],
                })
                .collect();
            let p = |suffix: &str| params.get(&format!("{}.{suffix}", l.param.as_deref().unwrap_or("")));
            let v = match l.kind {
                LayerKind::Conv2d { stride, padding, .. } => tape.conv2d(src[0], p("weight")?, p("bias")?, stride, padding)?,
                LayerKind::Dcl { .. } => tape.dcl(src[0], p("weight")?, p("bias")?, src[1])?,
                LayerKind::ConvTranspose2d {
                    stride,
                    padding,
                    output_padding,
                    ..
                } => tape.conv_transpose2d(src[0], p("weight")?, p("bias")?, stride, padding, output_padding)?,
                LayerKind::Dense { .. } => {
                    let x = flatten(tape, src[0])?;
                    tape.dense(x, p("weight")?, p("bias")?)?
                }
                LayerKind::MaxPool2 => tape.maxpool2d(src[0])?,
                LayerKind::Flatten => flatten(tape, src[0])?,
                LayerKind::Act(Activation::Relu) => tape.relu(src[0])?,
                LayerKind::Act(Activation::Sigmoid) => tape.sigmoid(src[0])?,
                LayerKind::Act(Activation::Tanh) => tape.tanh(src[0])?,
                LayerKind::Add => {
                    let mut acc = src[0];
                    for &s in &src[1..] {
                        acc = tape.add(acc, s)?;
                    }
                    acc
                }
                LayerKind::Scale(c) => tape.scale(src[0], c)?,
                LayerKind::Concat => tape.concat_channels(&src)?,
            };
            outs.push(v);
        }
        Ok(outs)
    }

    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, inputs: &[Var]) -> Result<Var> {
        let all = self.forward_all(tape, params, inputs)?;
        Ok(*all.last().expect("validated networks have layers"))
    }

    /// Untracked forward pass on plain tensors.
    pub fn infer(&self, params: &ParamStore, inputs: &[&Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false)?;
        let vars = inputs.iter().map(|t| tape.constant((*t).clone())).collect::<Result<Vec<_>>>()?;
        let out = self.forward(&mut tape, &bound, &vars)?;
        Ok(tape.value(out)?.clone())
    }

    /// One line per layer: index, kind, inputs, parameter name.
    pub fn describe(&self) -> String {
        let mut s = format!("# {} (inputs: {})\n", self.name, self.inputs.join(", "));
        for (i, l) in self.layers.iter().enumerate() {
            let srcs: Vec<String> = l
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input(k) => self.inputs[*k].clone(),
                    Source::Layer(k) => format!("#{k}"),
                })
                .collect();
            s.push_str(&format!(
                "{i:3}  {:<24} <- {:<16} {}\n",
                l.kind.to_string(),
                srcs.join(","),
                l.param.as_deref().unwrap_or("-")
            ));
        }
        s
    }
}
