//! The interpolation generator, its flow-prior variants, the discriminator
//! and the flow predictor, assembled as [`NetworkSpec`] graphs.
//!
//! # Generator layout
//!
//! Each input frame runs through the same encoder (one parameter set, so the
//! second branch adds no parameters):
//!
//! ```text
//! enc0: conv k×k stride 1, 3 → c0, relu      (a displacement conv with a flow prior)
//! encL: conv k×k stride 2, c(L-1) → cL, relu  for L = 1..depth-1
//! ```
//!
//! The two branches are merged per level by elementwise sum. The decoder
//! mirrors the encoder with stride-2 transposed convolutions; after each one
//! (and its relu) the merged encoder features of that resolution are added
//! back as a residual. A final `k×k` convolution maps to 3 channels and a
//! sigmoid keeps the frame in `[0, 1]`. Because the decoder only ever sees
//! branch sums, swapping the two frames leaves the output bit-identical.
//!
//! Parameter count for channels `c0..c(D-1)`, kernel `k`, 3 image channels:
//!
//! ```text
//! (3·c0 + Σ_{l≥1} c(l-1)·cl) · k²  + Σ cl          encoder
//! Σ_{l≥1} cl·c(l-1) · k²           + Σ_{l<D-1} cl  decoder
//! c0·3·k² + 3                                      output conv
//! ```

mod spec;

pub use spec::{Activation, LayerDesc, LayerKind, NetworkSpec, Source};

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Channel widths and kernel size shared by the generator and flow predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Encoder widths, one per level; strictly increasing, at least two.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            channels: vec![16, 32, 64],
            kernel: 3,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::InvalidConfig("depth must be at least 2".into()));
        }
        if self.channels.windows(2).any(|w| w[0] >= w[1]) || self.channels[0] == 0 {
            return Err(Error::InvalidConfig(format!(
                "encoder channels must be positive and strictly increasing, got {:?}",
                self.channels
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// Input extents must be divisible by this.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.channels.len() - 1)
    }

    /// Closed-form generator parameter count (see the module docs).
    pub fn param_count(&self) -> usize {
        let c = &self.channels;
        let k2 = self.kernel * self.kernel;
        let enc: usize = 3 * c[0] * k2 + c.windows(2).map(|w| w[0] * w[1] * k2).sum::<usize>() + c.iter().sum::<usize>();
        let dec: usize = c.windows(2).map(|w| w[0] * w[1] * k2 + w[0]).sum();
        enc + dec + c[0] * 3 * k2 + 3
    }
}

/// Where the displacement layers get their flow from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowMode {
    /// Flow from frame 1 to frame 2 is a third network input.
    External,
    /// Flow is predicted from the two frames by an embedded predictor network.
    Implicit,
}

/// Prefix for the flow predictor's parameters inside an implicit-flow generator.
pub const FLOW_PREFIX: &str = "flow.";

enum Stem {
    Conv,
    Dcl(Source),
}

/// Builds a shared-weight encoder branch and returns the post-activation
/// feature map of every level.
fn encoder(spec: &mut NetworkSpec, input: Source, in_ch: usize, cfg: &GeneratorConfig, stem: Stem, prefix: &str) -> Vec<Source> {
    let k = cfg.kernel;
    let mut feats = Vec::with_capacity(cfg.channels.len());
    let name = format!("{prefix}enc0");
    let first = match stem {
        Stem::Conv => spec.push(
            LayerKind::Conv2d {
                in_ch,
                out_ch: cfg.channels[0],
                kernel: k,
                stride: 1,
                padding: k / 2,
            },
            &[input],
            Some(&name),
        ),
        Stem::Dcl(flow) => spec.push(
            LayerKind::Dcl {
                in_ch,
                out_ch: cfg.channels[0],
                kernel: k,
            },
            &[input, flow],
            Some(&name),
        ),
    };
    let mut x = spec.push(LayerKind::Act(Activation::Relu), &[first], None);
    feats.push(x);
    for l in 1..cfg.channels.len() {
        let conv = spec.push(
            LayerKind::Conv2d {
                in_ch: cfg.channels[l - 1],
                out_ch: cfg.channels[l],
                kernel: k,
                stride: 2,
                padding: k / 2,
            },
            &[x],
            Some(&format!("{prefix}enc{l}")),
        );
        x = spec.push(LayerKind::Act(Activation::Relu), &[conv], None);
        feats.push(x);
    }
    feats
}

fn layer_index(s: Source) -> usize {
    match s {
        Source::Layer(i) => i,
        Source::Input(_) => unreachable!("decoder skips connect layers"),
    }
}

/// Mirrors the encoder with transposed convolutions and residual sums, then
/// maps to `out_ch` channels.
fn decoder(spec: &mut NetworkSpec, feats: &[Source], cfg: &GeneratorConfig, out_ch: usize, prefix: &str) -> Source {
    let k = cfg.kernel;
    let depth = cfg.channels.len();
    let mut d = feats[depth - 1];
    for l in (0..depth - 1).rev() {
        let up = spec.push(
            LayerKind::ConvTranspose2d {
                in_ch: cfg.channels[l + 1],
                out_ch: cfg.channels[l],
                kernel: k,
                stride: 2,
                padding: k / 2,
                output_padding: 1,
            },
            &[d],
            Some(&format!("{prefix}dec{l}")),
        );
        let act = spec.push(LayerKind::Act(Activation::Relu), &[up], None);
        d = spec.push(LayerKind::Add, &[act, feats[l]], None);
        spec.skips.push((layer_index(feats[l]), layer_index(d)));
    }
    spec.push(
        LayerKind::Conv2d {
            in_ch: cfg.channels[0],
            out_ch,
            kernel: k,
            stride: 1,
            padding: k / 2,
        },
        &[d],
        Some(&format!("{prefix}out")),
    )
}

fn y_generator(spec: &mut NetworkSpec, cfg: &GeneratorConfig, flow: Option<Source>) {
    let (i1, i2) = (Source::Input(0), Source::Input(1));
    let (stem_a, stem_b) = match flow {
        None => (Stem::Conv, Stem::Conv),
        Some(f) => {
            // Frame 1 is read half a flow step backwards, frame 2 half a step forwards.
            let back = spec.push(LayerKind::Scale(-0.5), &[f], None);
            let fwd = spec.push(LayerKind::Scale(0.5), &[f], None);
            (Stem::Dcl(back), Stem::Dcl(fwd))
        }
    };
    let a = encoder(spec, i1, 3, cfg, stem_a, "");
    let b = encoder(spec, i2, 3, cfg, stem_b, "");
    let merged: Vec<Source> = a
        .iter()
        .zip(&b)
        .map(|(&x, &y)| spec.push(LayerKind::Add, &[x, y], None))
        .collect();
    let out = decoder(spec, &merged, cfg, 3, "");
    spec.push(LayerKind::Act(Activation::Sigmoid), &[out], None);
}

fn finish(spec: NetworkSpec, seed: u64) -> Result<(NetworkSpec, ParamStore)> {
    spec.validate()?;
    let store = spec.init_params(seed)?;
    Ok((spec, store))
}

/// Y-style generator: inputs `first`, `second`.
pub fn build_generator(cfg: &GeneratorConfig) -> Result<(NetworkSpec, ParamStore)> {
    cfg.validate()?;
    let mut spec = NetworkSpec::new("generator", &["first", "second"]);
    y_generator(&mut spec, cfg, None);
    finish(spec, cfg.seed)
}

fn flow_predictor_layers(spec: &mut NetworkSpec, cfg: &GeneratorConfig, prefix: &str) -> Source {
    let cat = spec.push(LayerKind::Concat, &[Source::Input(0), Source::Input(1)], None);
    let feats = encoder(spec, cat, 6, cfg, Stem::Conv, prefix);
    decoder(spec, &feats, cfg, 2, prefix)
}

/// Generator whose first layer in each branch is a displacement convolution.
///
/// Branch 1 reads frame 1 at `p − F/2` and branch 2 reads frame 2 at
/// `p + F/2`, where `F` is the flow from frame 1 to frame 2. In
/// [`FlowMode::External`] `F` is the third input `flow`; in
/// [`FlowMode::Implicit`] it comes from an embedded flow predictor whose
/// parameters carry the [`FLOW_PREFIX`] and whose output is tapped as `flow`.
pub fn build_generator_with_flow_prior(cfg: &GeneratorConfig, mode: FlowMode) -> Result<(NetworkSpec, ParamStore)> {
    cfg.validate()?;
    let mut spec = match mode {
        FlowMode::External => NetworkSpec::new("generator_flow_external", &["first", "second", "flow"]),
        FlowMode::Implicit => NetworkSpec::new("generator_flow_implicit", &["first", "second"]),
    };
    let flow = match mode {
        FlowMode::External => Source::Input(2),
        FlowMode::Implicit => {
            let f = flow_predictor_layers(&mut spec, cfg, FLOW_PREFIX);
            spec.taps.insert("flow".into(), layer_index(f));
            f
        }
    };
    y_generator(&mut spec, cfg, Some(flow));
    finish(spec, cfg.seed)
}

/// Standalone flow predictor: frames concatenated to 6 channels, a
/// `channels`-wide encoder-decoder, and a linear 2-channel `(d_x, d_y)` head.
pub fn build_flow_predictor(cfg: &GeneratorConfig) -> Result<(NetworkSpec, ParamStore)> {
    cfg.validate()?;
    let mut spec = NetworkSpec::new("flow_predictor", &["first", "second"]);
    let f = flow_predictor_layers(&mut spec, cfg, "");
    spec.taps.insert("flow".into(), layer_index(f));
    finish(spec, cfg.seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    /// Number of conv → relu → maxpool blocks; channels double per block.
    pub blocks: usize,
    pub base_channels: usize,
    /// Optional hidden dense layer (with relu) before the output unit.
    pub hidden: Option<usize>,
    pub height: usize,
    pub width: usize,
    /// Also feed the two neighbouring frames, concatenated with the candidate.
    pub conditioned: bool,
    pub seed: u64,
}

impl DiscriminatorConfig {
    /// 8 layers: two conv/relu/pool blocks, dense, sigmoid.
    pub fn desk(height: usize, width: usize) -> Self {
        DiscriminatorConfig {
            blocks: 2,
            base_channels: 8,
            hidden: None,
            height,
            width,
            conditioned: false,
            seed: 1,
        }
    }

    /// 16 layers: four conv/relu/pool blocks, dense, relu, dense, sigmoid.
    pub fn paper(height: usize, width: usize) -> Self {
        DiscriminatorConfig {
            blocks: 4,
            base_channels: 16,
            hidden: Some(64),
            height,
            width,
            conditioned: false,
            seed: 1,
        }
    }

    /// Layer count, excluding the input concatenation of the conditioned variant.
    pub fn depth(&self) -> usize {
        3 * self.blocks + if self.hidden.is_some() { 4 } else { 2 }
    }

    fn validate(&self) -> Result<()> {
        let m = 1usize << self.blocks;
        if self.blocks == 0 || self.base_channels == 0 {
            return Err(Error::InvalidConfig("discriminator needs at least one block".into()));
        }
        if !self.height.is_multiple_of(m) || !self.width.is_multiple_of(m) {
            return Err(Error::InvalidConfig(format!(
                "discriminator input {}x{} not divisible by 2^{}",
                self.height, self.width, self.blocks
            )));
        }
        Ok(())
    }
}

/// LeNet-style classifier producing the probability that a frame is generated.
/// Dense layers flatten their input, so no separate reshape layer appears.
pub fn build_discriminator(cfg: &DiscriminatorConfig) -> Result<(NetworkSpec, ParamStore)> {
    cfg.validate()?;
    let (mut spec, mut x, mut ch) = if cfg.conditioned {
        let mut s = NetworkSpec::new("discriminator", &["frame", "first", "second"]);
        let cat = s.push(LayerKind::Concat, &[Source::Input(0), Source::Input(1), Source::Input(2)], None);
        (s, cat, 9)
    } else {
        (NetworkSpec::new("discriminator", &["frame"]), Source::Input(0), 3)
    };
    for b in 0..cfg.blocks {
        let out = cfg.base_channels << b;
        let conv = spec.push(
            LayerKind::Conv2d {
                in_ch: ch,
                out_ch: out,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            &[x],
            Some(&format!("conv{b}")),
        );
        let act = spec.push(LayerKind::Act(Activation::Relu), &[conv], None);
        x = spec.push(LayerKind::MaxPool2, &[act], None);
        ch = out;
    }
    let mut features = ch * (cfg.height >> cfg.blocks) * (cfg.width >> cfg.blocks);
    if let Some(h) = cfg.hidden {
        let d = spec.push(
            LayerKind::Dense {
                in_features: features,
                out_features: h,
            },
            &[x],
            Some("hidden"),
        );
        x = spec.push(LayerKind::Act(Activation::Relu), &[d], None);
        features = h;
    }
    let logit = spec.push(
        LayerKind::Dense {
            in_features: features,
            out_features: 1,
        },
        &[x],
        Some("logit"),
    );
    spec.push(LayerKind::Act(Activation::Sigmoid), &[logit], None);
    finish(spec, cfg.seed)
}
