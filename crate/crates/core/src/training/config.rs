//! Flat `key = value` training configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::networks::{DiscriminatorConfig, FlowMode, GeneratorConfig};

/// Generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Mse,
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// All settings of a training run.
///
/// | key | meaning | default |
/// |---|---|---|
/// | `mode` | `mse`, `adversarial`, `adversarial+flow-external`, `adversarial+flow-implicit` | `mse` |
/// | `flow` | `none`, `external`, `implicit` (also settable through `mode`) | `none` |
/// | `depth` | encoder levels; channels double from `base_channels` | 3 |
/// | `channels` | explicit comma-separated encoder widths | `16,32,64` |
/// | `kernel` | odd convolution size | 3 |
/// | `lr`, `optimizer` | step size; `adam` or `sgd` | `0.001`, `adam` |
/// | `gamma` | decay of the MSE weight `α = e^(−γn)` | `0.001` |
/// | `batch`, `steps`, `seed` | minibatch size, generator updates, RNG seed | `4`, `1000`, `0` |
/// | `dataset`, `flows` | frame manifest and optional flow manifest | |
/// | `split` | fraction of triplets used for training | `0.8` |
/// | `flow_noise` | std-dev (px) of Gaussian noise added to external flows while training | `0` |
/// | `checkpoint`, `log` | output paths | |
/// | `disc_blocks`, `disc_channels`, `disc_hidden`, `conditioned` | discriminator shape | `2`, `8`, `0`, `false` |
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub flow: Option<FlowMode>,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub gamma: f64,
    pub batch: usize,
    pub steps: u64,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub split: f64,
    pub flow_noise: f64,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub disc_blocks: usize,
    pub disc_channels: usize,
    pub disc_hidden: usize,
    pub conditioned: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Mse,
            flow: None,
            channels: vec![16, 32, 64],
            kernel: 3,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            gamma: 1e-3,
            batch: 4,
            steps: 1000,
            seed: 0,
            dataset: None,
            flows: None,
            split: 0.8,
            flow_noise: 0.0,
            checkpoint: None,
            log: None,
            disc_blocks: 2,
            disc_channels: 8,
            disc_hidden: 0,
            conditioned: false,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidConfig(format!("bad value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; used by the parser and for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => {
                let (obj, flow) = match value {
                    "mse" => (Objective::Mse, None),
                    "adversarial" => (Objective::Adversarial, None),
                    "adversarial+flow-external" => (Objective::Adversarial, Some(FlowMode::External)),
                    "adversarial+flow-implicit" => (Objective::Adversarial, Some(FlowMode::Implicit)),
                    "mse+flow-external" => (Objective::Mse, Some(FlowMode::External)),
                    "mse+flow-implicit" => (Objective::Mse, Some(FlowMode::Implicit)),
                    _ => return Err(bad(key, value)),
                };
                self.objective = obj;
                if flow.is_some() {
                    self.flow = flow;
                }
            }
            "flow" => {
                self.flow = match value {
                    "none" => None,
                    "external" => Some(FlowMode::External),
                    "implicit" => Some(FlowMode::Implicit),
                    _ => return Err(bad(key, value)),
                }
            }
            "depth" => {
                let d: usize = num(key, value)?;
                let base = self.channels.first().copied().unwrap_or(16);
                self.channels = (0..d).map(|l| base << l).collect();
            }
            "channels" => {
                self.channels = value
                    .split(',')
                    .map(|c| num(key, c.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "kernel" => self.kernel = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(bad(key, value)),
                }
            }
            "gamma" => self.gamma = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dataset" => self.dataset = opt_path(value),
            "flows" => self.flows = opt_path(value),
            "split" => self.split = num(key, value)?,
            "flow_noise" => self.flow_noise = num(key, value)?,
            "checkpoint" => self.checkpoint = opt_path(value),
            "log" => self.log = opt_path(value),
            "disc_blocks" => self.disc_blocks = num(key, value)?,
            "disc_channels" => self.disc_channels = num(key, value)?,
            "disc_hidden" => self.disc_hidden = num(key, value)?,
            "conditioned" => self.conditioned = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_config().validate()?;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be positive".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidConfig(format!("split must be in (0, 1), got {}", self.split)));
        }
        if !(self.flow_noise.is_finite() && self.flow_noise >= 0.0) {
            return Err(Error::InvalidConfig("flow_noise must be non-negative".into()));
        }
        if self.objective == Objective::Adversarial && self.disc_blocks == 0 {
            return Err(Error::InvalidConfig("disc_blocks must be positive".into()));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            channels: self.channels.clone(),
            kernel: self.kernel,
            seed: self.seed,
        }
    }

    pub fn discriminator_config(&self, height: usize, width: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            blocks: self.disc_blocks,
            base_channels: self.disc_channels,
            hidden: (self.disc_hidden > 0).then_some(self.disc_hidden),
            height,
            width,
            conditioned: self.conditioned,
            seed: self.seed.wrapping_add(1),
        }
    }

    /// Name of the regime, as accepted by the `mode` key.
    pub fn mode_name(&self) -> &'static str {
        match (self.objective, self.flow) {
            (Objective::Mse, None) => "mse",
            (Objective::Adversarial, None) => "adversarial",
            (Objective::Adversarial, Some(FlowMode::External)) => "adversarial+flow-external",
            (Objective::Adversarial, Some(FlowMode::Implicit)) => "adversarial+flow-implicit",
            (Objective::Mse, Some(FlowMode::External)) => "mse+flow-external",
            (Objective::Mse, Some(FlowMode::Implicit)) => "mse+flow-implicit",
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let chans: Vec<String> = self.channels.iter().map(ToString::to_string).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("mode", self.mode_name().into());
        kv(
            "flow",
            match self.flow {
                None => "none",
                Some(FlowMode::External) => "external",
                Some(FlowMode::Implicit) => "implicit",
            }
            .into(),
        );
        kv("channels", chans.join(","));
        kv("kernel", self.kernel.to_string());
        kv("lr", self.lr.to_string());
        kv(
            "optimizer",
            match self.optimizer {
                OptimizerKind::Adam => "adam",
                OptimizerKind::Sgd => "sgd",
            }
            .into(),
        );
        kv("gamma", self.gamma.to_string());
        kv("batch", self.batch.to_string());
        kv("steps", self.steps.to_string());
        kv("seed", self.seed.to_string());
        kv("dataset", path(&self.dataset));
        kv("flows", path(&self.flows));
        kv("split", self.split.to_string());
        kv("flow_noise", self.flow_noise.to_string());
        kv("checkpoint", path(&self.checkpoint));
        kv("log", path(&self.log));
        kv("disc_blocks", self.disc_blocks.to_string());
        kv("disc_channels", self.disc_channels.to_string());
        kv("disc_hidden", self.disc_hidden.to_string());
        kv("conditioned", self.conditioned.to_string());
        s
    }
}
