//! A trained generator ready for inference.

use std::path::Path;

use crate::autodiff::Tape;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::networks::{build_generator, build_generator_with_flow_prior, FlowMode, NetworkSpec};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::training::{TrainConfig, TrainOutcome};

const GENERATOR_PREFIX: &str = "generator.";

#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub spec: NetworkSpec,
    pub params: ParamStore,
}

impl Model {
    /// Builds the generator described by `config` and installs `params`,
    /// which must match its parameter set exactly.
    pub fn new(config: TrainConfig, params: ParamStore) -> Result<Self> {
        let gcfg = config.generator_config();
        let (spec, fresh) = match config.flow {
            None => build_generator(&gcfg)?,
            Some(mode) => build_generator_with_flow_prior(&gcfg, mode)?,
        };
        params.check_matches(&fresh)?;
        Ok(Model { config, spec, params })
    }

    pub fn from_outcome(outcome: &TrainOutcome) -> Result<Self> {
        Model::new(outcome.config.clone(), outcome.generator.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = TrainConfig::parse(&ck.config)?;
        Model::new(config, ck.params.extract_prefixed(GENERATOR_PREFIX))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn flow_mode(&self) -> Option<FlowMode> {
        self.config.flow
    }

    /// Predicts the middle frame. `flow` (frame 1 to frame 2) is required by
    /// external-flow models and ignored otherwise.
    pub fn interpolate(&self, first: &Tensor, second: &Tensor, flow: Option<&FlowField>) -> Result<Tensor> {
        match self.flow_mode() {
            Some(FlowMode::External) => {
                let f = flow.ok_or_else(|| Error::InvalidArgument("this model needs a flow field".into()))?;
                self.spec.infer(&self.params, &[first, second, &f.to_tensor()])
            }
            _ => self.spec.infer(&self.params, &[first, second]),
        }
    }

    /// The flow an implicit-flow model predicts between two frames.
    pub fn predict_flow(&self, first: &Tensor, second: &Tensor) -> Result<FlowField> {
        let tap = *self
            .spec
            .taps
            .get("flow")
            .ok_or_else(|| Error::InvalidArgument("model has no flow predictor".into()))?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false)?;
        let a = tape.constant(first.clone())?;
        let b = tape.constant(second.clone())?;
        let outs = self.spec.forward_all(&mut tape, &bound, &[a, b])?;
        FlowField::from_tensor(tape.value(outs[tap])?)
    }
}
