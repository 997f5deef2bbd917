use std::fs::File;
use std::io::{BufWriter, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::data::FrameTriplet;
use crate::error::{Error, Result};
use crate::networks::{build_discriminator, build_generator, build_generator_with_flow_prior, FlowMode, NetworkSpec};
use crate::params::{BoundParams, ParamStore};
use crate::tensor::Tensor;

use super::{alpha_schedule, sgd_adam_update, LossReport, Objective, TrainConfig, TrainState, LOG_EPS};

/// Discriminator losses below this for [`COLLAPSE_STEPS`] steps in a row are reported.
pub const COLLAPSE_LOSS: f64 = 1e-3;
pub const COLLAPSE_STEPS: u32 = 100;

pub const GENERATOR_PREFIX: &str = "generator.";
pub const DISCRIMINATOR_PREFIX: &str = "discriminator.";

/// What happened in one generator update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Value of `n` when the step's loss was computed.
    pub n: u64,
    pub loss: LossReport,
    pub discriminator_loss: Option<f64>,
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub config: TrainConfig,
    pub state: TrainState,
    pub generator: ParamStore,
    pub discriminator: Option<ParamStore>,
    pub history: Vec<StepRecord>,
    /// Steps at which a suspected mode collapse was logged.
    pub collapse_warnings: Vec<u64>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        let mut params = ParamStore::new();
        params.merge_prefixed(GENERATOR_PREFIX, &self.generator);
        if let Some(d) = &self.discriminator {
            params.merge_prefixed(DISCRIMINATOR_PREFIX, d);
        }
        Checkpoint {
            state: self.state.clone(),
            config: self.config.to_text(),
            params,
        }
    }
}

/// Stacks per-sample tensors along a new batch axis.
fn batch_of(items: &[&Tensor]) -> Result<Tensor> {
    let owned: Vec<Tensor> = items.iter().map(|t| (*t).clone()).collect();
    Tensor::stack(&owned)
}

/// Mean over the batch of `−log(1 − p + ε)` (or `−log(p + ε)` with `positive`).
fn mean_log_loss(tape: &mut Tape, p: Var, positive: bool, batch: usize) -> Result<Var> {
    let q = if positive {
        tape.add_scalar(p, LOG_EPS)?
    } else {
        let neg = tape.scale(p, -1.0)?;
        tape.add_scalar(neg, 1.0 + LOG_EPS)?
    };
    let l = tape.log(q)?;
    let s = tape.sum(l)?;
    tape.scale(s, -1.0 / batch as f64)
}

/// Step-by-step trainer; [`train`] drives it to completion.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    data: &'a [FrameTriplet],
    gen_spec: NetworkSpec,
    generator: ParamStore,
    disc: Option<(NetworkSpec, ParamStore)>,
    state: TrainState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    log: Option<Box<dyn Write>>,
    collapse_run: u32,
    history: Vec<StepRecord>,
    collapse_warnings: Vec<u64>,
    last_grads: Option<ParamStore>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &TrainConfig, data: &'a [FrameTriplet]) -> Result<Self> {
        cfg.validate()?;
        let first = data
            .first()
            .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
        let (h, w) = first.extent();
        let gcfg = cfg.generator_config();
        let m = gcfg.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame extent {w}x{h} must be divisible by {m} for {} encoder levels",
                gcfg.channels.len()
            )));
        }
        for t in data {
            if t.extent() != (h, w) {
                return Err(Error::InvalidArgument("training frames differ in extent".into()));
            }
            if cfg.flow == Some(FlowMode::External) && t.flow.is_none() {
                return Err(Error::InvalidArgument("external flow mode needs a flow for every triplet".into()));
            }
        }
        let (gen_spec, generator) = match cfg.flow {
            None => build_generator(&gcfg)?,
            Some(mode) => build_generator_with_flow_prior(&gcfg, mode)?,
        };
        let disc = match cfg.objective {
            Objective::Mse => None,
            Objective::Adversarial => Some(build_discriminator(&cfg.discriminator_config(h, w))?),
        };
        let log: Option<Box<dyn Write>> = match &cfg.log {
            Some(p) => {
                let f = File::create(p).map_err(|e| Error::io(p, e))?;
                let mut w = BufWriter::new(f);
                writeln!(w, "n\talpha\tmse\tadv\ttotal").map_err(|e| Error::io(p, e))?;
                Some(Box::new(w))
            }
            None => None,
        };
        Ok(Trainer {
            state: TrainState::new(cfg.gamma, cfg.lr, cfg.optimizer, cfg.seed),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg: cfg.clone(),
            data,
            gen_spec,
            generator,
            disc,
            order: Vec::new(),
            cursor: 0,
            log,
            collapse_run: 0,
            history: Vec::new(),
            collapse_warnings: Vec::new(),
            last_grads: None,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn generator(&self) -> &ParamStore {
        &self.generator
    }

    pub fn generator_spec(&self) -> &NetworkSpec {
        &self.gen_spec
    }

    pub fn discriminator(&self) -> Option<&ParamStore> {
        self.disc.as_ref().map(|(_, p)| p)
    }

    /// Generator gradients of the most recent step.
    pub fn last_generator_grads(&self) -> Option<&ParamStore> {
        self.last_grads.as_ref()
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let b = self.cfg.batch.min(self.data.len());
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.cursor == self.order.len() {
                self.order = (0..self.data.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::NonFinite { op } => Error::Diverged {
                step: self.state.step,
                detail: format!("non-finite value in {op}"),
            },
            other => other,
        }
    }

    fn disc_inputs(&self, tape: &mut Tape, frame: Var, first: Var, second: Var) -> Result<Var> {
        if self.cfg.conditioned {
            tape.concat_channels(&[frame, first, second])
        } else {
            Ok(frame)
        }
    }

    /// One discriminator update (adversarial runs) and one generator update.
    pub fn step(&mut self) -> Result<StepRecord> {
        self.step_inner().map_err(|e| self.diverged(e))
    }

    fn step_inner(&mut self) -> Result<StepRecord> {
        let idx = self.next_batch();
        let b = idx.len();
        let pick = |f: fn(&FrameTriplet) -> &Tensor| -> Result<Tensor> {
            batch_of(&idx.iter().map(|&k| f(&self.data[k])).collect::<Vec<_>>())
        };
        let first = pick(|t| &t.first)?;
        let second = pick(|t| &t.second)?;
        let middle = pick(|t| &t.middle)?;
        let flow = if self.cfg.flow == Some(FlowMode::External) {
            let fields: Vec<Tensor> = idx
                .iter()
                .map(|&k| self.data[k].flow.as_ref().expect("checked in new").to_tensor())
                .collect();
            let mut f = Tensor::stack(&fields)?;
            if self.cfg.flow_noise > 0.0 {
                let noise = Normal::new(0.0, self.cfg.flow_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                for v in f.data_mut() {
                    *v += noise.sample(&mut self.rng);
                }
            }
            Some(f)
        } else {
            None
        };

        let n = self.state.step;
        let adversarial = self.disc.is_some();
        let alpha = if adversarial { alpha_schedule(self.state.gamma, n) } else { 1.0 };

        // generator pass; the discriminator only contributes constants
        let mut tape = Tape::new();
        let gp = self.generator.bind(&mut tape, true)?;
        let v_first = tape.constant(first.clone())?;
        let v_second = tape.constant(second.clone())?;
        let v_mid = tape.constant(middle.clone())?;
        let mut inputs = vec![v_first, v_second];
        if let Some(f) = &flow {
            inputs.push(tape.constant(f.clone())?);
        }
        let out = self.gen_spec.forward(&mut tape, &gp, &inputs)?;
        let diff = tape.sub(out, v_mid)?;
        let sq = tape.square(diff)?;
        let sum = tape.sum(sq)?;
        let mse = tape.scale(sum, 1.0 / b as f64)?;
        let (total, adv) = match &self.disc {
            Some((dspec, dparams)) => {
                let dp: BoundParams = dparams.bind(&mut tape, false)?;
                let x = self.disc_inputs(&mut tape, out, v_first, v_second)?;
                let p = dspec.forward(&mut tape, &dp, &[x])?;
                let adv = mean_log_loss(&mut tape, p, false, b)?;
                let weighted = tape.scale(mse, alpha)?;
                (tape.add(weighted, adv)?, Some(adv))
            }
            None => (mse, None),
        };
        tape.backward(total)?;
        let grads = gp.grads(&tape)?;
        let mse_term = tape.value(mse)?.item()?;
        let adversarial_term = match adv {
            Some(a) => tape.value(a)?.item()?,
            None => 0.0,
        };
        let fake = tape.value(out)?.clone();
        drop(tape);

        let mut disc_loss = None;
        if let Some((dspec, dparams)) = &mut self.disc {
            let mut tape = Tape::new();
            let dp = dparams.bind(&mut tape, true)?;
            let vf = tape.constant(first)?;
            let vs = tape.constant(second)?;
            let real = tape.constant(middle)?;
            let gen = tape.constant(fake)?;
            let (xr, xg) = if self.cfg.conditioned {
                (tape.concat_channels(&[real, vf, vs])?, tape.concat_channels(&[gen, vf, vs])?)
            } else {
                (real, gen)
            };
            let pr = dspec.forward(&mut tape, &dp, &[xr])?;
            let pg = dspec.forward(&mut tape, &dp, &[xg])?;
            let lr = mean_log_loss(&mut tape, pr, false, b)?;
            let lg = mean_log_loss(&mut tape, pg, true, b)?;
            let loss = tape.add(lr, lg)?;
            tape.backward(loss)?;
            let dgrads = dp.grads(&tape)?;
            let dl = tape.value(loss)?.item()?;
            let before = self.generator.clone();
            sgd_adam_update(dparams, &dgrads, &mut self.state, DISCRIMINATOR_PREFIX)?;
            if before != self.generator {
                return Err(Error::InvalidArgument("discriminator update touched generator parameters".into()));
            }
            disc_loss = Some(dl);
        }

        let disc_before = self.disc.as_ref().map(|(_, p)| p.clone());
        sgd_adam_update(&mut self.generator, &grads, &mut self.state, GENERATOR_PREFIX)?;
        if disc_before.as_ref() != self.disc.as_ref().map(|(_, p)| p) {
            return Err(Error::InvalidArgument("generator update touched discriminator parameters".into()));
        }
        self.last_grads = Some(grads);
        self.state.step += 1;

        let loss = LossReport {
            total: alpha * mse_term + adversarial_term,
            mse_term,
            adversarial_term,
            alpha,
        };
        let rec = StepRecord {
            n,
            loss,
            discriminator_loss: disc_loss,
        };
        self.record(rec)?;
        Ok(rec)
    }

    fn record(&mut self, rec: StepRecord) -> Result<()> {
        let mut warn = false;
        if let Some(dl) = rec.discriminator_loss {
            if dl < COLLAPSE_LOSS {
                self.collapse_run += 1;
                if self.collapse_run == COLLAPSE_STEPS {
                    warn = true;
                    self.collapse_warnings.push(rec.n);
                }
            } else {
                self.collapse_run = 0;
            }
        }
        if let Some(w) = &mut self.log {
            let path = self.cfg.log.clone().unwrap_or_default();
            let io = |e| Error::io(&path, e);
            let l = rec.loss;
            writeln!(w, "{}\t{}\t{}\t{}\t{}", rec.n, l.alpha, l.mse_term, l.adversarial_term, l.total).map_err(io)?;
            if warn {
                writeln!(
                    w,
                    "# discriminator loss below {COLLAPSE_LOSS} for {COLLAPSE_STEPS} consecutive steps: possible mode collapse"
                )
                .map_err(io)?;
            }
        }
        self.history.push(rec);
        Ok(())
    }

    pub fn finish(mut self) -> Result<TrainOutcome> {
        if let Some(w) = &mut self.log {
            let path = self.cfg.log.clone().unwrap_or_default();
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        let outcome = TrainOutcome {
            config: self.cfg,
            state: self.state,
            generator: self.generator,
            discriminator: self.disc.map(|(_, p)| p),
            history: self.history,
            collapse_warnings: self.collapse_warnings,
        };
        if let Some(p) = &outcome.config.checkpoint {
            outcome.checkpoint().save(p)?;
        }
        Ok(outcome)
    }
}

/// Runs `cfg.steps` generator updates on `data`.
pub fn train(data: &[FrameTriplet], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(cfg, data)?;
    for _ in 0..cfg.steps {
        t.step()?;
    }
    t.finish()
}

/// Plain generator trained on the summed squared error.
pub fn train_mse(data: &[FrameTriplet], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut c = cfg.clone();
    c.objective = Objective::Mse;
    train(data, &c)
}

/// Generator and discriminator trained in alternation.
pub fn train_adversarial(data: &[FrameTriplet], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut c = cfg.clone();
    c.objective = Objective::Adversarial;
    train(data, &c)
}

/// Adversarial training of the generator together with its embedded flow predictor.
pub fn train_joint_implicit_flow(data: &[FrameTriplet], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut c = cfg.clone();
    c.objective = Objective::Adversarial;
    c.flow = Some(FlowMode::Implicit);
    train(data, &c)
}
