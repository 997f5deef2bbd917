//! Losses, the decaying MSE weight, optimizers and the training loops.

mod config;
mod run;

use std::collections::BTreeMap;

pub use config::{Objective, OptimizerKind, TrainConfig};
pub use run::{train, train_adversarial, train_joint_implicit_flow, train_mse, StepRecord, TrainOutcome, Trainer};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{ensure_same_shape, Tensor};

/// Added inside the logarithms of the adversarial losses.
pub const LOG_EPS: f64 = 1e-8;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Terms of the generator objective for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub mse_term: f64,
    pub adversarial_term: f64,
    pub alpha: f64,
}

/// Sum of squared differences over all elements.
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<f64> {
    ensure_same_shape("mse_loss", a, b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `α = e^(−γn)`.
pub fn alpha_schedule(gamma: f64, n: u64) -> f64 {
    (-gamma * n as f64).exp()
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be a probability, got {p}")))
    }
}

/// `α·Σ(out − truth)² − log(1 − p + ε)`, where `p` is the discriminator's
/// probability that `gen_out` is generated.
pub fn generator_loss(gen_out: &Tensor, truth: &Tensor, disc_prob: f64, alpha: f64) -> Result<LossReport> {
    check_prob(disc_prob, "discriminator output")?;
    let mse_term = mse_loss(gen_out, truth)?;
    let adversarial_term = -(1.0 - disc_prob + LOG_EPS).ln();
    Ok(LossReport {
        total: alpha * mse_term + adversarial_term,
        mse_term,
        adversarial_term,
        alpha,
    })
}

/// Cross-entropy of a discriminator that outputs the probability of "generated":
/// `−log(1 − p_real + ε) − log(p_generated + ε)`.
pub fn discriminator_loss(prob_on_real: f64, prob_on_generated: f64) -> Result<f64> {
    check_prob(prob_on_real, "probability on the real frame")?;
    check_prob(prob_on_generated, "probability on the generated frame")?;
    Ok(-(1.0 - prob_on_real + LOG_EPS).ln() - (prob_on_generated + LOG_EPS).ln())
}

/// Adam moments of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
    /// Updates applied so far.
    pub t: u64,
}

/// Optimizer and schedule state of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Generator updates so far.
    pub step: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Keyed by the prefixed parameter name.
    pub moments: BTreeMap<String, Moments>,
}

impl TrainState {
    pub fn new(gamma: f64, learning_rate: f64, optimizer: OptimizerKind, seed: u64) -> Self {
        TrainState {
            step: 0,
            gamma,
            learning_rate,
            optimizer,
            seed,
            moments: BTreeMap::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        alpha_schedule(self.gamma, self.step)
    }
}

/// Applies one optimizer step to every parameter of `params` from the
/// matching entry of `grads`. Moments are stored under `prefix + name`.
pub fn sgd_adam_update(params: &mut ParamStore, grads: &ParamStore, state: &mut TrainState, prefix: &str) -> Result<()> {
    for name in params.names() {
        if !grads.contains(name) {
            return Err(Error::MissingGradient(name.to_string()));
        }
    }
    let lr = state.learning_rate;
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked above");
        ensure_same_shape("optimizer", p, g)?;
        match state.optimizer {
            OptimizerKind::Sgd => {
                for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                    *x -= lr * d;
                }
            }
            OptimizerKind::Adam => {
                let mo = state.moments.entry(format!("{prefix}{name}")).or_insert_with(|| Moments {
                    m: Tensor::zeros(g.shape()).expect("parameter shape"),
                    v: Tensor::zeros(g.shape()).expect("parameter shape"),
                    t: 0,
                });
                mo.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(mo.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(mo.t as i32);
                let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
                for (k, x) in p.data_mut().iter_mut().enumerate() {
                    let d = g.data()[k];
                    m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * d;
                    v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * d * d;
                    *x -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
        p.ensure_finite("optimizer")?;
    }
    Ok(())
}
