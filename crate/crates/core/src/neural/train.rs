use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::exp;
use crate::neural::adam::{adam_step, AdamConfig, AdamState};
use crate::neural::loss::{evaluate, prepare, CorrectionData};
use crate::neural::model::CorrectionModel;

/// Learning-rate schedule hook; training defaults to a constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · exp(−decay · epoch)`.
    Exponential { decay: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Exponential { decay } => base * exp(-decay * epoch as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub min_loss: f64,
    pub max_epochs: usize,
    /// Weight-initialization seed used by callers that build the model.
    /// Training itself is full-batch and deterministic.
    pub seed: u64,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    /// Emit a `log::debug!` line every this many epochs (0 = never).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            min_loss: 1e-2,
            max_epochs: 20_000,
            seed: 0,
            adam: AdamConfig::default(),
            schedule: LrSchedule::Constant,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return Err(invalid!("max_epochs must be at least 1"));
        }
        if self.min_loss.is_nan() {
            return Err(invalid!("min_loss is NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss before the first update, then one entry per update.
    pub history: Vec<f64>,
    pub best_loss: f64,
    /// Index into `history` of the kept parameters.
    pub best_epoch: usize,
    /// Whether the loss reached `min_loss`.
    pub converged: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.history.len() - 1
    }
}

/// Full-batch Adam on the relative loss.
///
/// On return the model holds the best parameters seen, also when training
/// diverges (the error carries the loss history).
pub fn train<M: CorrectionModel + ?Sized>(model: &mut M, data: &CorrectionData, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let prep = prepare(model.net(), data)?;
    let n = model.net().param_count();
    let mut params = model.net().params();
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut grad = vec![0.0; n];
    let mut state = AdamState::new(n);
    let mut history = Vec::new();
    let mut converged = false;

    for epoch in 0..=config.max_epochs {
        let last = epoch == config.max_epochs;
        let g = if last { None } else { Some(grad.as_mut_slice()) };
        let loss = evaluate(model.net(), &prep, g, false);
        history.push(loss);
        if !loss.is_finite() {
            model.net_mut().set_params(&best)?;
            log::warn!("training diverged at epoch {}", epoch);
            return Err(Error::TrainingDiverged { epoch, history });
        }
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best.copy_from_slice(&params);
        }
        if config.log_every > 0 && epoch % config.log_every == 0 {
            log::debug!("epoch {:>6}  loss {:.6e}", epoch, loss);
        }
        if loss <= config.min_loss {
            converged = true;
            break;
        }
        if last {
            break;
        }
        let lr = config.schedule.rate(config.learning_rate, epoch);
        adam_step(&mut params, &grad, &mut state, lr, &config.adam)?;
        if params.iter().any(|v| !v.is_finite()) {
            history.push(f64::NAN);
            model.net_mut().set_params(&best)?;
            return Err(Error::TrainingDiverged { epoch: epoch + 1, history });
        }
        model.net_mut().set_params(&params)?;
    }
    model.net_mut().set_params(&best)?;
    log::debug!(
        "training stopped after {} epochs, best loss {:.6e} at epoch {}",
        history.len() - 1,
        best_loss,
        best_epoch
    );
    Ok(TrainReport {
        history,
        best_loss,
        best_epoch,
        converged,
    })
}
