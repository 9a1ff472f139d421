use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, Gradients, LrSchedule, Network, OptimizerState, Target};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    /// Epochs without sufficient improvement before stopping.
    pub patience: usize,
    /// Relative improvement that counts as progress.
    pub min_delta: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_PATIENCE: usize = 10;
    pub const DEFAULT_MIN_DELTA: f64 = 1e-5;

    /// Autoencoder phase: 500 epochs, batch 100, log decay 1e-3 → 1e-9.
    pub fn autoencoder() -> Self {
        Self {
            max_epochs: 500,
            batch_size: 100,
            lr_schedule: LrSchedule::LogDecay {
                start: 1e-3,
                end: 1e-9,
            },
            momentum: Self::DEFAULT_MOMENTUM,
            patience: Self::DEFAULT_PATIENCE,
            min_delta: Self::DEFAULT_MIN_DELTA,
            seed: 0,
        }
    }

    /// Supervised phase: 300 epochs, batch 100, constant 0.002.
    pub fn classifier() -> Self {
        Self {
            max_epochs: 300,
            batch_size: 100,
            lr_schedule: LrSchedule::Constant { lr: 0.002 },
            momentum: Self::DEFAULT_MOMENTUM,
            patience: Self::DEFAULT_PATIENCE,
            min_delta: Self::DEFAULT_MIN_DELTA,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and patience must all be >= 1".to_owned(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return Err(Error::Config(format!(
                "min_delta must be a non-negative number, got {}",
                self.min_delta
            )));
        }
        self.lr_schedule.validate()
    }
}

/// Stops when the loss fails to beat the best seen so far by a relative
/// margin for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch loss; returns `true` when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best * (1.0 - self.min_delta) || self.best.is_infinite() {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per executed epoch.
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.loss_history.len()
    }
}

/// Loss and gradients for one batch.
pub fn supervised_step(net: &Network, batch: &Matrix, target: Target<'_>) -> Result<(f64, Gradients)> {
    let trace = net.forward(batch)?;
    let (loss, grad) = target.evaluate(net, trace.output())?;
    let grads = backward(net, &trace, &grad)?;
    Ok((loss, grads))
}

/// Mini-batch SGD with momentum over `n_samples` examples.
///
/// `batch_step` receives the current network and the sample indices of a
/// batch and returns that batch's loss and gradients. Batch order is a
/// seeded shuffle per epoch, so the run is reproducible from
/// `(cfg, initial network)`. The trailing partial batch is kept.
pub fn train<F>(net: &mut Network, cfg: &TrainConfig, n_samples: usize, mut batch_step: F) -> Result<TrainReport>
where
    F: FnMut(&Network, &[usize]) -> Result<(f64, Gradients)>,
{
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Data("training set is empty".to_owned()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = OptimizerState::new(net, cfg.momentum)?;
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_schedule.lr_at(epoch, cfg.max_epochs);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_step(net, chunk).map_err(|e| at_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    message: format!("batch loss is {loss}"),
                });
            }
            optimizer
                .step(net, &grads, lr)
                .map_err(|e| at_epoch(e, epoch))?;
            total += loss;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6e} lr {lr:.3e}");
        history.push(epoch_loss);
        if stopper.observe(epoch_loss) {
            log::info!("early stop after {} epochs", epoch + 1);
            return Ok(TrainReport {
                loss_history: history,
                stopped_early: true,
            });
        }
    }
    Ok(TrainReport {
        loss_history: history,
        stopped_early: false,
    })
}

fn at_epoch(err: Error, epoch: usize) -> Error {
    match err {
        Error::NonFinite(what) => Error::Numeric {
            epoch,
            message: format!("{what} became non-finite"),
        },
        other => other,
    }
}
