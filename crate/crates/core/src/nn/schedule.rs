use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest learning rate a linear decay is allowed to emit.
pub const MIN_LINEAR_LR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// Geometric interpolation from `start` (first epoch) to `end` (last).
    LogDecay { start: f64, end: f64 },
    /// `start − decay_per_epoch · epoch`, floored at [`MIN_LINEAR_LR`].
    LinearDecay { start: f64, decay_per_epoch: f64 },
    Constant { lr: f64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::LogDecay { start, end } => {
                if !(start.is_finite() && end.is_finite() && start > end && end > 0.0) {
                    return Err(Error::Config(format!(
                        "log decay needs start > end > 0, got {start} -> {end}"
                    )));
                }
            }
            LrSchedule::LinearDecay {
                start,
                decay_per_epoch,
            } => {
                if !(start.is_finite() && start > 0.0 && decay_per_epoch.is_finite()) {
                    return Err(Error::Config(format!(
                        "linear decay needs a positive start, got {start}"
                    )));
                }
            }
            LrSchedule::Constant { lr } => {
                if !(lr.is_finite() && lr >= 0.0) {
                    return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
                }
            }
        }
        Ok(())
    }

    /// Learning rate for `epoch` (0-based) of a run of `max_epochs`.
    pub fn lr_at(&self, epoch: usize, max_epochs: usize) -> f64 {
        match *self {
            LrSchedule::LogDecay { start, end } => {
                if max_epochs <= 1 {
                    return start;
                }
                let t = epoch as f64 / (max_epochs - 1) as f64;
                let log_start = start.log10();
                10f64.powf(log_start + (end.log10() - log_start) * t)
            }
            LrSchedule::LinearDecay {
                start,
                decay_per_epoch,
            } => (start - decay_per_epoch * epoch as f64).max(MIN_LINEAR_LR),
            LrSchedule::Constant { lr } => lr,
        }
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize, max_epochs: usize) -> f64 {
    schedule.lr_at(epoch, max_epochs)
}
