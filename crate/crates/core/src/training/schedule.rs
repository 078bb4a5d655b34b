use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `eta_min + (lr_max - eta_min) * (1 + cos(pi * t / period)) / 2`
pub fn cosine_warm_restart_lr(t: f64, period: f64, lr_max: f64, eta_min: f64) -> f64 {
    eta_min + (lr_max - eta_min) * (1.0 + (std::f64::consts::PI * t / period).cos()) / 2.0
}

/// Cosine annealing with warm restarts. Cycle `i` lasts `t0 * t_mult^i` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmRestarts {
    pub t0: u64,
    pub t_mult: u64,
    pub eta_min: f64,
}

impl WarmRestarts {
    pub fn new(t0: u64, t_mult: u64, eta_min: f64) -> Result<Self> {
        if t0 == 0 {
            return Err(Error::config("schedule.t0", "must be at least 1"));
        }
        if t_mult == 0 {
            return Err(Error::config("schedule.t_mult", "must be at least 1"));
        }
        Ok(Self { t0, t_mult, eta_min })
    }

    /// `(steps into the current cycle, cycle length)` at global `step`.
    pub fn position(&self, step: u64) -> (u64, u64) {
        let mut start = 0u64;
        let mut len = self.t0;
        while step >= start + len {
            start += len;
            len = len.saturating_mul(self.t_mult);
        }
        (step - start, len)
    }

    pub fn lr(&self, step: u64, lr_max: f64) -> f64 {
        let (t, period) = self.position(step);
        cosine_warm_restart_lr(t as f64, period as f64, lr_max, self.eta_min)
    }
}
