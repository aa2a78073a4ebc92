//! Exploration-rate decay.
//!
//! The default form starts at `eps_start` and converges to `eps_end`;
//! the `Literal` form keeps the printed expression, which collapses to
//! `eps_end * exp(-t * decay)` and therefore starts at `eps_end`.

use serde::{Deserialize, Serialize};

use super::config::{EpsilonFormula, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
    pub formula: EpsilonFormula,
}

impl EpsilonSchedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        EpsilonSchedule {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            decay: cfg.epsilon_decay,
            formula: cfg.epsilon_formula,
        }
    }

    /// Exploration rate at iteration `t` (t counts batches since the
    /// last split event).
    pub fn value(&self, t: u64) -> f64 {
        let damp = (-(t as f64) * self.decay).exp();
        match self.formula {
            EpsilonFormula::Standard => self.end + (self.start - self.end) * damp,
            EpsilonFormula::Literal => (self.start + (self.end - self.start)) * damp,
        }
    }
}
