//! Training orchestration: shuffled mini-batch epochs, fixed-length
//! rounds, split events between rounds, and per-epoch reporting.
//!
//! A *round* is `epochs_per_round` epochs. The adaptive loop runs a
//! round, splits the unit with the highest loss variance of the last
//! completed epoch, resets the exploration clock, and repeats; one more
//! round follows the final split so the new units settle.

mod config;
mod schedule;

pub use config::{ConfigError, EpsilonFormula, TrainConfig};
pub use schedule::EpsilonSchedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{RelationId, TripleStore};
use crate::model::{
    adam_slot_sizes, train_step, ModelError, UnitId, UnitLossStats, VCoderModel,
};
use crate::nn::{AdamState, NnError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model expects inputs of length {model}, dataset produces {data}")]
    DimensionMismatch { model: usize, data: usize },
}

impl TrainError {
    /// True for non-finite-arithmetic failures (CLI exit code 4).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::Model(ModelError::Nn(NnError::NonFinite(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Chosen by the loss-variance criterion.
    Adaptive,
    /// Dictated by the caller (recovery protocol, disclosure runs).
    Forced,
}

impl SplitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitMode::Adaptive => "adaptive",
            SplitMode::Forced => "forced",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitEvent {
    pub step: u64,
    pub round: usize,
    pub source: UnitId,
    pub new_unit: UnitId,
    pub origin: RelationId,
    pub mode: SplitMode,
}

#[derive(Debug, Clone)]
pub struct UnitEpochStats {
    pub unit: UnitId,
    pub origin: RelationId,
    pub count: u64,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub round: usize,
    pub epoch: usize,
    pub global_step: u64,
    /// Exploration rate at the first iteration of the epoch.
    pub epsilon: f64,
    pub mean_loss: f64,
    pub samples: usize,
    pub per_unit: Vec<UnitEpochStats>,
    /// Split events that happened since the previous epoch report.
    pub split_events: Vec<SplitEvent>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub epochs: Vec<EpochReport>,
    pub splits: Vec<SplitEvent>,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn extend(&mut self, epochs: Vec<EpochReport>) {
        self.epochs.extend(epochs);
    }
}

/// Owns the model, optimizer, statistics, RNG streams and the
/// exploration clock. Serializable as a whole, which is what a
/// checkpoint is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer<T: Scalar> {
    cfg: TrainConfig,
    schedule: EpsilonSchedule,
    model: VCoderModel<T>,
    opt: AdamState<T>,
    stats: UnitLossStats,
    last_epoch_stats: Option<UnitLossStats>,
    /// Iterations since the last split event (Eq. 6's t).
    clock_t: u64,
    global_step: u64,
    round: usize,
    rng_explore: ChaCha8Rng,
    rng_shuffle: ChaCha8Rng,
    pending_splits: Vec<SplitEvent>,
}

impl<T: Scalar> Trainer<T> {
    /// Builds a freshly initialized model for `store` under `cfg`.
    ///
    /// Three independent RNG streams are derived from the seed: parameter
    /// initialization, epoch shuffling, and exploration draws, so that
    /// epsilon draws never perturb batch order.
    pub fn new(store: &TripleStore, cfg: TrainConfig) -> Self {
        let mut rng_init = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng_init.set_stream(0);
        let mut rng_shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng_shuffle.set_stream(1);
        let mut rng_explore = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng_explore.set_stream(2);
        let model = VCoderModel::new(
            store.input_dim(cfg.incidence_mode),
            cfg.hidden_dim,
            store.relation_count(),
            cfg.hidden_activation,
            &mut rng_init,
        );
        let opt = AdamState::new(
            cfg.learning_rate,
            cfg.weight_decay,
            &adam_slot_sizes(&model),
        );
        let stats = UnitLossStats::new(model.unit_count());
        let schedule = EpsilonSchedule::from_config(&cfg);
        Trainer {
            cfg,
            schedule,
            model,
            opt,
            stats,
            last_epoch_stats: None,
            clock_t: 0,
            global_step: 0,
            round: 0,
            rng_explore,
            rng_shuffle,
            pending_splits: Vec::new(),
        }
    }

    pub fn model(&self) -> &VCoderModel<T> {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    /// Current exploration rate.
    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.clock_t)
    }

    /// Statistics of the last completed epoch.
    pub fn last_epoch_stats(&self) -> Option<&UnitLossStats> {
        self.last_epoch_stats.as_ref()
    }

    fn check_dims(&self, store: &TripleStore) -> Result<(), TrainError> {
        let data = store.input_dim(self.cfg.incidence_mode);
        if data != self.model.input_dim() {
            return Err(TrainError::DimensionMismatch {
                model: self.model.input_dim(),
                data,
            });
        }
        Ok(())
    }

    /// Runs `epochs_per_round` shuffled epochs. On a numeric failure the
    /// trainer rolls back to the start of the failed epoch and returns
    /// the error, so the last good state is retained.
    pub fn run_round(&mut self, store: &TripleStore) -> Result<Vec<EpochReport>, TrainError> {
        self.check_dims(store)?;
        let mut reports = Vec::with_capacity(self.cfg.epochs_per_round);
        for epoch in 0..self.cfg.epochs_per_round {
            let snapshot = self.clone();
            match self.run_epoch(store, epoch) {
                Ok(report) => reports.push(report),
                Err(e) => {
                    *self = snapshot;
                    return Err(e);
                }
            }
        }
        if self.cfg.epochs_per_round > 0 {
            self.round += 1;
        }
        Ok(reports)
    }

    fn run_epoch(&mut self, store: &TripleStore, epoch: usize) -> Result<EpochReport, TrainError> {
        let n = store.triples().len();
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut self.rng_shuffle);
        let epsilon_at_start = self.epsilon();
        self.stats.reset();
        let mode = self.cfg.incidence_mode;
        let mut loss_sum = 0.0f64;
        for chunk in indices.chunks(self.cfg.batch_size) {
            let epsilon = self.schedule.value(self.clock_t);
            let batch: Vec<(Vec<T>, RelationId)> = chunk
                .iter()
                .map(|&i| {
                    let t = store.triples()[i];
                    let x = store
                        .triple_input(t, mode)
                        .expect("store triples are valid in their own store");
                    (x, t.relation)
                })
                .collect();
            let out = train_step(
                &mut self.model,
                &mut self.opt,
                &batch,
                epsilon,
                &mut self.rng_explore,
                &mut self.stats,
            )?;
            loss_sum += out.mean_loss * batch.len() as f64;
            self.clock_t += 1;
            self.global_step += 1;
        }
        let report = EpochReport {
            round: self.round,
            epoch,
            global_step: self.global_step,
            epsilon: epsilon_at_start,
            mean_loss: if n > 0 { loss_sum / n as f64 } else { 0.0 },
            samples: n,
            per_unit: self.unit_rows(),
            split_events: std::mem::take(&mut self.pending_splits),
        };
        self.last_epoch_stats = Some(self.stats.clone());
        Ok(report)
    }

    fn unit_rows(&self) -> Vec<UnitEpochStats> {
        let lineage = self.model.competitive.lineage();
        (0..self.stats.unit_count())
            .map(|j| UnitEpochStats {
                unit: j,
                origin: lineage[j].origin,
                count: self.stats.count(j),
                mean: self.stats.mean(j),
                variance: self.stats.variance(j),
            })
            .collect()
    }

    /// Splits unit `j`, grows the optimizer state with a copy of the
    /// column's moments, and resets the exploration clock.
    pub fn split_unit(&mut self, j: UnitId, mode: SplitMode) -> Result<SplitEvent, TrainError> {
        let d = self.model.fingerprint_dim();
        let new_unit = self.model.split(j)?;
        let w_slot = crate::model::w_slot_of(&self.model);
        self.opt.grow_slot(w_slot, j * d..(j + 1) * d);
        self.stats.push_unit();
        if let Some(s) = &mut self.last_epoch_stats {
            s.push_unit();
        }
        self.clock_t = 0;
        let event = SplitEvent {
            step: self.global_step,
            round: self.round,
            source: j,
            new_unit,
            origin: self.model.competitive.lineage()[j].origin,
            mode,
        };
        self.pending_splits.push(event.clone());
        Ok(event)
    }

    /// One round, then `rounds` iterations of (select highest-variance
    /// unit, split, round). `rounds = 0` is exactly [`Trainer::run_round`].
    pub fn run_adaptive(&mut self, store: &TripleStore) -> Result<RunReport, TrainError> {
        let mut report = RunReport::default();
        report.extend(self.run_round(store)?);
        for _ in 0..self.cfg.rounds {
            let candidate = match &self.last_epoch_stats {
                Some(stats) => stats.select_split_candidate(self.cfg.min_split_samples),
                None => Err(ModelError::NoEligibleUnit {
                    min_samples: self.cfg.min_split_samples,
                }),
            };
            match candidate {
                Ok(j) => {
                    let event = self.split_unit(j, SplitMode::Adaptive)?;
                    report.splits.push(event);
                    report.extend(self.run_round(store)?);
                }
                Err(e) => {
                    report.warnings.push(format!("splitting stopped early: {e}"));
                    break;
                }
            }
        }
        Ok(report)
    }

    /// Splits exactly unit `j` (no variance criterion), then runs one
    /// round so the twins can diverge.
    pub fn forced_split_round(
        &mut self,
        store: &TripleStore,
        j: UnitId,
    ) -> Result<RunReport, TrainError> {
        let event = self.split_unit(j, SplitMode::Forced)?;
        let epochs = self.run_round(store)?;
        Ok(RunReport {
            epochs,
            splits: vec![event],
            warnings: Vec::new(),
        })
    }
}
