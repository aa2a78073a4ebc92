//! Sample routing through the competitive layer.
//!
//! Supervised routing keeps a sample inside its relation's lineage: a
//! single-unit lineage forces the unit, a multi-unit lineage picks the
//! minimal conditioned loss, with epsilon-greedy exploration while a
//! fresh split settles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kg::RelationId;
use crate::nn::NnError;
use crate::scalar::Scalar;

use super::{ModelError, UnitId, VCoderModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteMode {
    /// Single-unit lineage; no choice to make.
    Forced,
    /// Minimal conditioned loss among the lineage's units.
    Argmin,
    /// Uniform draw among the lineage's units (probability epsilon).
    Explored,
}

impl RouteMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RouteMode::Forced => "forced",
            RouteMode::Argmin => "argmin",
            RouteMode::Explored => "explored",
        }
    }
}

/// Outcome of routing one sample: the winning unit and the conditioned
/// losses of every candidate evaluated.
#[derive(Debug, Clone)]
pub struct RoutingDecision {
    pub unit: UnitId,
    pub mode: RouteMode,
    pub candidates: Vec<UnitId>,
    pub losses: Vec<f64>,
}

impl RoutingDecision {
    /// Conditioned loss of the winning unit.
    pub fn winner_loss(&self) -> f64 {
        let idx = self
            .candidates
            .iter()
            .position(|&c| c == self.unit)
            .expect("winner is a candidate");
        self.losses[idx]
    }
}

/// Picks the winner among candidates with known losses. With
/// `epsilon = 0` no random draw is consumed, so evaluation-time routing
/// is deterministic given the parameters.
pub(crate) fn decide<R: Rng>(
    candidates: &[UnitId],
    losses: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> (UnitId, RouteMode) {
    debug_assert_eq!(candidates.len(), losses.len());
    if candidates.len() == 1 {
        return (candidates[0], RouteMode::Forced);
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let idx = rng.gen_range(0..candidates.len());
        return (candidates[idx], RouteMode::Explored);
    }
    (argmin_pick(candidates, losses), RouteMode::Argmin)
}

/// Ties resolve to the earlier (lower-id) candidate.
fn argmin_pick(candidates: &[UnitId], losses: &[f64]) -> UnitId {
    let mut best = 0;
    for i in 1..losses.len() {
        if losses[i] < losses[best] {
            best = i;
        }
    }
    candidates[best]
}

/// Deterministic evaluation routing: pure argmin over the lineage's
/// units, no exploration, no RNG.
pub fn route_argmin<T: Scalar>(
    model: &VCoderModel<T>,
    x: &[T],
    r: RelationId,
) -> Result<RoutingDecision, ModelError> {
    let candidates = model.competitive.units_of(r);
    if candidates.is_empty() {
        return Err(ModelError::EmptyCandidates { relation: r });
    }
    let phi = model.encode(x)?;
    let losses = candidate_losses(model, x, &phi, &candidates)?;
    let (unit, mode) = if candidates.len() == 1 {
        (candidates[0], RouteMode::Forced)
    } else {
        (argmin_pick(&candidates, &losses), RouteMode::Argmin)
    };
    Ok(RoutingDecision {
        unit,
        mode,
        candidates,
        losses,
    })
}

pub(crate) fn candidate_losses<T: Scalar>(
    model: &VCoderModel<T>,
    x: &[T],
    phi: &[T],
    candidates: &[UnitId],
) -> Result<Vec<f64>, ModelError> {
    let mut losses = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let loss = model.loss_from_phi(x, phi, c)?;
        if !loss.is_finite() {
            return Err(ModelError::Nn(NnError::NonFinite("conditioned loss")));
        }
        losses.push(loss.to_double());
    }
    Ok(losses)
}

/// Routes a sample supervised by its relation label `r`.
pub fn route_supervised<T: Scalar, R: Rng>(
    model: &VCoderModel<T>,
    x: &[T],
    r: RelationId,
    epsilon: f64,
    rng: &mut R,
) -> Result<RoutingDecision, ModelError> {
    let candidates = model.competitive.units_of(r);
    if candidates.is_empty() {
        return Err(ModelError::EmptyCandidates { relation: r });
    }
    let phi = model.encode(x)?;
    let losses = candidate_losses(model, x, &phi, &candidates)?;
    let (unit, mode) = decide(&candidates, &losses, epsilon, rng);
    Ok(RoutingDecision {
        unit,
        mode,
        candidates,
        losses,
    })
}

/// Pure winner-take-all routing: the unit with the maximal activation,
/// ties broken by the lowest unit id.
pub fn route_unsupervised<T: Scalar>(
    model: &VCoderModel<T>,
    x: &[T],
) -> Result<UnitId, ModelError> {
    let phi = model.encode(x)?;
    let h = model.competitive.activations(&phi)?;
    let mut best = 0;
    for (j, &hj) in h.iter().enumerate().skip(1) {
        if hj > h[best] {
            best = j;
        }
    }
    Ok(best)
}
