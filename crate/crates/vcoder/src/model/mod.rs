//! The V-Coder: an encoder feeding a competitive layer with lateral
//! inhibition, whose single active unit gates the decoder input.
//!
//! Each unit is a column of the matrix `W` linking the encoder output
//! (the fingerprint) to the competitive layer. A sample routed to unit
//! `j` reaches the decoder as `v_j = (W[:,j] . phi) * h_j` with
//! `h_j = sigmoid(W[:,j] . phi)`; every other unit is inhibited and
//! carries neither signal nor gradient. Growing the layer copies a
//! column, so previously learned behavior is preserved exactly.

mod routing;
mod stats;
mod train;

pub use routing::{route_argmin, route_supervised, route_unsupervised, RouteMode, RoutingDecision};
pub use stats::UnitLossStats;
pub use train::{
    adam_slot_sizes, apply_gradients, sample_gradients, train_step, ModelGrads, TrainStepOutput,
};
pub(crate) use train::w_slot as w_slot_of;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::RelationId;
use crate::nn::{dot, sigmoid, Activation, DenseLayer, Network, NnError};
use crate::scalar::Scalar;

pub type UnitId = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("unit {unit} out of range ({count} units)")]
    UnitOutOfRange { unit: UnitId, count: usize },
    #[error("no competitive unit has lineage origin {relation}")]
    EmptyCandidates { relation: RelationId },
    #[error("no unit is eligible for splitting (need >= {min_samples} samples and a defined variance)")]
    NoEligibleUnit { min_samples: u64 },
}

/// Which relation a unit descends from, and how many splits deep it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub origin: RelationId,
    pub generation: u32,
}

/// Weight columns linking the fingerprint to the competitive units,
/// plus the per-unit lineage table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompetitiveLayer<T> {
    dim: usize,
    /// Column-major `dim x m`; column `j` is unit `j`'s weights.
    weights: Vec<T>,
    lineage: Vec<Lineage>,
}

impl<T: Scalar> CompetitiveLayer<T> {
    /// One unit per relation, column `j` supervised by relation `j`.
    pub fn new(dim: usize, n_relations: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (dim + n_relations) as f64).sqrt();
        let weights = (0..dim * n_relations)
            .map(|_| T::of(rng.gen_range(-limit..limit)))
            .collect();
        let lineage = (0..n_relations)
            .map(|origin| Lineage {
                origin,
                generation: 0,
            })
            .collect();
        CompetitiveLayer {
            dim,
            weights,
            lineage,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unit_count(&self) -> usize {
        self.lineage.len()
    }

    pub fn lineage(&self) -> &[Lineage] {
        &self.lineage
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    fn check_unit(&self, j: UnitId) -> Result<(), ModelError> {
        if j < self.unit_count() {
            Ok(())
        } else {
            Err(ModelError::UnitOutOfRange {
                unit: j,
                count: self.unit_count(),
            })
        }
    }

    #[inline]
    pub fn column(&self, j: UnitId) -> &[T] {
        &self.weights[j * self.dim..(j + 1) * self.dim]
    }

    /// Units whose lineage origin is `r`, in ascending unit order.
    pub fn units_of(&self, r: RelationId) -> Vec<UnitId> {
        self.lineage
            .iter()
            .enumerate()
            .filter(|(_, l)| l.origin == r)
            .map(|(j, _)| j)
            .collect()
    }

    /// Sigmoid activations of every unit for a fingerprint.
    pub fn activations(&self, phi: &[T]) -> Result<Vec<T>, ModelError> {
        self.check_phi(phi)?;
        Ok((0..self.unit_count())
            .map(|j| sigmoid(dot(self.column(j), phi)))
            .collect())
    }

    fn check_phi(&self, phi: &[T]) -> Result<(), ModelError> {
        if phi.len() != self.dim {
            return Err(ModelError::Nn(NnError::Shape {
                context: "competitive layer input",
                expected: self.dim,
                got: phi.len(),
            }));
        }
        Ok(())
    }

    /// Gated decoder input for unit `j`:
    /// `v_j = (W[:,j] . phi) * h_j` with `h_j = sigmoid(W[:,j] . phi)`.
    pub fn gate(&self, phi: &[T], j: UnitId) -> Result<Vec<T>, ModelError> {
        self.check_unit(j)?;
        self.check_phi(phi)?;
        let col = self.column(j);
        let h = sigmoid(dot(col, phi));
        Ok(col
            .iter()
            .zip(phi)
            .map(|(&c, &p)| c * p * h)
            .collect())
    }

    /// Appends a unit whose column is an exact copy of `j`'s. Existing
    /// columns are untouched. Returns the new unit's id.
    pub fn split(&mut self, j: UnitId) -> Result<UnitId, ModelError> {
        self.check_unit(j)?;
        let new_id = self.unit_count();
        self.weights.extend_from_within(j * self.dim..(j + 1) * self.dim);
        let parent = self.lineage[j];
        self.lineage.push(Lineage {
            origin: parent.origin,
            generation: parent.generation + 1,
        });
        Ok(new_id)
    }
}

/// Encoder, competitive layer and decoder, with dimension invariants
/// enforced at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VCoderModel<T> {
    pub encoder: Network<T>,
    pub competitive: CompetitiveLayer<T>,
    pub decoder: Network<T>,
}

impl<T: Scalar> VCoderModel<T> {
    /// Builds a model for inputs of `input_dim` bits with fingerprint
    /// dimension `hidden_dim` and one competitive unit per relation.
    ///
    /// Encoder and decoder each have one hidden layer of the fingerprint
    /// size; the encoder output and decoder output are sigmoid so that
    /// fingerprints and reconstructions live in (0,1).
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        n_relations: usize,
        hidden_activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = Network::new(vec![
            DenseLayer::glorot(hidden_dim, input_dim, hidden_activation, rng),
            DenseLayer::glorot(hidden_dim, hidden_dim, Activation::Sigmoid, rng),
        ]);
        let competitive = CompetitiveLayer::new(hidden_dim, n_relations, rng);
        let decoder = Network::new(vec![
            DenseLayer::glorot(hidden_dim, hidden_dim, hidden_activation, rng),
            DenseLayer::glorot(input_dim, hidden_dim, Activation::Sigmoid, rng),
        ]);
        VCoderModel {
            encoder,
            competitive,
            decoder,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn fingerprint_dim(&self) -> usize {
        self.competitive.dim()
    }

    pub fn unit_count(&self) -> usize {
        self.competitive.unit_count()
    }

    /// The fingerprint: the encoder's dense representation of an input.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        Ok(self.encoder.forward(x)?)
    }

    /// Reconstruction through unit `j` and its conditioned loss
    /// `sum_i (x_i - z_i)^2`.
    pub fn reconstruct(&self, x: &[T], j: UnitId) -> Result<(Vec<T>, T), ModelError> {
        let phi = self.encode(x)?;
        let v = self.competitive.gate(&phi, j)?;
        let z = self.decoder.forward(&v)?;
        let loss = conditioned_loss(x, &z);
        Ok((z, loss))
    }

    /// Conditioned loss given an already-computed fingerprint.
    pub(crate) fn loss_from_phi(&self, x: &[T], phi: &[T], j: UnitId) -> Result<T, ModelError> {
        let v = self.competitive.gate(phi, j)?;
        let z = self.decoder.forward(&v)?;
        Ok(conditioned_loss(x, &z))
    }

    /// Grows the competitive layer by a copy of unit `j`, leaving the
    /// encoder, decoder and all existing columns bitwise untouched.
    pub fn split(&mut self, j: UnitId) -> Result<UnitId, ModelError> {
        self.competitive.split(j)
    }

    /// Total number of scalar parameters (encoder, W, decoder).
    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.competitive.weights.len()
            + self.decoder.param_count()
    }

    /// Mutable access to the `i`-th parameter in (encoder, W, decoder)
    /// order; pairs with [`ModelGrads::flatten`] for gradient checking.
    pub fn param_mut(&mut self, i: usize) -> &mut T {
        let enc = self.encoder.param_count();
        if i < enc {
            return self.encoder.param_mut(i);
        }
        let i = i - enc;
        if i < self.competitive.weights.len() {
            return &mut self.competitive.weights[i];
        }
        self.decoder.param_mut(i - self.competitive.weights.len())
    }
}

pub(crate) fn conditioned_loss<T: Scalar>(x: &[T], z: &[T]) -> T {
    x.iter()
        .zip(z)
        .map(|(&xi, &zi)| {
            let d = xi - zi;
            d * d
        })
        .sum()
}

#[cfg(test)]
pub(crate) fn test_model(
    input_dim: usize,
    hidden_dim: usize,
    n_relations: usize,
    seed: u64,
) -> VCoderModel<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    VCoderModel::new(
        input_dim,
        hidden_dim,
        n_relations,
        Activation::Sigmoid,
        &mut rng,
    )
}
