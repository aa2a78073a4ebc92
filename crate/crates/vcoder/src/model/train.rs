//! One supervised training step: route each sample, backpropagate the
//! conditioned loss through the winner's pathway only, and apply a
//! single Adam update for the batch.
//!
//! Lateral inhibition makes the gradient local by construction: the loss
//! reads exactly one column of `W`, so every other column's gradient is
//! identically zero.

use rand::Rng;

use crate::kg::RelationId;
use crate::nn::{dot, sigmoid, AdamState, LayerGrads, NnError};
use crate::scalar::Scalar;

use super::routing::{candidate_losses, decide};
use super::{conditioned_loss, ModelError, RoutingDecision, UnitId, UnitLossStats, VCoderModel};

/// Gradients mirroring a [`VCoderModel`]'s parameters.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub encoder: Vec<LayerGrads<T>>,
    /// Column-major, same layout as the competitive layer's weights.
    pub w: Vec<T>,
    pub decoder: Vec<LayerGrads<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &VCoderModel<T>) -> Self {
        ModelGrads {
            encoder: model
                .encoder
                .layers
                .iter()
                .map(LayerGrads::zeros_like)
                .collect(),
            w: vec![T::zero(); model.competitive.weights().len()],
            decoder: model
                .decoder
                .layers
                .iter()
                .map(LayerGrads::zeros_like)
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            g.scale(factor);
        }
        for w in &mut self.w {
            *w = *w * factor;
        }
    }

    /// Flattens in the same (encoder, W, decoder) order as
    /// [`VCoderModel::param_mut`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in &self.encoder {
            out.extend_from_slice(&g.weights.data);
            out.extend_from_slice(&g.bias);
        }
        out.extend_from_slice(&self.w);
        for g in &self.decoder {
            out.extend_from_slice(&g.weights.data);
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// Backpropagates one sample's conditioned loss through unit `j`,
/// adding into `acc`. Returns the sample's loss.
fn accumulate_sample<T: Scalar>(
    model: &VCoderModel<T>,
    x: &[T],
    j: UnitId,
    acc: &mut ModelGrads<T>,
) -> Result<T, ModelError> {
    let enc_trace = model.encoder.forward_trace(x)?;
    let phi = enc_trace.output();
    let d = model.fingerprint_dim();
    let col = model.competitive.column(j);

    let h = sigmoid(dot(col, phi));
    let v: Vec<T> = col.iter().zip(phi).map(|(&c, &p)| c * p * h).collect();

    let dec_trace = model.decoder.forward_trace(&v)?;
    let z = dec_trace.output();
    let loss = conditioned_loss(x, z);
    if !loss.is_finite() {
        return Err(ModelError::Nn(NnError::NonFinite("conditioned loss")));
    }

    let two = T::of(2.0);
    let d_z: Vec<T> = z.iter().zip(x).map(|(&zi, &xi)| two * (zi - xi)).collect();
    let (dec_grads, d_v) = model.decoder.backprop(&dec_trace, &d_z, true);
    let d_v = d_v.expect("decoder input grad requested");

    // gate backward, product rule through both factors of v = (c . phi) h:
    //   dJ/dc_k   = g_k phi_k h + s h' phi_k
    //   dJ/dphi_k = g_k c_k  h + s h' c_k
    // with g = dJ/dv and s = sum_i g_i c_i phi_i
    let hp = h * (T::one() - h);
    let mut s = T::zero();
    for i in 0..d {
        s = s + d_v[i] * col[i] * phi[i];
    }
    let w_col = &mut acc.w[j * d..(j + 1) * d];
    let mut d_phi = vec![T::zero(); d];
    for k in 0..d {
        w_col[k] = w_col[k] + d_v[k] * phi[k] * h + s * hp * phi[k];
        d_phi[k] = d_v[k] * col[k] * h + s * hp * col[k];
    }

    let (enc_grads, _) = model.encoder.backprop(&enc_trace, &d_phi, false);
    for (a, g) in acc.encoder.iter_mut().zip(&enc_grads) {
        add_layer(a, g);
    }
    for (a, g) in acc.decoder.iter_mut().zip(&dec_grads) {
        add_layer(a, g);
    }
    Ok(loss)
}

fn add_layer<T: Scalar>(acc: &mut LayerGrads<T>, g: &LayerGrads<T>) {
    for (a, &b) in acc.weights.data.iter_mut().zip(&g.weights.data) {
        *a = *a + b;
    }
    for (a, &b) in acc.bias.iter_mut().zip(&g.bias) {
        *a = *a + b;
    }
}

/// Gradients of one sample's conditioned loss through unit `j`.
pub fn sample_gradients<T: Scalar>(
    model: &VCoderModel<T>,
    x: &[T],
    j: UnitId,
) -> Result<(T, ModelGrads<T>), ModelError> {
    let mut grads = ModelGrads::zeros_like(model);
    let loss = accumulate_sample(model, x, j, &mut grads)?;
    Ok((loss, grads))
}

/// Sizes of the optimizer slots in (encoder, W, decoder) order.
pub fn adam_slot_sizes<T: Scalar>(model: &VCoderModel<T>) -> Vec<usize> {
    let mut sizes = Vec::new();
    for l in &model.encoder.layers {
        sizes.push(l.weights.data.len());
        sizes.push(l.bias.len());
    }
    sizes.push(model.competitive.weights().len());
    for l in &model.decoder.layers {
        sizes.push(l.weights.data.len());
        sizes.push(l.bias.len());
    }
    sizes
}

/// Slot index of the competitive-layer weights.
pub(crate) fn w_slot<T: Scalar>(model: &VCoderModel<T>) -> usize {
    2 * model.encoder.layers.len()
}

/// One bias-corrected Adam update over all parameter tensors.
pub fn apply_gradients<T: Scalar>(
    model: &mut VCoderModel<T>,
    opt: &mut AdamState<T>,
    grads: &ModelGrads<T>,
) {
    opt.begin_step();
    let mut slot = 0;
    for (layer, g) in model.encoder.layers.iter_mut().zip(&grads.encoder) {
        opt.update(slot, &mut layer.weights.data, &g.weights.data);
        opt.update(slot + 1, &mut layer.bias, &g.bias);
        slot += 2;
    }
    opt.update(slot, model.competitive.weights_mut(), &grads.w);
    slot += 1;
    for (layer, g) in model.decoder.layers.iter_mut().zip(&grads.decoder) {
        opt.update(slot, &mut layer.weights.data, &g.weights.data);
        opt.update(slot + 1, &mut layer.bias, &g.bias);
        slot += 2;
    }
}

#[derive(Debug, Clone)]
pub struct TrainStepOutput {
    pub mean_loss: f64,
    pub decisions: Vec<RoutingDecision>,
}

/// Routes every sample in the batch, accumulates gradients through the
/// winners' pathways, applies one Adam update, and records each winning
/// unit's loss in `stats`.
pub fn train_step<T: Scalar, R: Rng>(
    model: &mut VCoderModel<T>,
    opt: &mut AdamState<T>,
    batch: &[(Vec<T>, RelationId)],
    epsilon: f64,
    rng: &mut R,
    stats: &mut UnitLossStats,
) -> Result<TrainStepOutput, ModelError> {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let mut grads = ModelGrads::zeros_like(model);
    let mut decisions = Vec::with_capacity(batch.len());
    let mut loss_sum = 0.0f64;
    for (x, r) in batch {
        let candidates = model.competitive.units_of(*r);
        if candidates.is_empty() {
            return Err(ModelError::EmptyCandidates { relation: *r });
        }
        let decision = if candidates.len() == 1 {
            // forced: the traced pass below computes the loss
            let unit = candidates[0];
            let loss = accumulate_sample(model, x, unit, &mut grads)?;
            RoutingDecision {
                unit,
                mode: super::RouteMode::Forced,
                candidates,
                losses: vec![loss.to_double()],
            }
        } else {
            let phi = model.encode(x)?;
            let losses = candidate_losses(model, x, &phi, &candidates)?;
            let (unit, mode) = decide(&candidates, &losses, epsilon, rng);
            accumulate_sample(model, x, unit, &mut grads)?;
            RoutingDecision {
                unit,
                mode,
                candidates,
                losses,
            }
        };
        let winner_loss = decision.winner_loss();
        stats.record(decision.unit, winner_loss);
        loss_sum += winner_loss;
        decisions.push(decision);
    }
    grads.scale(T::of(1.0 / batch.len() as f64));
    apply_gradients(model, opt, &grads);
    Ok(TrainStepOutput {
        mean_loss: loss_sum / batch.len() as f64,
        decisions,
    })
}
