//! Adam with decoupled weight decay.
//!
//! The decay term is applied directly to the parameters
//! (`p -= lr * wd * p`) rather than folded into the gradient, so it is
//! independent of the moment statistics.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Optimizer state over a fixed, ordered set of parameter tensors
/// ("slots"). The caller updates each slot once per step, between
/// [`AdamState::begin_step`] calls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    slots: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Kingma & Ba defaults for the moment decays and epsilon.
    pub fn new(learning_rate: f64, weight_decay: f64, slot_sizes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            slots: slot_sizes
                .iter()
                .map(|&n| Moments {
                    m: vec![T::zero(); n],
                    v: vec![T::zero(); n],
                })
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn slot_len(&self, slot: usize) -> usize {
        self.slots[slot].m.len()
    }

    /// Advances the shared step counter; call once per batch, before the
    /// per-slot updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update with bias correction to a parameter tensor.
    pub fn update(&mut self, slot: usize, params: &mut [T], grads: &[T]) {
        let st = &mut self.slots[slot];
        assert_eq!(st.m.len(), params.len(), "slot/param length mismatch");
        assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let t = self.step as i32;
        let corr1 = T::of(1.0 - self.beta1.powi(t));
        let corr2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        let decay = T::of(self.learning_rate * self.weight_decay);
        for i in 0..params.len() {
            let g = grads[i];
            st.m[i] = b1 * st.m[i] + (one - b1) * g;
            st.v[i] = b2 * st.v[i] + (one - b2) * g * g;
            let m_hat = st.m[i] / corr1;
            let v_hat = st.v[i] / corr2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps) - decay * params[i];
        }
    }

    /// Extends a slot's moments with a copy of `source` (a sub-range of
    /// the same slot); used when a competitive-layer column is duplicated
    /// so the twin starts from identical optimizer state.
    pub fn grow_slot(&mut self, slot: usize, source: std::ops::Range<usize>) {
        let st = &mut self.slots[slot];
        st.m.extend_from_within(source.clone());
        st.v.extend_from_within(source);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params_unchanged() {
        let mut opt: AdamState<f64> = AdamState::new(0.01, 0.0, &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            opt.begin_step();
            opt.update(0, &mut p, &[0.0; 3]);
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        // constant gradient: bias correction makes m_hat/sqrt(v_hat) = sign(g)
        let mut opt: AdamState<f64> = AdamState::new(0.01, 0.0, &[1]);
        let mut p = vec![0.0];
        opt.begin_step();
        opt.update(0, &mut p, &[3.0]);
        assert!((p[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn decoupled_decay_shrinks_params_at_zero_gradient() {
        let lr = 0.01;
        let wd = 0.001;
        let mut opt: AdamState<f64> = AdamState::new(lr, wd, &[1]);
        let mut p = vec![2.0];
        let mut expected = 2.0;
        for _ in 0..10 {
            opt.begin_step();
            opt.update(0, &mut p, &[0.0]);
            expected *= 1.0 - lr * wd;
        }
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_the_identity() {
        let mut opt: AdamState<f64> = AdamState::new(0.0, 0.001, &[2]);
        let mut p = vec![0.3, -0.7];
        opt.begin_step();
        opt.update(0, &mut p, &[5.0, -1.0]);
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn grown_slot_copies_the_source_moments() {
        let mut opt: AdamState<f64> = AdamState::new(0.01, 0.0, &[4]);
        let mut p = vec![1.0, 2.0, 3.0, 4.0];
        opt.begin_step();
        opt.update(0, &mut p, &[0.1, 0.2, 0.3, 0.4]);
        opt.grow_slot(0, 2..4);
        assert_eq!(opt.slot_len(0), 6);
        let mut grown = vec![1.0; 6];
        // identical gradients now produce identical updates on 2..4 and 4..6
        opt.begin_step();
        opt.update(0, &mut grown, &[0.0, 0.0, 0.5, 0.6, 0.5, 0.6]);
        assert_eq!(grown[2], grown[4]);
        assert_eq!(grown[3], grown[5]);
    }
}
