//! Central-difference gradient checking for the dense-network loss.
//!
//! The checker relies only on forward evaluations, so it is an
//! independent oracle for the reverse-mode path in
//! [`Network::backward_sse`].

use crate::scalar::Scalar;

use super::{flatten_grads, Network, NnError};

/// Compares analytic gradients against central finite differences and
/// returns the maximum relative error
/// `|analytic - numeric| / max(1, |analytic|)` over all parameters.
///
/// `h` must lie in `[1e-7, 1e-3]`.
pub fn finite_diff_check<T: Scalar>(
    network: &Network<T>,
    input: &[T],
    target: &[T],
    h: f64,
) -> Result<f64, NnError> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(NnError::StepSize(h));
    }
    let (_, grads, _) = network.backward_sse(input, target)?;
    let analytic = flatten_grads(&grads);
    let mut net = network.clone();
    let step = T::of(h);
    let mut max_err = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *net.param_mut(i);
        *net.param_mut(i) = orig + step;
        let plus = sse_loss(&net, input, target)?;
        *net.param_mut(i) = orig - step;
        let minus = sse_loss(&net, input, target)?;
        *net.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = a.to_double();
        let err = (a - numeric).abs() / a.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}

fn sse_loss<T: Scalar>(net: &Network<T>, input: &[T], target: &[T]) -> Result<f64, NnError> {
    let out = net.forward(input)?;
    let mut loss = T::zero();
    for (&z, &t) in out.iter().zip(target) {
        let d = z - t;
        loss = loss + d * d;
    }
    Ok(loss.to_double())
}
