//! Minimal dense-network math: affine layers, sigmoid/identity
//! activations, sum-of-squared-error loss with exact reverse-mode
//! gradients, Adam with decoupled weight decay, and a finite-difference
//! gradient checker.
//!
//! Everything is plain `Vec`-backed and single-threaded; the models in
//! this crate are tiny and bitwise reproducibility matters more than
//! throughput.

mod adam;
mod gradcheck;

pub use adam::AdamState;
pub use gradcheck::finite_diff_check;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("step size {0} outside [1e-7, 1e-3]")]
    StepSize(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Dense row-major matrix; row `i` holds the incoming weights of output
/// unit `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Glorot-uniform initialization in +-sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::of(rng.gen_range(-limit..limit)))
            .collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// One affine layer with an elementwise activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    pub weights: Mat<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn glorot(
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        DenseLayer {
            weights: Mat::glorot(out_dim, in_dim, rng),
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        if input.len() != self.in_dim() {
            return Err(NnError::Shape {
                context: "dense forward",
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        Ok((0..self.out_dim())
            .map(|i| {
                self.activation
                    .apply(dot(self.weights.row(i), input) + self.bias[i])
            })
            .collect())
    }
}

/// Per-layer parameter gradients, shape-mirroring a [`DenseLayer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerGrads<T> {
    pub weights: Mat<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerGrads<T> {
    pub fn zeros_like(layer: &DenseLayer<T>) -> Self {
        LayerGrads {
            weights: Mat::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![T::zero(); layer.out_dim()],
        }
    }

    pub fn scale(&mut self, factor: T) {
        for w in &mut self.weights.data {
            *w = *w * factor;
        }
        for b in &mut self.bias {
            *b = *b * factor;
        }
    }
}

/// Layer activations recorded during a forward pass; `values[0]` is the
/// input and `values[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().expect("trace holds at least the input")
    }
}

/// A sequential stack of dense layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Self {
        Network { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward pass keeping every layer's output for backpropagation.
    /// Non-finite intermediates are reported instead of propagated.
    pub fn forward_trace(&self, input: &[T]) -> Result<Trace<T>, NnError> {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let next = layer.forward(values.last().unwrap())?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite("layer forward"));
            }
            values.push(next);
        }
        Ok(Trace { values })
    }

    /// Reverse-mode pass from `d_output` (the loss gradient at the
    /// network output). Returns per-layer parameter gradients and, when
    /// requested, the gradient with respect to the network input.
    pub fn backprop(
        &self,
        trace: &Trace<T>,
        d_output: &[T],
        want_input_grad: bool,
    ) -> (Vec<LayerGrads<T>>, Option<Vec<T>>) {
        let mut grads: Vec<LayerGrads<T>> =
            self.layers.iter().map(LayerGrads::zeros_like).collect();
        let mut d = d_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.values[l];
            let y = &trace.values[l + 1];
            // d_pre = d .* act'(y)
            for (di, &yi) in d.iter_mut().zip(y) {
                *di = *di * layer.activation.derivative_from_output(yi);
            }
            let g = &mut grads[l];
            for i in 0..layer.out_dim() {
                let dp = d[i];
                g.bias[i] = dp;
                let grow = g.weights.row_mut(i);
                for (gw, &xk) in grow.iter_mut().zip(x) {
                    *gw = dp * xk;
                }
            }
            if l > 0 || want_input_grad {
                let mut dx = vec![T::zero(); layer.in_dim()];
                for i in 0..layer.out_dim() {
                    let dp = d[i];
                    for (dxk, &w) in dx.iter_mut().zip(layer.weights.row(i)) {
                        *dxk = *dxk + dp * w;
                    }
                }
                d = dx;
            } else {
                return (grads, None);
            }
        }
        (grads, Some(d))
    }

    /// Loss `sum_i (target_i - output_i)^2` and its exact gradients with
    /// respect to every parameter and the input.
    pub fn backward_sse(
        &self,
        input: &[T],
        target: &[T],
    ) -> Result<(T, Vec<LayerGrads<T>>, Vec<T>), NnError> {
        if target.len() != self.out_dim() {
            return Err(NnError::Shape {
                context: "backward target",
                expected: self.out_dim(),
                got: target.len(),
            });
        }
        let trace = self.forward_trace(input)?;
        let output = trace.output();
        let mut loss = T::zero();
        let mut d_out = Vec::with_capacity(output.len());
        let two = T::of(2.0);
        for (&z, &t) in output.iter().zip(target) {
            let diff = z - t;
            loss = loss + diff * diff;
            d_out.push(two * diff);
        }
        if !loss.is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let (grads, d_input) = self.backprop(&trace, &d_out, true);
        Ok((loss, grads, d_input.expect("input grad requested")))
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data.len() + l.bias.len())
            .sum()
    }

    /// Mutable access to the `i`-th parameter in (weights, bias) layer
    /// order; used by the finite-difference checker.
    pub fn param_mut(&mut self, mut i: usize) -> &mut T {
        for layer in &mut self.layers {
            if i < layer.weights.data.len() {
                return &mut layer.weights.data[i];
            }
            i -= layer.weights.data.len();
            if i < layer.bias.len() {
                return &mut layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Flattens per-layer gradients in the same order as
/// [`Network::param_mut`].
pub fn flatten_grads<T: Scalar>(grads: &[LayerGrads<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(&g.weights.data);
        out.extend_from_slice(&g.bias);
    }
    out
}
