use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_dim, Matrix, NnError};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => math::logistic(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    math::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Fully connected layer: `a = act(W x + b)` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn from_parts(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self, NnError> {
        check_dim(weights.rows(), bias.len())?;
        Ok(Dense { weights, bias, activation })
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense { weights: Matrix::zeros(output, input), bias: vec![0.0; output], activation }
    }

    /// Uniform Glorot weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let a = glorot_bound(input, output);
        let mut layer = Dense::zeros(input, output, activation);
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-a..a);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Writes pre-activations into `z` and activations into `a`.
    pub(crate) fn forward_into(&self, x: &[f64], z: &mut [f64], a: &mut [f64]) {
        let cols = self.weights.cols();
        let w = self.weights.as_slice();
        for o in 0..self.output_dim() {
            let row = &w[o * cols..(o + 1) * cols];
            let mut s = self.bias[o];
            for (wi, xi) in row.iter().zip(x) {
                s += wi * xi;
            }
            z[o] = s;
            a[o] = self.activation.apply(s);
        }
    }

    /// Given dL/dz (pre-activation), accumulates parameter gradients and
    /// writes dL/dx.
    pub(crate) fn backward_delta(&self, x: &[f64], d_z: &[f64], grads: &mut DenseGrads, d_x: &mut [f64]) {
        let cols = self.weights.cols();
        let w = self.weights.as_slice();
        d_x.iter_mut().for_each(|v| *v = 0.0);
        for (o, &delta) in d_z.iter().enumerate() {
            if delta == 0.0 {
                continue;
            }
            grads.bias[o] += delta;
            let g_row = &mut grads.weights[o * cols..(o + 1) * cols];
            for (g, xi) in g_row.iter_mut().zip(x) {
                *g += delta * xi;
            }
            let w_row = &w[o * cols..(o + 1) * cols];
            for (dx, wi) in d_x.iter_mut().zip(w_row) {
                *dx += delta * wi;
            }
        }
    }

    /// Given dL/da, accumulates parameter gradients and writes dL/dx.
    pub(crate) fn backward_into(
        &self,
        x: &[f64],
        z: &[f64],
        a: &[f64],
        d_a: &[f64],
        grads: &mut DenseGrads,
        d_x: &mut [f64],
    ) {
        let d_z: Vec<f64> =
            d_a.iter().zip(z.iter().zip(a)).map(|(d, (&zi, &ai))| d * self.activation.derivative(zi, ai)).collect();
        self.backward_delta(x, &d_z, grads, d_x);
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads { weights: vec![0.0; self.weights.as_slice().len()], bias: vec![0.0; self.bias.len()] }
    }
}

impl DenseGrads {
    pub fn clear(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.bias.iter_mut().for_each(|g| *g = 0.0);
    }
}
