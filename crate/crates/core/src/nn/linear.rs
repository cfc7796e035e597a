use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};

use super::params::{join, Parameters};
use crate::rng::Rng;

/// Affine map `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Normal init with standard deviation `gain / sqrt(in)`; zero bias.
    pub fn new(input: usize, output: usize, gain: f64, rng: &mut Rng) -> Self {
        let std = gain / (input as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid std");
        Self {
            weight: Array2::from_shape_fn((output, input), |_| dist.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn backward_params(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        f(
            join(prefix, "weight"),
            self.weight.shape(),
            self.weight.as_slice().expect("contiguous"),
        );
        f(
            join(prefix, "bias"),
            self.bias.shape(),
            self.bias.as_slice().expect("contiguous"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weight.as_slice_mut().expect("contiguous"));
        f(self.bias.as_slice_mut().expect("contiguous"));
    }
}
