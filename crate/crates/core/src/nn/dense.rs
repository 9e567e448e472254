use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{gemm, Param, Real};

/// Affine layer `y = x W + b` with `W: (in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Real> Dense<T> {
    /// Uniform(±1/√in) init for both weight and bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: Param::uniform(inputs, outputs, bound, rng),
            b: Param::uniform(1, outputs, bound, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut y = Array2::zeros((x.nrows(), self.outputs()));
        y += &self.b.value;
        gemm(x, self.w.value.view(), T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: ArrayView2<T>, dy: ArrayView2<T>) -> Array2<T> {
        self.accumulate(x, dy);
        dy.dot(&self.w.value.t())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate(&mut self, x: ArrayView2<T>, dy: ArrayView2<T>) {
        gemm(x.t(), dy, T::one(), &mut self.w.grad);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}
