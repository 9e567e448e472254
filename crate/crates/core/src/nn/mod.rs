//! Minimal dense neural-network toolkit with hand-written backward passes.
//!
//! Layers keep their parameters and accumulated gradients; the caller owns
//! the activation caches produced by `forward` and hands them back to
//! `backward`. Everything is generic over [`Real`] so the same code trains in
//! `f32` and is gradient-checked in `f64`.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod gru;
pub mod loss;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array2, ArrayBase, ArrayView2, DataMut, Ix2, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

pub use adam::Adam;
pub use conv::Conv1d;
pub use dense::Dense;
pub use gru::Gru;

pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `1 / (1 + e^-x)`; saturates cleanly since `e^-x` overflows to infinity.
    fn sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp())
    }

    /// `tanh` through a single `exp`, several times faster than libm's `tanh`.
    fn tanh_fast(self) -> Self {
        let two = Self::one() + Self::one();
        Self::one() - two / ((two * self).exp() + Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A trainable 2-D tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Real> {
    pub value: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Array2<T>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        Self::new(Array2::from_shape_simple_fn((rows, cols), || {
            T::of(rng.random_range(-bound..=bound))
        }))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param::new(self.value.mapv(|v| U::of(v.f64())))
    }
}

/// Implemented by every model: a fixed, named enumeration of its parameters.
///
/// The order defines optimizer state layout, checkpoint layout and hashing.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self
            .params()
            .iter()
            .map(|(_, p)| p.grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if norm > max_norm && norm.is_finite() {
            let s = T::of(max_norm / norm);
            for (_, p) in self.params_mut() {
                p.grad.mapv_inplace(|g| g * s);
            }
        }
        norm
    }
}

/// `c = a · b + beta · c`.
pub fn gemm<T: Real, S: DataMut<Elem = T>>(a: ArrayView2<T>, b: ArrayView2<T>, beta: T, c: &mut ArrayBase<S, Ix2>) {
    ndarray::linalg::general_mat_mul(T::one(), &a, &b, beta, c);
}

pub fn relu_inplace<T: Real>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward<T: Real>(out: &Array2<T>, grad: &mut Array2<T>) {
    ndarray::Zip::from(grad).and(out).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}
