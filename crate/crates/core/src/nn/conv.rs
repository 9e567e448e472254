use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::Rng;

use super::{gemm, Param, Real};

/// Valid (unpadded) 1-D convolution over channels-last input `(d, L, C_in)`.
///
/// Implemented as im2col followed by one matrix product; the weight is laid
/// out as `(K * C_in, C_out)` with the kernel offset as the major index.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
    pub kernel: usize,
    pub in_channels: usize,
}

pub struct ConvCache<T: Real> {
    cols: Array2<T>,
    input_len: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = kernel * in_channels;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: Param::uniform(fan_in, out_channels, bound, rng),
            b: Param::uniform(1, out_channels, bound, rng),
            kernel,
            in_channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len + 1 - self.kernel
    }

    pub fn forward(&self, x: ArrayView3<T>) -> (Array3<T>, ConvCache<T>) {
        let (d, l, c) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        assert!(l >= self.kernel, "conv input shorter than kernel");
        let lo = self.output_len(l);
        let width = self.kernel * c;
        let x = x.as_standard_layout();
        let mut cols = Array2::zeros((d * lo, width));
        for b in 0..d {
            let flat = x.index_axis(Axis(0), b);
            let flat = flat.as_slice().expect("standard layout");
            for t in 0..lo {
                cols.row_mut(b * lo + t)
                    .as_slice_mut()
                    .expect("contiguous row")
                    .copy_from_slice(&flat[t * c..t * c + width]);
            }
        }
        let mut y = Array2::zeros((d * lo, self.out_channels()));
        y += &self.b.value;
        gemm(cols.view(), self.w.value.view(), T::one(), &mut y);
        let y = y
            .into_shape_with_order((d, lo, self.out_channels()))
            .expect("conv output reshape");
        (y, ConvCache { cols, input_len: l })
    }

    /// Accumulates parameter gradients and returns `dL/dx` of shape `(d, L, C_in)`.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: ArrayView3<T>) -> Array3<T> {
        let (d, lo, co) = dy.dim();
        let dy = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((d * lo, co))
            .expect("conv grad reshape");
        gemm(cache.cols.t(), dy.view(), T::one(), &mut self.w.grad);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcols = dy.dot(&self.w.value.t());
        let c = self.in_channels;
        let mut dx = Array3::zeros((d, cache.input_len, c));
        for b in 0..d {
            for t in 0..lo {
                let row = dcols.row(b * lo + t);
                let row = row.into_shape_with_order((self.kernel, c)).expect("kernel view");
                let mut target = dx.slice_mut(s![b, t..t + self.kernel, ..]);
                target += &row;
            }
        }
        dx
    }
}
