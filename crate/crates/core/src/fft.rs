//! Thin wrapper over `rustfft` for the zero-padded real transforms used throughout the crate.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::Scalar;

/// Forward and inverse plans of one transform length.
pub struct Transform<T: Scalar> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Transform<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Transform of `x` zero-padded (or truncated) to the plan length.
    pub fn forward_real(&self, x: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x
            .iter()
            .take(self.len)
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        buf.resize(self.len, Complex::new(T::zero(), T::zero()));
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform scaled by `1/len`, so that it undoes [`Self::forward_real`].
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
        let scale = T::one() / T::from_usize(self.len).unwrap();
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }
}
