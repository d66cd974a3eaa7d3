//! Intensity-correlation processing: fragment autocorrelation, FFT stacks
//! and the A-scans derived from a spectrum or a stack.

use std::ops::Range;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::Transform;
use crate::optics::Spectrum;
use crate::Scalar;

pub const DEFAULT_FRAGMENTS: usize = 50;

/// Full linear autocorrelation, `out[m] = Σ_n x[n]·x[n+m-(f-1)]`, length `2f-1`.
///
/// Computed through a zero-padded transform of length at least `2f-1`, so
/// no circular wrap-around enters the result.
pub fn autocorrelate<T: Scalar>(fragment: &[T]) -> Result<Vec<T>> {
    let f = fragment.len();
    if f == 0 {
        return Err(Error::InvalidArgument(
            "cannot autocorrelate an empty fragment".into(),
        ));
    }
    let out_len = 2 * f - 1;
    let t = Transform::<T>::new(out_len.next_power_of_two());
    Ok(autocorrelate_with(&t, fragment))
}

fn autocorrelate_with<T: Scalar>(t: &Transform<T>, fragment: &[T]) -> Vec<T> {
    let f = fragment.len();
    let l = t.len();
    let mut buf = t.forward_real(fragment);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), T::zero());
    }
    t.inverse(&mut buf);
    // circular lag tau sits at index tau (tau >= 0) or l + tau (tau < 0)
    (0..2 * f - 1)
        .map(|m| {
            let idx = if m + 1 >= f { m + 1 - f } else { l + m + 1 - f };
            buf[idx].re
        })
        .collect()
}

/// Contiguous fragment boundaries: `n / fragments` samples each, the first
/// `n % fragments` fragments one sample longer.
pub fn fragment_bounds(n: usize, fragments: usize) -> Result<Vec<Range<usize>>> {
    if fragments == 0 || fragments > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} samples into {fragments} fragments"
        )));
    }
    let base = n / fragments;
    let extra = n % fragments;
    let mut start = 0;
    Ok((0..fragments)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Row-major matrix of transform magnitudes, one row per spectral fragment.
#[derive(Clone, Debug, PartialEq)]
pub struct FftStack<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> FftStack<T> {
    pub fn from_values(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(
                format!("{rows}x{cols} = {} values", rows * cols),
                format!("{} values", values.len()),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::InvalidArgument(
                "stack values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn cast<U: Scalar>(&self) -> FftStack<U> {
        FftStack {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Depth profile magnitudes, aligned with stack columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AScan<T>(pub Vec<T>);

impl<T: Scalar> AScan<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Splits the spectrum into `fragments` contiguous pieces, autocorrelates
/// each, zero-pads it to twice the spectrum length and keeps the magnitude
/// of the first half of its transform as one stack row.
pub fn build_stack<T: Scalar>(spectrum: &Spectrum<T>, fragments: usize) -> Result<FftStack<T>> {
    build_stack_from_samples(spectrum.values(), fragments)
}

pub(crate) fn build_stack_from_samples<T: Scalar>(samples: &[T], fragments: usize) -> Result<FftStack<T>> {
    let n = samples.len();
    let bounds = fragment_bounds(n, fragments)?;
    let longest = bounds.iter().map(|r| r.len()).max().unwrap_or(1);
    let corr = Transform::<T>::new((2 * longest - 1).next_power_of_two());
    let wide = Transform::<T>::new(2 * n);

    let mut values = Vec::with_capacity(fragments * n);
    for r in bounds {
        let ac = autocorrelate_with(&corr, &samples[r]);
        let spec = wide.forward_real(&ac);
        values.extend(spec[..n].iter().map(|c| c.norm()));
    }
    Ok(FftStack {
        rows: fragments,
        cols: n,
        values,
    })
}

/// Conventional A-scan: background-free spectrum, zero-padded to `2N`,
/// magnitude of the first `N` bins.
pub fn standard_ascan<T: Scalar>(spectrum: &Spectrum<T>) -> AScan<T> {
    let fringes = spectrum.fringe_component();
    let n = fringes.len();
    let t = Transform::<T>::new(2 * n);
    let spec = t.forward_real(&fringes);
    AScan(spec[..n].iter().map(|c| c.norm()).collect())
}

/// Column-wise mean of the stack.
pub fn ica_ascan<T: Scalar>(stack: &FftStack<T>) -> AScan<T> {
    let scale = T::one() / T::from_usize(stack.rows().max(1)).unwrap();
    let mut acc = vec![T::zero(); stack.cols()];
    for r in 0..stack.rows() {
        for (a, &v) in acc.iter_mut().zip(stack.row(r)) {
            *a += v;
        }
    }
    AScan(acc.into_iter().map(|v| v * scale).collect())
}
