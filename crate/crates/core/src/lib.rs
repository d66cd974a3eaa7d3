//! Simulation and analysis toolkit for intensity-correlation (quantum-mimic)
//! OCT dispersion profiling.
//!
//! The pipeline runs from layered objects to interference spectra
//! ([`optics`]), through fragment-autocorrelation FFT stacks ([`ica`]), to
//! labelled datasets ([`dataset`]) and a convolutional regressor that maps
//! stacks onto depth-resolved GVD profiles ([`nn`]). [`analytics`] holds the
//! closed-form GVD levels produced by autocorrelation peaks, peak analysis
//! and dispersion maps.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the tools.

pub mod analytics;
pub mod cli;
pub mod dataset;
pub mod error;
mod fft;
pub mod ica;
pub mod io;
pub mod nn;
pub mod optics;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SpectralGrid64 = optics::SpectralGrid<f64>;
pub type ObjectModel64 = optics::ObjectModel<f64>;
pub type Spectrum64 = optics::Spectrum<f64>;
pub type FftStack64 = ica::FftStack<f64>;
pub type FftStack32 = ica::FftStack<f32>;
pub type AScan64 = ica::AScan<f64>;
pub type Profile64 = analytics::DispersionProfile<f64>;
pub type Profile32 = analytics::DispersionProfile<f32>;
/// Precision used for training and prediction.
pub type Regressor32 = nn::RegressorModel<f32>;
/// Precision used for gradient checks.
pub type Regressor64 = nn::RegressorModel<f64>;
