//! Interference spectra of layered dispersive objects.
//!
//! The interferometer is modelled with a unit-amplitude reference arm and one
//! back-reflection per object interface. Interface `j` sits at A-scan bin `p_j`
//! and picks up the quadratic spectral phase accumulated by every region in
//! front of it:
//!
//! ```text
//! phi_j(k) = 2*pi*p_j*k / (2N) + B_j * omega_k^2 / 2,   B_j = sum_r g_r * L_r
//! I(k)     = envelope_k * |1 + sum_j r_j exp(i*phi_j(k))|^2
//! ```
//!
//! with `g_r` in fs^2/mm and `L_r` the region length in mm. Dropping the
//! `r_j*r_m` cross terms gives spectra free of object self-interference.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::Scalar;

/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792_458;

pub const DEFAULT_SAMPLES: usize = 1024;
pub const DEFAULT_CENTER_NM: f64 = 840.0;
pub const DEFAULT_SPAN_NM: f64 = 160.0;

/// Limits of the GVD range the profiles encode, fs^2/mm.
pub const GVD_LIMIT: f64 = 5000.0;

/// Uniformly sampled optical frequency axis with a Gaussian source envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid<T> {
    n_samples: usize,
    center_nm: T,
    span_nm: T,
    envelope: Vec<T>,
    omega: Vec<T>,
    axial_pixel_mm: T,
}

impl<T: Scalar> SpectralGrid<T> {
    /// Builds a grid of `n_samples` points over `span_nm` around `center_nm`.
    ///
    /// The envelope is a Gaussian whose FWHM is half the span, peaking at
    /// sample `n/2`. The angular-frequency detuning runs over `±Δω/2` with
    /// `Δω = 2πcΔλ/λ0²`, and one A-scan bin spans `λ0²/(4Δλ)`.
    pub fn new(n_samples: usize, center_nm: f64, span_nm: f64) -> Result<Self> {
        if n_samples < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 samples, got {n_samples}"
            )));
        }
        if !(span_nm.is_finite() && center_nm.is_finite()) || span_nm <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "span must be positive and finite, got {span_nm} nm"
            )));
        }
        if span_nm >= 2.0 * center_nm {
            return Err(Error::InvalidGrid(format!(
                "span {span_nm} nm reaches zero wavelength around {center_nm} nm"
            )));
        }

        let n = n_samples as f64;
        let mid = (n_samples / 2) as f64;
        let delta_omega = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS * span_nm
            / (center_nm * center_nm);
        let step = delta_omega / n;
        let half_width = n / 2.0;
        let four_ln2 = 4.0 * std::f64::consts::LN_2;

        let omega = (0..n_samples)
            .map(|k| T::of((k as f64 - mid) * step))
            .collect();
        let envelope = (0..n_samples)
            .map(|k| {
                let x = (k as f64 - mid) / half_width;
                T::of((-four_ln2 * x * x).exp())
            })
            .collect();
        // nm -> mm
        let axial_pixel_mm = T::of(center_nm * center_nm / (4.0 * span_nm) * 1e-6);

        Ok(Self {
            n_samples,
            center_nm: T::of(center_nm),
            span_nm: T::of(span_nm),
            envelope,
            omega,
            axial_pixel_mm,
        })
    }

    /// 1024 samples, 840 nm centre, 160 nm span.
    pub fn standard() -> Self {
        Self::new(DEFAULT_SAMPLES, DEFAULT_CENTER_NM, DEFAULT_SPAN_NM)
            .expect("default grid parameters are valid")
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn center_nm(&self) -> T {
        self.center_nm
    }

    pub fn span_nm(&self) -> T {
        self.span_nm
    }

    pub fn envelope(&self) -> &[T] {
        &self.envelope
    }

    /// Angular-frequency detuning from the centre, rad/fs.
    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn axial_pixel_mm(&self) -> T {
        self.axial_pixel_mm
    }

    pub fn axial_pixel_um(&self) -> T {
        self.axial_pixel_mm * T::of(1e3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interface<T> {
    /// A-scan bin of the reflection.
    pub position: usize,
    /// Field amplitude relative to the reference arm.
    pub reflectivity: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region<T> {
    /// Length in A-scan bins.
    pub extent: usize,
    /// GVD density, fs^2/mm.
    pub gvd: T,
}

/// Layered specimen: interfaces plus piecewise-constant GVD in front of the
/// last interface. The first region doubles as interferometer imbalance.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel<T> {
    interfaces: Vec<Interface<T>>,
    regions: Vec<Region<T>>,
    tail_gvd: T,
}

impl<T: Scalar> ObjectModel<T> {
    pub fn new(interfaces: Vec<Interface<T>>, regions: Vec<Region<T>>, tail_gvd: T) -> Result<Self> {
        let obj = Self {
            interfaces,
            regions,
            tail_gvd,
        };
        obj.check()?;
        Ok(obj)
    }

    /// Air everywhere, no reflections.
    pub fn empty() -> Self {
        Self {
            interfaces: Vec::new(),
            regions: Vec::new(),
            tail_gvd: T::zero(),
        }
    }

    /// One region per interface: region `j` spans from interface `j-1` (or
    /// zero delay) up to interface `j` and carries `gvds[j]`.
    pub fn layered(interfaces: Vec<Interface<T>>, gvds: &[T], tail_gvd: T) -> Result<Self> {
        if gvds.len() != interfaces.len() {
            return Err(Error::InvalidObject(format!(
                "{} interfaces but {} region GVDs",
                interfaces.len(),
                gvds.len()
            )));
        }
        let mut regions = Vec::with_capacity(gvds.len());
        let mut start = 0usize;
        for (iface, &gvd) in interfaces.iter().zip(gvds) {
            if iface.position < start {
                return Err(Error::InvalidObject(format!(
                    "interface positions must increase, got {} after {}",
                    iface.position, start
                )));
            }
            regions.push(Region {
                extent: iface.position - start,
                gvd,
            });
            start = iface.position;
        }
        Self::new(interfaces, regions, tail_gvd)
    }

    /// Two interfaces at `front` and `back` with the given front (imbalance)
    /// and layer GVDs; tail is air.
    pub fn single_layer(front: usize, back: usize, reflectivity: T, front_gvd: T, layer_gvd: T) -> Result<Self> {
        Self::layered(
            vec![
                Interface {
                    position: front,
                    reflectivity,
                },
                Interface {
                    position: back,
                    reflectivity,
                },
            ],
            &[front_gvd, layer_gvd],
            T::zero(),
        )
    }

    pub fn interfaces(&self) -> &[Interface<T>] {
        &self.interfaces
    }

    pub fn regions(&self) -> &[Region<T>] {
        &self.regions
    }

    pub fn tail_gvd(&self) -> T {
        self.tail_gvd
    }

    pub fn positions(&self) -> Vec<usize> {
        self.interfaces.iter().map(|i| i.position).collect()
    }

    /// Bin where the last region ends (zero for an empty object).
    pub fn depth(&self) -> usize {
        self.interfaces.last().map_or(0, |i| i.position)
    }

    /// GVD density at pixel `px`.
    pub fn gvd_at(&self, px: usize) -> T {
        let mut start = 0;
        for r in &self.regions {
            if px < start + r.extent {
                return r.gvd;
            }
            start += r.extent;
        }
        self.tail_gvd
    }

    /// `∫_0^px g(x) dx` in (fs^2/mm)·bins.
    pub fn accumulated_gvd(&self, px: usize) -> T {
        let mut acc = T::zero();
        let mut start = 0;
        for r in &self.regions {
            if px <= start {
                return acc;
            }
            let covered = (px - start).min(r.extent);
            acc += r.gvd * T::from_usize(covered).unwrap();
            start += r.extent;
        }
        if px > start {
            acc += self.tail_gvd * T::from_usize(px - start).unwrap();
        }
        acc
    }

    fn check(&self) -> Result<()> {
        let limit = T::of(GVD_LIMIT);
        let mut prev = 0usize;
        for (j, iface) in self.interfaces.iter().enumerate() {
            if iface.position == 0 || (j > 0 && iface.position <= prev) {
                return Err(Error::InvalidObject(format!(
                    "interface {j} at bin {} is not strictly after bin {prev}",
                    iface.position
                )));
            }
            let r = iface.reflectivity;
            if !(r > T::zero() && r <= T::one()) {
                return Err(Error::InvalidObject(format!(
                    "interface {j} reflectivity {r} outside (0, 1]"
                )));
            }
            prev = iface.position;
        }
        let covered: usize = self.regions.iter().map(|r| r.extent).sum();
        if covered != self.depth() {
            return Err(Error::InvalidObject(format!(
                "regions cover {covered} bins but the last interface is at {}",
                self.depth()
            )));
        }
        for g in self.regions.iter().map(|r| r.gvd).chain(Some(self.tail_gvd)) {
            if !(g.is_finite() && g.abs() <= limit) {
                return Err(Error::InvalidObject(format!(
                    "GVD {g} fs^2/mm outside [-{GVD_LIMIT}, {GVD_LIMIT}]"
                )));
            }
        }
        Ok(())
    }

    /// Checks the object fits on `grid`.
    pub fn validate_for(&self, grid: &SpectralGrid<T>) -> Result<()> {
        if let Some(last) = self.interfaces.last() {
            if last.position >= grid.n_samples() {
                return Err(Error::InvalidObject(format!(
                    "interface at bin {} does not fit a {}-bin A-scan",
                    last.position,
                    grid.n_samples()
                )));
            }
        }
        Ok(())
    }
}

/// Real intensity samples on a spectral grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    values: Vec<T>,
    grid: Arc<SpectralGrid<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(values: Vec<T>, grid: Arc<SpectralGrid<T>>) -> Result<Self> {
        if values.len() != grid.n_samples() {
            return Err(Error::shape(
                format!("{} samples", grid.n_samples()),
                format!("{} samples", values.len()),
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at {k}")));
        }
        Ok(Self { values, grid })
    }

    /// Resamples `samples` of any length onto `grid` by linear interpolation.
    pub fn resampled(samples: &[T], grid: Arc<SpectralGrid<T>>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "cannot resample {} samples",
                samples.len()
            )));
        }
        let values = resample_linear(samples, grid.n_samples());
        Self::new(values, grid)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grid(&self) -> &Arc<SpectralGrid<T>> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spectrum with the source background removed: `values - a*envelope`,
    /// `a` being the least-squares amplitude of the envelope in the data.
    pub fn fringe_component(&self) -> Vec<T> {
        let env = self.grid.envelope();
        let num: T = self.values.iter().zip(env).map(|(&v, &e)| v * e).sum();
        let den: T = env.iter().map(|&e| e * e).sum();
        let a = num / den;
        self.values.iter().zip(env).map(|(&v, &e)| v - a * e).collect()
    }
}

/// Linear resampling of `x` onto `n` uniformly spaced points spanning the same range.
pub fn resample_linear<T: Scalar>(x: &[T], n: usize) -> Vec<T> {
    let m = x.len();
    if m == n {
        return x.to_vec();
    }
    if n == 1 {
        return vec![x[0]];
    }
    let scale = (m - 1) as f64 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = (pos.floor() as usize).min(m - 1);
            let hi = (lo + 1).min(m - 1);
            let w = T::of(pos - lo as f64);
            x[lo] * (T::one() - w) + x[hi] * w
        })
        .collect()
}

/// Interference spectrum of `object` on `grid`. With `include_autocorr`
/// false the object self-interference terms are left out.
pub fn synthesize_spectrum<T: Scalar>(
    object: &ObjectModel<T>,
    grid: &Arc<SpectralGrid<T>>,
    include_autocorr: bool,
) -> Result<Spectrum<T>> {
    object.validate_for(grid)?;
    let n = grid.n_samples();
    let two = T::of(2.0);
    let half = T::of(0.5);
    let bin_phase = T::of(2.0 * std::f64::consts::PI / (2 * n) as f64);

    let reflect: Vec<T> = object.interfaces().iter().map(|i| i.reflectivity).collect();
    let quad: Vec<T> = object
        .interfaces()
        .iter()
        .map(|i| object.accumulated_gvd(i.position) * grid.axial_pixel_mm())
        .collect();
    let dc = T::one() + reflect.iter().map(|&r| r * r).sum::<T>();

    let mut phases = vec![T::zero(); reflect.len()];
    let values = (0..n)
        .map(|k| {
            let w = grid.omega()[k];
            let kk = T::from_usize(k).unwrap();
            for (j, iface) in object.interfaces().iter().enumerate() {
                let p = T::from_usize(iface.position).unwrap();
                phases[j] = bin_phase * p * kk + half * quad[j] * w * w;
            }
            let mut s = dc;
            for j in 0..reflect.len() {
                s += two * reflect[j] * phases[j].cos();
            }
            if include_autocorr {
                for j in 0..reflect.len() {
                    for m in (j + 1)..reflect.len() {
                        s += two * reflect[j] * reflect[m] * (phases[j] - phases[m]).cos();
                    }
                }
            }
            grid.envelope()[k] * s
        })
        .collect();
    Spectrum::new(values, grid.clone())
}

/// Additive white noise calibrated against the spectrum's peak fringe amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseSpec {
    Noiseless,
    Gaussian { snr_db: f64, seed: u64 },
}

impl NoiseSpec {
    pub fn gaussian(snr_db: f64, seed: u64) -> Result<Self> {
        if !(snr_db.is_finite() && snr_db > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SNR must be a positive number of dB, got {snr_db}"
            )));
        }
        Ok(NoiseSpec::Gaussian { snr_db, seed })
    }
}

fn peak_fringe<T: Scalar>(spectrum: &Spectrum<T>) -> f64 {
    spectrum
        .fringe_component()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
}

/// Adds Gaussian noise whose standard deviation `σ` satisfies
/// `20·log10(max|fringe| / σ) = snr_db`.
///
/// The drawn sequence is shifted and scaled to zero mean and unit standard
/// deviation before applying `σ`, so [`measure_snr`] returns the requested
/// value up to rounding.
pub fn add_noise<T: Scalar>(spectrum: &Spectrum<T>, spec: &NoiseSpec) -> Spectrum<T> {
    let (snr_db, seed) = match *spec {
        NoiseSpec::Noiseless => return spectrum.clone(),
        NoiseSpec::Gaussian { snr_db, seed } => (snr_db, seed),
    };
    let sigma = peak_fringe(spectrum) / 10f64.powf(snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = (0..spectrum.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let (mean, sd) = mean_std(&z);
    let scale = if sd > 0.0 { sigma / sd } else { 0.0 };
    for v in z.iter_mut() {
        *v = (*v - mean) * scale;
    }
    let values = spectrum
        .values()
        .iter()
        .zip(&z)
        .map(|(&v, &e)| v + T::of(e))
        .collect();
    Spectrum {
        values,
        grid: spectrum.grid.clone(),
    }
}

/// SNR of `noisy` against its noise-free original, in dB:
/// `20·log10(max|clean fringe| / std(noisy - clean))`.
/// Returns `f64::INFINITY` when the residual is identically zero.
pub fn measure_snr<T: Scalar>(noisy: &Spectrum<T>, clean: &Spectrum<T>) -> Result<f64> {
    if noisy.len() != clean.len() {
        return Err(Error::shape(
            format!("{} samples", clean.len()),
            format!("{} samples", noisy.len()),
        ));
    }
    let residual: Vec<f64> = noisy
        .values()
        .iter()
        .zip(clean.values())
        .map(|(&a, &b)| (a - b).as_f64())
        .collect();
    let (_, sd) = mean_std(&residual);
    if sd == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak_fringe(clean) / sd).log10())
}

/// Mean and population standard deviation.
fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<SpectralGrid<f64>> {
        Arc::new(SpectralGrid::standard())
    }

    #[test]
    fn axial_pixel_of_default_grid() {
        // (840e-9)^2 / (4 * 160e-9) = 1.1025e-6 m
        let oracle = 840e-9f64.powi(2) / (4.0 * 160e-9) * 1e6;
        let g = grid();
        assert!((g.axial_pixel_um() - oracle).abs() < 1e-12);
        assert!((g.axial_pixel_um() - 1.10).abs() < 0.01);
    }

    #[test]
    fn envelope_peaks_at_center_sample() {
        let g = grid();
        let env = g.envelope();
        let argmax = (0..env.len())
            .max_by(|&a, &b| env[a].partial_cmp(&env[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 512);
        assert!(env.iter().all(|&e| (0.0..=1.0).contains(&e)));
        // unimodal
        assert!(env[..=512].windows(2).all(|w| w[0] <= w[1]));
        assert!(env[512..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn omega_spans_the_bandwidth() {
        let g = grid();
        let w = g.omega();
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        let dw = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS * 160.0 / (840.0 * 840.0);
        let step = w[1] - w[0];
        assert!((w[0] + dw / 2.0).abs() < 1e-12);
        assert!((w[w.len() - 1] + step - dw / 2.0).abs() < 1e-12);
        assert!((w[0] + w[w.len() - 1]).abs() <= step + 1e-15);
    }

    #[test]
    fn tiny_grid_is_well_formed() {
        let g = SpectralGrid::<f64>::new(4, 840.0, 160.0).unwrap();
        assert_eq!(g.omega().len(), 4);
        assert!(g.omega().windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn rejects_non_physical_grids() {
        assert!(matches!(
            SpectralGrid::<f64>::new(1024, 100.0, 200.0),
            Err(Error::InvalidGrid(_))
        ));
        assert!(SpectralGrid::<f64>::new(3, 840.0, 160.0).is_err());
        assert!(SpectralGrid::<f64>::new(1024, 840.0, 0.0).is_err());
    }

    #[test]
    fn object_validation() {
        let iface = |p| Interface {
            position: p,
            reflectivity: 0.1,
        };
        assert!(ObjectModel::<f64>::layered(vec![iface(10), iface(5)], &[0.0, 0.0], 0.0).is_err());
        assert!(ObjectModel::<f64>::layered(vec![iface(10)], &[6000.0], 0.0).is_err());
        let bad_cover = ObjectModel::new(
            vec![iface(10)],
            vec![Region {
                extent: 9,
                gvd: 0.0,
            }],
            0.0,
        );
        assert!(bad_cover.is_err());
        let obj = ObjectModel::<f64>::single_layer(200, 550, 0.1, 1000.0, 2000.0).unwrap();
        assert_eq!(obj.gvd_at(199), 1000.0);
        assert_eq!(obj.gvd_at(200), 2000.0);
        assert_eq!(obj.gvd_at(550), 0.0);
        assert_eq!(obj.accumulated_gvd(550), 200.0 * 1000.0 + 350.0 * 2000.0);
        assert!(obj.validate_for(&SpectralGrid::new(512, 840.0, 160.0).unwrap()).is_err());
    }

    #[test]
    fn spectrum_is_nonnegative_and_finite() {
        let g = grid();
        let obj = ObjectModel::single_layer(360, 620, 0.2, 0.0, 2500.0).unwrap();
        for ac in [false, true] {
            let s = synthesize_spectrum(&obj, &g, ac).unwrap();
            assert_eq!(s.len(), 1024);
            assert!(s.values().iter().all(|v| v.is_finite() && *v >= -1e-12));
        }
    }

    #[test]
    fn noiseless_is_identity_and_seeds_are_deterministic() {
        let g = grid();
        let obj = ObjectModel::single_layer(200, 550, 0.1, 1000.0, 2000.0).unwrap();
        let s = synthesize_spectrum(&obj, &g, true).unwrap();
        assert_eq!(add_noise(&s, &NoiseSpec::Noiseless), s);
        let spec = NoiseSpec::gaussian(70.0, 3).unwrap();
        assert_eq!(add_noise(&s, &spec), add_noise(&s, &spec));
        assert_eq!(measure_snr(&s, &s).unwrap(), f64::INFINITY);
        assert!(NoiseSpec::gaussian(0.0, 1).is_err());
    }

    #[test]
    fn snr_of_known_sigma() {
        let g = grid();
        let obj = ObjectModel::single_layer(300, 500, 0.15, 0.0, 0.0).unwrap();
        let clean = synthesize_spectrum(&obj, &g, false).unwrap();
        let peak = clean
            .fringe_component()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let sigma = 1e-4;
        // deterministic unit-variance sequence: alternating +-1
        let noisy_vals: Vec<f64> = clean
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| v + if k % 2 == 0 { sigma } else { -sigma })
            .collect();
        let noisy = Spectrum::new(noisy_vals, g.clone()).unwrap();
        let expected = 20.0 * (peak / sigma).log10();
        assert!((measure_snr(&noisy, &clean).unwrap() - expected).abs() < 0.5);
    }

    #[test]
    fn resampling_2048_to_1024_keeps_endpoints() {
        let x: Vec<f64> = (0..2048).map(|i| i as f64).collect();
        let y = resample_linear(&x, 1024);
        assert_eq!(y.len(), 1024);
        assert_eq!(y[0], 0.0);
        assert!((y[1023] - 2047.0).abs() < 1e-9);
        assert!(y.windows(2).all(|w| w[1] > w[0]));
    }
}
