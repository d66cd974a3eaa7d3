use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeakKind {
    Structural,
    Autocorrelation,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    /// Sub-bin position from a three-point parabolic fit.
    pub position: f64,
    pub height: f64,
    /// Full width at half maximum in bins, from linearly interpolated crossings.
    pub fwhm: f64,
    pub kind: PeakKind,
}

impl Peak {
    pub fn bin(&self) -> usize {
        self.position.round().max(0.0) as usize
    }
}

/// Peaks ordered by position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeakSet(pub Vec<Peak>);

impl PeakSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Peak> {
        self.0.iter()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.position).collect()
    }

    /// Tallest peak within `tol` bins of `bin`.
    pub fn near(&self, bin: f64, tol: f64) -> Option<&Peak> {
        self.0
            .iter()
            .filter(|p| (p.position - bin).abs() <= tol)
            .max_by(|a, b| a.height.total_cmp(&b.height))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakOptions {
    /// Detection floor relative to the global maximum, dB (amplitude, 20·log10).
    pub rel_threshold_db: f64,
    /// Minimum distance between reported peaks, bins.
    pub min_separation: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            rel_threshold_db: -30.0,
            min_separation: 3,
        }
    }
}

/// Local maxima above the relative floor, strongest first when resolving
/// separation conflicts.
pub fn analyze_peaks<T: Scalar>(ascan: &[T], opts: &PeakOptions) -> PeakSet {
    let y: Vec<f64> = ascan.iter().map(|v| v.as_f64()).collect();
    let global = y.iter().cloned().fold(0.0f64, f64::max);
    if y.len() < 3 || global <= 0.0 {
        return PeakSet::default();
    }
    let floor = global * 10f64.powf(opts.rel_threshold_db / 20.0);

    let mut candidates: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] >= floor)
        .collect();
    candidates.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for i in candidates {
        if kept.iter().all(|&k| k.abs_diff(i) >= opts.min_separation) {
            kept.push(i);
        }
    }
    kept.sort_unstable();

    PeakSet(
        kept.into_iter()
            .map(|i| {
                let (position, height) = parabolic_vertex(&y, i);
                Peak {
                    position,
                    height,
                    fwhm: fwhm_at(&y, i, height),
                    kind: PeakKind::Unknown,
                }
            })
            .collect(),
    )
}

fn parabolic_vertex(y: &[f64], i: usize) -> (f64, f64) {
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (i as f64, b);
    }
    let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (i as f64 + delta, b - 0.25 * (a - c) * delta)
}

fn fwhm_at(y: &[f64], i: usize, height: f64) -> f64 {
    let half = 0.5 * height;
    let mut left = 0.0;
    let mut j = i;
    while j > 0 {
        if y[j - 1] < half {
            left = (j - 1) as f64 + (half - y[j - 1]) / (y[j] - y[j - 1]);
            break;
        }
        j -= 1;
    }
    let mut right = (y.len() - 1) as f64;
    let mut j = i;
    while j + 1 < y.len() {
        if y[j + 1] < half {
            right = j as f64 + (y[j] - half) / (y[j] - y[j + 1]);
            break;
        }
        j += 1;
    }
    (right - left).max(f64::MIN_POSITIVE)
}

/// Tags peaks against known interface bins: a peak within `tol` of some
/// `|p_j - p_k|` is an autocorrelation peak, otherwise a peak within `tol`
/// of an interface is structural.
pub fn classify_peaks(peaks: &mut PeakSet, interfaces: &[usize], tol: f64) {
    let mut diffs = Vec::new();
    for (a, &pa) in interfaces.iter().enumerate() {
        for &pb in &interfaces[a + 1..] {
            diffs.push(pa.abs_diff(pb) as f64);
        }
    }
    for p in peaks.0.iter_mut() {
        p.kind = if diffs.iter().any(|d| (d - p.position).abs() <= tol) {
            PeakKind::Autocorrelation
        } else if interfaces.iter().any(|&q| (q as f64 - p.position).abs() <= tol) {
            PeakKind::Structural
        } else {
            PeakKind::Unknown
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_flat_inputs() {
        assert!(analyze_peaks(&[0.0f64; 64], &PeakOptions::default()).is_empty());
        assert!(analyze_peaks::<f64>(&[], &PeakOptions::default()).is_empty());
    }

    #[test]
    fn gaussian_widths() {
        let n = 512;
        let mut y = vec![0.0f64; n];
        for (c, s, a) in [(150.0, 4.0, 1.0), (340.0, 9.0, 0.6)] {
            for (i, v) in y.iter_mut().enumerate() {
                let x = (i as f64 - c) / s;
                *v += a * (-0.5 * x * x).exp();
            }
        }
        let peaks = analyze_peaks(&y, &PeakOptions::default());
        assert_eq!(peaks.len(), 2);
        for (p, s) in peaks.iter().zip([4.0, 9.0]) {
            let expected = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * s;
            assert!((p.fwhm - expected).abs() < 0.05 * expected, "{} vs {expected}", p.fwhm);
        }
        assert!((peaks.0[0].position - 150.0).abs() < 0.05);
    }

    #[test]
    fn threshold_and_separation() {
        let mut y = vec![0.0f64; 100];
        y[20] = 1.0;
        y[22] = 0.9; // too close to 20
        y[60] = 0.02; // below -30 dB
        y[80] = 0.05;
        let peaks = analyze_peaks(&y, &PeakOptions::default());
        let bins: Vec<usize> = peaks.iter().map(|p| p.bin()).collect();
        assert_eq!(bins, vec![20, 80]);
    }

    #[test]
    fn classification() {
        let mut y = vec![0.0f64; 700];
        for c in [260, 360, 620, 500] {
            y[c] = 1.0;
        }
        let mut peaks = analyze_peaks(&y, &PeakOptions::default());
        classify_peaks(&mut peaks, &[360, 620], 2.0);
        let kinds: Vec<PeakKind> = peaks.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            vec![
                PeakKind::Autocorrelation,
                PeakKind::Structural,
                PeakKind::Unknown,
                PeakKind::Structural
            ]
        );
    }
}
