//! GVD levels a regressor trained on self-interference-free data reports for
//! a single layer whose spectrum does contain the self-interference term.
//!
//! The autocorrelation peak at `p_ac = p2 - p1` is read as an extra
//! interface. Each peak `x` carries accumulated dispersion `Σ g·L` up to
//! `x`; requiring the three-interface reading to reproduce the quadratic
//! phase of all three peaks fixes the GVD of the spurious segment to
//!
//! ```text
//! beta_2 = (L_front*beta_front - L_obj*beta_obj) / (L_front - L_obj)
//! ```
//!
//! and, with the spurious peak inside the layer, the segment behind it
//! to `beta_front`.

use super::profile::{encode_gvd, DispersionProfile};
use crate::error::{Error, Result};
use crate::optics::ObjectModel;
use crate::Scalar;

/// Distances in A-scan bins, GVD in fs^2/mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentGeometry<T> {
    /// Zero delay to the first interface.
    pub l_front: T,
    /// Layer thickness.
    pub l_obj: T,
    pub beta_front: T,
    pub beta_obj: T,
}

impl<T: Scalar> SegmentGeometry<T> {
    pub fn new(l_front: T, l_obj: T, beta_front: T, beta_obj: T) -> Self {
        Self {
            l_front,
            l_obj,
            beta_front,
            beta_obj,
        }
    }
}

/// GVD of the segment between the autocorrelation peak and the nearest
/// structural peak.
pub fn spurious_segment_gvd<T: Scalar>(g: &SegmentGeometry<T>) -> Result<T> {
    let denom = g.l_front - g.l_obj;
    if denom == T::zero() {
        return Err(Error::DegenerateGeometry(format!(
            "autocorrelation peak coincides with the first interface (L_front = L_obj = {})",
            g.l_front
        )));
    }
    Ok((g.l_front * g.beta_front - g.l_obj * g.beta_obj) / denom)
}

/// GVD between the autocorrelation peak and the back interface when the
/// peak falls inside the layer.
pub fn inner_segment_gvd<T: Scalar>(g: &SegmentGeometry<T>) -> T {
    g.beta_front
}

/// Layer GVD from a measured segment level: solves the segment relation for
/// `beta_obj`.
pub fn estimate_layer_gvd<T: Scalar>(l_front: T, l_obj: T, beta_front: T, beta_seg2: T) -> Result<T> {
    if l_obj == T::zero() {
        return Err(Error::DegenerateGeometry("layer thickness is zero".into()));
    }
    Ok((l_front * beta_front - (l_front - l_obj) * beta_seg2) / l_obj)
}

/// Where the autocorrelation peak lands relative to the layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AutocorrPlacement {
    /// In front of the first interface.
    Front,
    /// Between the two interfaces.
    Inside,
}

/// Half-open pixel interval with a GVD level in fs^2/mm (not clamped).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T> {
    pub start: usize,
    pub end: usize,
    pub gvd: T,
}

/// Segment levels of the three-interface reading of a single layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveProfile<T> {
    pub placement: AutocorrPlacement,
    pub autocorr_position: usize,
    pub segments: Vec<Segment<T>>,
    pub tail_gvd: T,
}

impl<T: Scalar> EffectiveProfile<T> {
    /// `Σ g·L` over `[0, px)`, in (fs^2/mm)·bins.
    pub fn accumulated(&self, px: usize) -> T {
        let mut acc = T::zero();
        let mut end = 0;
        for s in &self.segments {
            if px <= s.start {
                return acc;
            }
            acc += s.gvd * T::from_usize(px.min(s.end) - s.start).unwrap();
            end = s.end;
        }
        if px > end {
            acc += self.tail_gvd * T::from_usize(px - end).unwrap();
        }
        acc
    }

    /// Encoded profile over `len` pixels; levels beyond `±5000` clamp.
    pub fn to_profile(&self, len: usize) -> DispersionProfile<T> {
        let mut gvd = vec![self.tail_gvd; len];
        for s in &self.segments {
            for v in gvd.iter_mut().take(s.end.min(len)).skip(s.start) {
                *v = s.gvd;
            }
        }
        DispersionProfile::from_encoded(gvd.into_iter().map(encode_gvd).collect())
    }
}

/// Effective segments of a two-interface object.
pub fn effective_segments<T: Scalar>(object: &ObjectModel<T>) -> Result<EffectiveProfile<T>> {
    let ifaces = object.interfaces();
    if ifaces.len() != 2 {
        return Err(Error::InvalidObject(format!(
            "effective profiles need exactly 2 interfaces, got {}",
            ifaces.len()
        )));
    }
    let (p1, p2) = (ifaces[0].position, ifaces[1].position);
    let p_ac = p2 - p1;
    if p_ac == p1 {
        return Err(Error::DegenerateGeometry(format!(
            "autocorrelation peak at {p_ac} collides with interface at {p1}"
        )));
    }
    let beta_front = object.gvd_at(0);
    let beta_obj = object.gvd_at(p1);
    let n = |x: usize| T::from_usize(x).unwrap();
    let geom = SegmentGeometry::new(n(p1), n(p_ac), beta_front, beta_obj);
    let beta_2 = spurious_segment_gvd(&geom)?;

    let (placement, segments) = if p_ac < p1 {
        (
            AutocorrPlacement::Front,
            vec![
                Segment {
                    start: 0,
                    end: p_ac,
                    gvd: beta_obj,
                },
                Segment {
                    start: p_ac,
                    end: p1,
                    gvd: beta_2,
                },
                Segment {
                    start: p1,
                    end: p2,
                    gvd: beta_obj,
                },
            ],
        )
    } else {
        (
            AutocorrPlacement::Inside,
            vec![
                Segment {
                    start: 0,
                    end: p1,
                    gvd: beta_front,
                },
                Segment {
                    start: p1,
                    end: p_ac,
                    gvd: beta_2,
                },
                Segment {
                    start: p_ac,
                    end: p2,
                    gvd: inner_segment_gvd(&geom),
                },
            ],
        )
    };
    Ok(EffectiveProfile {
        placement,
        autocorr_position: p_ac,
        segments,
        tail_gvd: object.tail_gvd(),
    })
}

/// Encoded effective profile of a two-interface object over `len` pixels.
pub fn effective_profile_two_interface<T: Scalar>(
    object: &ObjectModel<T>,
    len: usize,
) -> Result<DispersionProfile<T>> {
    Ok(effective_segments(object)?.to_profile(len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::profile::ground_truth_profile;

    /// Bisection on the phase mismatch at the first interface when the
    /// autocorrelation peak (at `lo`) sits in front of it.
    fn spurious_oracle(lf: f64, lo: f64, bf: f64, bo: f64) -> f64 {
        let mismatch = |x: f64| bo * lo + x * (lf - lo) - bf * lf;
        let (mut a, mut b) = (-1e7, 1e7);
        let increasing = mismatch(b) > mismatch(a);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (mismatch(mid) > 0.0) == increasing {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn front_placement_level() {
        let g = SegmentGeometry::new(360.0, 260.0, 0.0, 2500.0);
        let v = spurious_segment_gvd(&g).unwrap();
        assert!((v - spurious_oracle(360.0, 260.0, 0.0, 2500.0)).abs() < 1e-9);
        assert!((v + 6500.0).abs() < 1e-9);
    }

    #[test]
    fn bk7_forward_level() {
        let v = spurious_segment_gvd(&SegmentGeometry::new(220.0f64, 700.0, 2000.0, 46.0)).unwrap();
        assert!((v + 850.0).abs() < 1.0, "{v}");
    }

    #[test]
    fn equal_levels_are_a_fixed_point() {
        for beta in [-3000.0f64, 0.0, 17.5, 4999.0] {
            let v = spurious_segment_gvd(&SegmentGeometry::new(123.0, 45.0, beta, beta)).unwrap();
            assert!((v - beta).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_geometry() {
        assert!(matches!(
            spurious_segment_gvd(&SegmentGeometry::new(100.0, 100.0, 0.0, 1.0)),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(estimate_layer_gvd(100.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn back_segment_keeps_front_level() {
        assert_eq!(inner_segment_gvd(&SegmentGeometry::new(200.0, 350.0, 1000.0, 2000.0)), 1000.0);
        assert_eq!(inner_segment_gvd(&SegmentGeometry::new(200.0, 350.0, 0.0, 2000.0)), 0.0);
        assert_eq!(inner_segment_gvd(&SegmentGeometry::new(1.0, 2.0, -42.5, 7.0)), -42.5);
    }

    #[test]
    fn glass_estimates() {
        let bk7 = estimate_layer_gvd(220.0f64, 700.0, 2000.0, -850.0).unwrap();
        assert!((bk7 - 45.71).abs() < 0.01, "{bk7}");
        let sapphire = estimate_layer_gvd(70.0f64, 260.0, 3700.0, -1300.0).unwrap();
        assert!((sapphire - 46.15).abs() < 0.01, "{sapphire}");
    }

    #[test]
    fn layer_in_air_front_placement() {
        let obj = ObjectModel::single_layer(360, 620, 0.1, 0.0f64, 2500.0).unwrap();
        let eff = effective_segments(&obj).unwrap();
        assert_eq!(eff.placement, AutocorrPlacement::Front);
        let bounds: Vec<_> = eff.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(bounds, vec![(0, 260), (260, 360), (360, 620)]);
        assert_eq!(eff.segments[0].gvd, 2500.0);
        assert!((eff.segments[1].gvd + 6500.0).abs() < 1e-9);
        assert_eq!(eff.segments[2].gvd, 2500.0);
        let p = eff.to_profile(1024);
        assert_eq!(p.values()[100], 0.75);
        assert_eq!(p.values()[300], 0.0);
        assert_eq!(p.values()[700], 0.5);
    }

    #[test]
    fn imbalanced_layer_inside_placement() {
        let obj = ObjectModel::single_layer(200, 550, 0.1, 1000.0f64, 2000.0).unwrap();
        let eff = effective_segments(&obj).unwrap();
        assert_eq!(eff.placement, AutocorrPlacement::Inside);
        let bounds: Vec<_> = eff.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(bounds, vec![(0, 200), (200, 350), (350, 550)]);
        assert_eq!(eff.segments[0].gvd, 1000.0);
        assert!((eff.segments[1].gvd - 10000.0 / 3.0).abs() < 1e-9);
        assert_eq!(eff.segments[2].gvd, 1000.0);
    }

    #[test]
    fn dispersion_free_layer_matches_ground_truth() {
        let obj = ObjectModel::single_layer(300, 420, 0.1, 0.0f64, 0.0).unwrap();
        assert_eq!(
            effective_profile_two_interface(&obj, 1024).unwrap(),
            ground_truth_profile(&obj, 1024)
        );
    }

    #[test]
    fn collision_is_rejected() {
        let obj = ObjectModel::single_layer(300, 600, 0.1, 0.0f64, 100.0).unwrap();
        assert!(matches!(
            effective_segments(&obj),
            Err(Error::DegenerateGeometry(_))
        ));
        let three = ObjectModel::layered(
            vec![
                crate::optics::Interface { position: 10, reflectivity: 0.1 },
                crate::optics::Interface { position: 30, reflectivity: 0.1 },
                crate::optics::Interface { position: 70, reflectivity: 0.1 },
            ],
            &[0.0f64, 0.0, 0.0],
            0.0,
        )
        .unwrap();
        assert!(effective_segments(&three).is_err());
    }
}
