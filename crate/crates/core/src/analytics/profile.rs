use crate::error::{Error, Result};
use crate::optics::{ObjectModel, GVD_LIMIT};
use crate::Scalar;

/// Maps GVD in fs^2/mm onto `[0, 1]`; values outside `±5000` clamp.
pub fn encode_gvd<T: Scalar>(gvd: T) -> T {
    let limit = T::of(GVD_LIMIT);
    let u = (gvd + limit) / (limit + limit);
    u.max(T::zero()).min(T::one())
}

/// Inverse of [`encode_gvd`] on `[0, 1]`.
pub fn decode_gvd<T: Scalar>(u: T) -> Result<T> {
    if !(u >= T::zero() && u <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "encoded GVD {u} outside [0, 1]"
        )));
    }
    let limit = T::of(GVD_LIMIT);
    Ok(u * (limit + limit) - limit)
}

/// Per-pixel encoded GVD.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionProfile<T>(Vec<T>);

impl<T: Scalar> DispersionProfile<T> {
    /// Wraps encoded values, clamping each into `[0, 1]`.
    pub fn from_encoded(values: Vec<T>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| if v.is_nan() { T::of(0.5) } else { v.max(T::zero()).min(T::one()) })
                .collect(),
        )
    }

    /// Encodes a per-pixel GVD curve in fs^2/mm.
    pub fn from_gvd(gvd: &[T]) -> Self {
        Self(gvd.iter().map(|&g| encode_gvd(g)).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Decoded GVD per pixel, fs^2/mm.
    pub fn gvd(&self) -> Vec<T> {
        self.0
            .iter()
            .map(|&u| decode_gvd(u).expect("profile values are clamped"))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> DispersionProfile<U> {
        DispersionProfile(self.0.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

/// Piecewise-constant label of `object` over `len` pixels.
pub fn ground_truth_profile<T: Scalar>(object: &ObjectModel<T>, len: usize) -> DispersionProfile<T> {
    let mut values = Vec::with_capacity(len);
    for r in object.regions() {
        let u = encode_gvd(r.gvd);
        values.extend(std::iter::repeat_n(u, r.extent));
    }
    values.truncate(len);
    values.resize(len, encode_gvd(object.tail_gvd()));
    DispersionProfile(values)
}

/// Mean absolute difference of two profiles.
pub fn profile_mae<T: Scalar>(a: &DispersionProfile<T>, b: &DispersionProfile<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::shape(
            format!("{} pixels", a.len()),
            format!("{} pixels", b.len()),
        ));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = a.0.iter().zip(&b.0).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(sum / T::from_usize(a.len()).unwrap())
}

/// Profiles of laterally adjacent A-scans, one row each.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionMap<T> {
    rows: Vec<DispersionProfile<T>>,
}

impl<T: Scalar> DispersionMap<T> {
    pub fn rows(&self) -> &[DispersionProfile<T>] {
        &self.rows
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    /// Row-major encoded values.
    pub fn to_matrix(&self) -> Vec<Vec<T>> {
        self.rows.iter().map(|r| r.values().to_vec()).collect()
    }
}

pub fn build_dispersion_map<T: Scalar>(profiles: Vec<DispersionProfile<T>>) -> Result<DispersionMap<T>> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("a dispersion map needs at least one profile".into()))?;
    let width = first.len();
    if let Some((i, p)) = profiles.iter().enumerate().find(|(_, p)| p.len() != width) {
        return Err(Error::shape(
            format!("{width} pixels in every profile"),
            format!("{} pixels in profile {i}", p.len()),
        ));
    }
    Ok(DispersionMap { rows: profiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::ObjectModel;

    #[test]
    fn encoding_endpoints_and_clamp() {
        assert_eq!(encode_gvd(0.0f64), 0.5);
        assert_eq!(encode_gvd(-5000.0f64), 0.0);
        assert_eq!(encode_gvd(5000.0f64), 1.0);
        assert_eq!(encode_gvd(7000.0f64), 1.0);
        assert_eq!(encode_gvd(-1e9f64), 0.0);
    }

    #[test]
    fn decoding() {
        assert_eq!(decode_gvd(0.5f64).unwrap(), 0.0);
        assert_eq!(decode_gvd(1.0f64).unwrap(), 5000.0);
        assert!(decode_gvd(1.5f64).is_err());
        assert!(decode_gvd(f64::NAN).is_err());
    }

    #[test]
    fn air_object_is_flat() {
        let p = ground_truth_profile(&ObjectModel::<f64>::empty(), 1024);
        assert_eq!(p.len(), 1024);
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn imbalance_plus_layer_profile() {
        let obj = ObjectModel::single_layer(200, 550, 0.1, 1000.0f64, 2000.0).unwrap();
        let p = ground_truth_profile(&obj, 1024);
        assert!(p.values()[..200].iter().all(|&v| (v - 0.6).abs() < 1e-12));
        assert!(p.values()[200..550].iter().all(|&v| (v - 0.7).abs() < 1e-12));
        assert!(p.values()[550..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn air_front_layer_profile() {
        let obj = ObjectModel::single_layer(360, 620, 0.1, 0.0f64, 2500.0).unwrap();
        let p = ground_truth_profile(&obj, 1024);
        assert!(p.values()[..360].iter().all(|&v| v == 0.5));
        assert!(p.values()[360..620].iter().all(|&v| v == 0.75));
    }

    #[test]
    fn mae_examples() {
        let a = DispersionProfile::from_encoded(vec![0.5f64; 8]);
        assert_eq!(profile_mae(&a, &a).unwrap(), 0.0);
        let zeros = DispersionProfile::from_encoded(vec![0.0f64; 8]);
        let ones = DispersionProfile::from_encoded(vec![1.0f64; 8]);
        assert_eq!(profile_mae(&zeros, &ones).unwrap(), 1.0);
        let mut half = vec![0.5f64; 8];
        half[..4].fill(0.75);
        let b = DispersionProfile::from_encoded(half);
        assert!((profile_mae(&a, &b).unwrap() - 0.125).abs() < 1e-15);
        let short = DispersionProfile::from_encoded(vec![0.5f64; 7]);
        assert!(profile_mae(&a, &short).is_err());
    }

    #[test]
    fn map_assembly() {
        let p = DispersionProfile::from_encoded(vec![0.5f64; 1024]);
        let m = build_dispersion_map(vec![p.clone()]).unwrap();
        assert_eq!((m.height(), m.width()), (1, 1024));
        assert!(build_dispersion_map::<f64>(vec![]).is_err());
        let short = DispersionProfile::from_encoded(vec![0.5f64; 10]);
        assert!(build_dispersion_map(vec![p, short]).is_err());
    }
}
