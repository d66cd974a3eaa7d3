//! Profile encoding, analytic GVD levels, peak analysis, autocorrelation
//! peak removal and dispersion maps.

pub mod equations;
pub mod filter;
pub mod peaks;
pub mod profile;

pub use equations::{
    effective_profile_two_interface, effective_segments, estimate_layer_gvd, spurious_segment_gvd,
    inner_segment_gvd, AutocorrPlacement, EffectiveProfile, Segment, SegmentGeometry,
};
pub use filter::{remove_autocorr_peaks, BinInterval};
pub use peaks::{analyze_peaks, classify_peaks, Peak, PeakKind, PeakOptions, PeakSet};
pub use profile::{
    build_dispersion_map, decode_gvd, encode_gvd, ground_truth_profile, profile_mae,
    DispersionMap, DispersionProfile,
};
