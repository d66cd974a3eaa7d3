//! Random layered objects, (stack, profile) training pairs and the `ICAD`
//! container they are stored in.
//!
//! Container layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `ICAD` |
//! | 4     | `u32` format version (1) |
//! | 8     | `u64` example count |
//! | 4     | `u32` header text length |
//! | n     | UTF-8 header text (TOML) |
//! | ...   | per example: stack rows×cols `f32` row-major, then profile `f32` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{ground_truth_profile, DispersionProfile};
use crate::error::{Error, Result};
use crate::ica::{build_stack, FftStack, DEFAULT_FRAGMENTS};
use crate::io::atomic_write;
use crate::optics::{
    add_noise, synthesize_spectrum, Interface, NoiseSpec, ObjectModel, SpectralGrid, DEFAULT_CENTER_NM,
    DEFAULT_SAMPLES, DEFAULT_SPAN_NM, GVD_LIMIT,
};

pub const MAGIC: [u8; 4] = *b"ICAD";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on interfaces per sampled object.
pub const MAX_INTERFACES: usize = 12;
const PREAMBLE_LEN: u64 = 4 + 4 + 8 + 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub max_interfaces: usize,
    /// Minimum spacing between interfaces, bins.
    pub min_gap: usize,
    /// fs^2/mm
    pub gvd_range: [f64; 2],
    /// Inclusive interface bin range.
    pub position_range: [usize; 2],
    pub reflectivity_range: [f64; 2],
    pub include_autocorr: bool,
    /// `None` for noiseless spectra.
    pub snr_db: Option<f64>,
    /// Relative weight of each interface count `1..=max_interfaces`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_weights: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_interfaces: MAX_INTERFACES,
            min_gap: 8,
            gvd_range: [-GVD_LIMIT, GVD_LIMIT],
            position_range: [16, 1000],
            reflectivity_range: [0.01, 0.2],
            include_autocorr: false,
            snr_db: None,
            count_weights: None,
        }
    }
}

impl SamplerConfig {
    /// Defaults scaled to an A-scan of `n` bins.
    pub fn for_length(n: usize) -> Self {
        let scale = n as f64 / DEFAULT_SAMPLES as f64;
        let lo = ((16.0 * scale).round() as usize).max(2);
        let hi = ((1000.0 * scale).round() as usize).min(n.saturating_sub(2));
        Self {
            position_range: [lo, hi],
            min_gap: ((8.0 * scale).round() as usize).max(4),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_interfaces == 0 || self.max_interfaces > MAX_INTERFACES {
            return bad(format!(
                "max_interfaces must be in 1..={MAX_INTERFACES}, got {}",
                self.max_interfaces
            ));
        }
        let [g0, g1] = self.gvd_range;
        if !(g0 <= g1 && g0 >= -GVD_LIMIT && g1 <= GVD_LIMIT) {
            return bad(format!("gvd_range {:?} must lie within ±{GVD_LIMIT}", self.gvd_range));
        }
        let [r0, r1] = self.reflectivity_range;
        if !(r0 > 0.0 && r0 <= r1 && r1 <= 1.0) {
            return bad(format!(
                "reflectivity_range {:?} must lie within (0, 1]",
                self.reflectivity_range
            ));
        }
        let [p0, p1] = self.position_range;
        if p0 == 0 || p0 > p1 {
            return bad(format!("position_range {:?} is empty", self.position_range));
        }
        if (p1 - p0) < (self.max_interfaces - 1) * self.min_gap {
            return bad(format!(
                "position_range {:?} cannot hold {} interfaces {} bins apart",
                self.position_range, self.max_interfaces, self.min_gap
            ));
        }
        if let Some(snr) = self.snr_db {
            NoiseSpec::gaussian(snr, 0)?;
        }
        if let Some(w) = &self.count_weights {
            if w.len() != self.max_interfaces || w.iter().any(|&x| !(x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad(format!(
                    "count_weights needs {} non-negative entries with a positive sum",
                    self.max_interfaces
                ));
            }
        }
        Ok(())
    }
}

/// Random layered object; deterministic in `seed`.
pub fn sample_object(seed: u64, cfg: &SamplerConfig) -> Result<ObjectModel<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let count = match &cfg.count_weights {
        None => rng.random_range(1..=cfg.max_interfaces),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut k = w.len();
            for (i, &x) in w.iter().enumerate() {
                if pick < x {
                    k = i + 1;
                    break;
                }
                pick -= x;
            }
            k
        }
    };

    // sorted draws on a shrunk range, then spread by the minimum gap
    let [p0, p1] = cfg.position_range;
    let slack = (p1 - p0) - (count - 1) * cfg.min_gap;
    let mut offsets: Vec<usize> = (0..count).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();

    let [r0, r1] = cfg.reflectivity_range;
    let [g0, g1] = cfg.gvd_range;
    let interfaces: Vec<Interface<f64>> = offsets
        .iter()
        .enumerate()
        .map(|(j, &o)| Interface {
            position: p0 + o + j * cfg.min_gap,
            reflectivity: if r0 < r1 { rng.random_range(r0..=r1) } else { r0 },
        })
        .collect();
    let gvds: Vec<f64> = (0..count)
        .map(|_| if g0 < g1 { rng.random_range(g0..=g1) } else { g0 })
        .collect();
    ObjectModel::layered(interfaces, &gvds, 0.0)
}

/// One training pair at storage precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub stack: FftStack<f32>,
    pub profile: DispersionProfile<f32>,
}

/// Grid, fragmentation and sampler settings behind a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub center_nm: f64,
    pub span_nm: f64,
    pub fragments: usize,
    pub sampler: SamplerConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            center_nm: DEFAULT_CENTER_NM,
            span_nm: DEFAULT_SPAN_NM,
            fragments: DEFAULT_FRAGMENTS,
            sampler: SamplerConfig::default(),
        }
    }
}

impl GeneratorConfig {
    /// 128-sample grid split into 16 fragments: 16×128 stacks, 128-pixel profiles.
    pub fn desk() -> Self {
        Self {
            n_samples: 128,
            fragments: 16,
            sampler: SamplerConfig::for_length(128),
            ..Self::default()
        }
    }

    pub fn grid(&self) -> Result<Arc<SpectralGrid<f64>>> {
        Ok(Arc::new(SpectralGrid::new(self.n_samples, self.center_nm, self.span_nm)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.sampler.validate()?;
        if self.fragments == 0 || self.fragments > self.n_samples {
            return Err(Error::Config(format!(
                "cannot split {} samples into {} fragments",
                self.n_samples, self.fragments
            )));
        }
        if self.sampler.position_range[1] >= self.n_samples {
            return Err(Error::Config(format!(
                "position_range {:?} exceeds the {}-bin A-scan",
                self.sampler.position_range, self.n_samples
            )));
        }
        Ok(())
    }
}

fn example_seed(base_seed: u64, index: u64) -> u64 {
    base_seed.wrapping_add(index)
}

fn noise_seed(seed: u64) -> u64 {
    // splitmix64 step, decorrelates the noise stream from the object stream
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Example `index` of the dataset seeded with `base_seed`: stack of the
/// object's spectrum (optionally noisy) and its ground-truth profile.
pub fn generate_example(
    index: u64,
    base_seed: u64,
    cfg: &SamplerConfig,
    grid: &Arc<SpectralGrid<f64>>,
    fragments: usize,
) -> Result<Example> {
    let seed = example_seed(base_seed, index);
    let object = sample_object(seed, cfg)?;
    let mut spectrum = synthesize_spectrum(&object, grid, cfg.include_autocorr)?;
    if let Some(snr_db) = cfg.snr_db {
        spectrum = add_noise(&spectrum, &NoiseSpec::gaussian(snr_db, noise_seed(seed))?);
    }
    let stack = build_stack(&spectrum, fragments)?;
    let profile = ground_truth_profile(&object, grid.n_samples());
    Ok(Example {
        stack: stack.cast(),
        profile: profile.cast(),
    })
}

/// Examples `first..first+count`; with `threads > 1` they are generated on a
/// rayon pool, with output identical to the serial path.
pub fn generate_examples(cfg: &GeneratorConfig, base_seed: u64, first: u64, count: u64, threads: usize) -> Result<Vec<Example>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let one = |i: u64| generate_example(i, base_seed, &cfg.sampler, &grid, cfg.fragments);
    if threads <= 1 {
        return (first..first + count).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (first..first + count).into_par_iter().map(one).collect())
}

/// Examples `0..count` generated in chunks, so memory stays bounded.
pub fn example_stream(
    cfg: &GeneratorConfig,
    base_seed: u64,
    count: u64,
    threads: usize,
) -> impl Iterator<Item = Result<Example>> + '_ {
    const CHUNK: u64 = 256;
    (0..count.div_ceil(CHUNK)).flat_map(move |c| {
        let first = c * CHUNK;
        match generate_examples(cfg, base_seed, first, CHUNK.min(count - first), threads) {
            Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
            Err(e) => vec![Err(e)],
        }
    })
}

/// Generates and writes a whole dataset.
pub fn create_dataset(path: &Path, cfg: &GeneratorConfig, count: u64, base_seed: u64, threads: usize) -> Result<u64> {
    cfg.validate()?;
    let header = DatasetHeader::new(cfg.clone(), count, base_seed);
    write_dataset(path, &header, example_stream(cfg, base_seed, count, threads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub example_count: u64,
    pub stack_rows: usize,
    pub stack_cols: usize,
    pub profile_len: usize,
    pub base_seed: u64,
    pub generator: GeneratorConfig,
}

impl DatasetHeader {
    pub fn new(generator: GeneratorConfig, example_count: u64, base_seed: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            example_count,
            stack_rows: generator.fragments,
            stack_cols: generator.n_samples,
            profile_len: generator.n_samples,
            base_seed,
            generator,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("header serializes")
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Payload bytes of one example.
    pub fn example_bytes(&self) -> u64 {
        4 * (self.stack_rows * self.stack_cols + self.profile_len) as u64
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.stack_rows == 0 || self.stack_cols == 0 || self.profile_len == 0 {
            return Err("stack and profile dimensions must be positive".into());
        }
        Ok(())
    }
}

fn check_example(header: &DatasetHeader, index: u64, ex: &Example) -> Result<()> {
    let (r, c, p) = (ex.stack.rows(), ex.stack.cols(), ex.profile.len());
    if (r, c, p) != (header.stack_rows, header.stack_cols, header.profile_len) {
        return Err(Error::shape(
            format!(
                "{}x{} stack with {}-pixel profile",
                header.stack_rows, header.stack_cols, header.profile_len
            ),
            format!("{r}x{c} stack with {p}-pixel profile in example {index}"),
        ));
    }
    Ok(())
}

/// Writes `examples` under `header`; the number of examples must match
/// `header.example_count`. The file appears atomically, and the first failed
/// item aborts the write.
pub fn write_dataset<I>(path: &Path, header: &DatasetHeader, examples: I) -> Result<u64>
where
    I: IntoIterator<Item = Result<Example>>,
{
    header
        .validate()
        .map_err(|reason| Error::Config(format!("dataset header: {reason}")))?;
    let text = header.to_text();
    atomic_write(path, |w| {
        let mut w = BufWriter::new(w);
        let io = |e| Error::io(path, e);
        w.write_all(&MAGIC).map_err(io)?;
        w.write_all(&header.version.to_le_bytes()).map_err(io)?;
        w.write_all(&header.example_count.to_le_bytes()).map_err(io)?;
        w.write_all(&(text.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(text.as_bytes()).map_err(io)?;
        let mut written = 0u64;
        for ex in examples {
            let ex = ex?;
            check_example(header, written, &ex)?;
            for v in ex.stack.values().iter().chain(ex.profile.values()) {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            written += 1;
        }
        if written != header.example_count {
            return Err(Error::shape(
                format!("{} examples", header.example_count),
                format!("{written} examples"),
            ));
        }
        w.flush().map_err(io)?;
        Ok(written)
    })
}

/// Lazily decoded examples of an `ICAD` file.
pub struct DatasetReader {
    path: PathBuf,
    header: DatasetHeader,
    reader: BufReader<File>,
    next: u64,
}

impl DatasetReader {
    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }
}

impl Iterator for DatasetReader {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.header.example_count {
            return None;
        }
        let index = self.next;
        self.next += 1;
        Some(self.read_example(index))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.header.example_count - self.next) as usize;
        (left, Some(left))
    }
}

impl DatasetReader {
    fn read_example(&mut self, index: u64) -> Result<Example> {
        let h = &self.header;
        let mut buf = vec![0u8; h.example_bytes() as usize];
        let offset = self.reader.stream_position().map_err(|e| Error::io(&self.path, e))?;
        self.reader.read_exact(&mut buf).map_err(|e| Error::Corrupt {
            path: self.path.clone(),
            offset,
            example: index,
            reason: e.to_string(),
        })?;
        let floats: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let split = h.stack_rows * h.stack_cols;
        let stack = FftStack::from_values(h.stack_rows, h.stack_cols, floats[..split].to_vec()).map_err(|e| {
            Error::Corrupt {
                path: self.path.clone(),
                offset,
                example: index,
                reason: e.to_string(),
            }
        })?;
        Ok(Example {
            stack,
            profile: DispersionProfile::from_encoded(floats[split..].to_vec()),
        })
    }
}

/// Opens an `ICAD` file, validating the preamble, header and payload length.
pub fn read_dataset(path: &Path) -> Result<DatasetReader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut reader = BufReader::new(file);
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };

    let mut pre = [0u8; PREAMBLE_LEN as usize];
    reader
        .read_exact(&mut pre)
        .map_err(|_| format(format!("file shorter than the {PREAMBLE_LEN}-byte preamble")))?;
    if pre[..4] != MAGIC {
        return Err(format(format!(
            "bad magic {:?}, expected \"ICAD\"",
            String::from_utf8_lossy(&pre[..4])
        )));
    }
    let version = u32::from_le_bytes(pre[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(pre[8..16].try_into().unwrap());
    let text_len = u32::from_le_bytes(pre[16..20].try_into().unwrap()) as u64;
    if PREAMBLE_LEN + text_len > file_len {
        return Err(format(format!("header length {text_len} runs past the end of the file")));
    }
    let mut text = vec![0u8; text_len as usize];
    reader.read_exact(&mut text).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|_| format("header text is not UTF-8".into()))?;
    let header = DatasetHeader::from_text(&text).map_err(|e| format(format!("header: {e}")))?;
    header.validate().map_err(|e| format(format!("header: {e}")))?;
    if header.example_count != count || header.version != version {
        return Err(format(format!(
            "header text disagrees with preamble (count {} vs {count})",
            header.example_count
        )));
    }

    let data_start = PREAMBLE_LEN + text_len;
    let per = header.example_bytes();
    let expected = data_start + per * count;
    if file_len < expected {
        let example = (file_len - data_start) / per;
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            offset: data_start + example * per,
            example,
            reason: format!("payload truncated: file has {file_len} bytes, expected {expected}"),
        });
    }
    if file_len > expected {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            offset: expected,
            example: count,
            reason: format!("{} trailing bytes after the last example", file_len - expected),
        });
    }
    reader
        .seek(SeekFrom::Start(data_start))
        .map_err(|e| Error::io(path, e))?;
    Ok(DatasetReader {
        path: path.to_path_buf(),
        header,
        reader,
        next: 0,
    })
}

/// Reads a whole dataset into memory.
pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Example>)> {
    let reader = read_dataset(path)?;
    let header = reader.header().clone();
    let examples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, examples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interface_count_bounds_and_determinism() {
        let cfg = SamplerConfig::default();
        for seed in 0..200 {
            let obj = sample_object(seed, &cfg).unwrap();
            let n = obj.interfaces().len();
            assert!((1..=12).contains(&n));
            let pos = obj.positions();
            assert!(pos.windows(2).all(|w| w[1] - w[0] >= cfg.min_gap));
            assert!(pos[0] >= 16 && *pos.last().unwrap() <= 1000);
        }
        assert_eq!(sample_object(42, &cfg).unwrap(), sample_object(42, &cfg).unwrap());
    }

    #[test]
    fn every_count_occurs() {
        let cfg = SamplerConfig::default();
        let mut seen = [0usize; 13];
        for seed in 0..10_000 {
            seen[sample_object(seed, &cfg).unwrap().interfaces().len()] += 1;
        }
        assert!(seen[1..].iter().all(|&c| c > 0), "{seen:?}");
    }

    #[test]
    fn count_weights_are_honoured() {
        let mut weights = vec![0.0; 12];
        weights[2] = 1.0;
        let cfg = SamplerConfig {
            count_weights: Some(weights),
            ..SamplerConfig::default()
        };
        for seed in 0..50 {
            assert_eq!(sample_object(seed, &cfg).unwrap().interfaces().len(), 3);
        }
    }

    #[test]
    fn cramped_position_range_is_rejected() {
        let cfg = SamplerConfig {
            position_range: [16, 80],
            ..SamplerConfig::default()
        };
        assert!(matches!(sample_object(0, &cfg), Err(Error::Config(_))));
        let cfg = SamplerConfig {
            max_interfaces: 13,
            ..SamplerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_example_dimensions() {
        let cfg = GeneratorConfig::default();
        let grid = cfg.grid().unwrap();
        let ex = generate_example(0, 7, &cfg.sampler, &grid, cfg.fragments).unwrap();
        assert_eq!((ex.stack.rows(), ex.stack.cols()), (50, 1024));
        assert_eq!(ex.profile.len(), 1024);
    }

    #[test]
    fn labels_follow_the_sampled_regions() {
        let cfg = GeneratorConfig::default();
        let grid = cfg.grid().unwrap();
        for index in 0..5 {
            let ex = generate_example(index, 11, &cfg.sampler, &grid, cfg.fragments).unwrap();
            let obj = sample_object(11 + index, &cfg.sampler).unwrap();
            let mut start = 0;
            for r in obj.regions() {
                for px in [start, start + r.extent / 2, start + r.extent - 1] {
                    let decoded = ex.profile.values()[px] as f64 * 10_000.0 - 5000.0;
                    assert!((decoded - r.gvd).abs() <= 1.0, "pixel {px}: {decoded} vs {}", r.gvd);
                }
                start += r.extent;
            }
        }
    }

    #[test]
    fn noise_seed_differs_from_object_seed() {
        assert_ne!(noise_seed(5), 5);
        assert_ne!(noise_seed(5), noise_seed(6));
    }
}
