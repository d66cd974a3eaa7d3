//! `icaoct` command-line front end. Exit status: 0 on success, 2 for usage
//! errors, 1 for runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::analytics::{build_dispersion_map, estimate_layer_gvd, ground_truth_profile, remove_autocorr_peaks, BinInterval, DispersionProfile};
use crate::dataset::{create_dataset, load_dataset, GeneratorConfig};
use crate::error::{Error, Result};
use crate::ica::{build_stack, ica_ascan, standard_ascan, FftStack, DEFAULT_FRAGMENTS};
use crate::io::{
    export_csv, export_pgm, export_raw_f32, import_csv, import_raw_f32, read_spectrum_csv, write_spectrum_csv, PgmScale, Table,
};
use crate::nn::{init_model, train, RegressorConfig, RegressorModel, TrainOptions};
use crate::optics::{
    add_noise, synthesize_spectrum, Interface, NoiseSpec, ObjectModel, Region, SpectralGrid, DEFAULT_CENTER_NM, DEFAULT_SAMPLES,
    DEFAULT_SPAN_NM,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ICAOCT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "icaoct", version, about = "Intensity-correlation OCT dispersion profiling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the spectrum of a layered object and write it as CSV.
    Simulate(SimulateArgs),
    /// Build the FFT stack of a spectrum and export it as PGM and/or raw f32.
    Stack(StackArgs),
    /// Generate a labelled ICAD dataset.
    Dataset(DatasetArgs),
    /// Train the regressor on an ICAD dataset and write an ICAM checkpoint.
    Train(TrainArgs),
    /// Predict dispersion profiles with a trained checkpoint.
    Predict(PredictArgs),
    /// Invert a measured segment GVD into the layer GVD (fs^2/mm).
    EstimateGvd(EstimateArgs),
    /// Zero autocorrelation-peak bins of a spectrum's transform.
    FilterAc(FilterArgs),
    /// Assemble a dispersion map from a directory of B-scan files.
    Map(MapArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Spectral samples per A-scan.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Central wavelength, nm.
    #[arg(long, default_value_t = DEFAULT_CENTER_NM)]
    center_nm: f64,
    /// Spectral span, nm.
    #[arg(long, default_value_t = DEFAULT_SPAN_NM)]
    span_nm: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<Arc<SpectralGrid<f64>>> {
        Ok(Arc::new(SpectralGrid::new(self.samples, self.center_nm, self.span_nm)?))
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Interface as `bin:reflectivity`; repeat for each interface.
    #[arg(long = "iface", value_parser = parse_iface)]
    ifaces: Vec<Interface<f64>>,
    /// Region as `extent:gvd` (bins, fs^2/mm); repeat in depth order.
    #[arg(long = "region", value_parser = parse_region, allow_hyphen_values = true)]
    regions: Vec<Region<f64>>,
    /// GVD behind the last interface, fs^2/mm.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tail_gvd: f64,
    /// TOML object description instead of --iface/--region.
    #[arg(long, conflicts_with_all = ["ifaces", "regions"])]
    object_file: Option<PathBuf>,
    /// Include object self-interference (autocorrelation) terms.
    #[arg(long)]
    autocorr: bool,
    /// Add Gaussian noise at this SNR (dB).
    #[arg(long)]
    snr: Option<f64>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
    /// Standard A-scan CSV (bin, magnitude).
    #[arg(long)]
    ascan: Option<PathBuf>,
    /// Ground-truth dispersion profile CSV (pixel, u, gvd).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Spectrum CSV (sample_index, intensity).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StackArgs {
    /// Spectrum CSV; resampled to --samples when lengths differ.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FRAGMENTS)]
    fragments: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// PGM image of the stack.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Raw little-endian f32 dump (with a .hdr sidecar).
    #[arg(long)]
    raw: Option<PathBuf>,
    /// CSV of the standard and ICA A-scans.
    #[arg(long)]
    ascan: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 1024-sample spectra, 50×1024 stacks.
    Full,
    /// 128-sample spectra, 16×128 stacks.
    Desk,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Number of examples.
    #[arg(long)]
    count: u64,
    /// Example i is drawn from seed base_seed + i.
    #[arg(long)]
    base_seed: u64,
    /// ICAD output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    /// TOML generator config; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: ICAOCT_THREADS or all processors).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training dataset (ICAD).
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// TOML regressor config (default: desk preset sized to the data).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initialisation and shuffle seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint of the best epoch.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV (epoch, train_loss, val_loss, seconds).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Print one line per epoch.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// ICAM checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// ICAD dataset, raw stack (.f32 with .hdr) or spectrum CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// CSV with a pixel column and one encoded-profile column per input.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Front-interface delay, bins.
    #[arg(long, allow_hyphen_values = true)]
    lfront: f64,
    /// Layer thickness, bins.
    #[arg(long, allow_hyphen_values = true)]
    lobj: f64,
    /// Front (imbalance) GVD, fs^2/mm.
    #[arg(long, allow_hyphen_values = true)]
    bfront: f64,
    /// Measured GVD of the segment behind the autocorrelation peak, fs^2/mm.
    #[arg(long, allow_hyphen_values = true)]
    bseg2: f64,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Spectrum CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Bin intervals `a:b[,c:d]`.
    #[arg(long, value_delimiter = ',', required = true)]
    zero: Vec<BinInterval>,
    #[command(flatten)]
    grid: GridArgs,
    /// Filtered spectrum CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Directory of per-position CSVs, read in file-name order: spectra when
    /// --model is given, otherwise profiles (pixel, u).
    #[arg(long)]
    bscan_dir: PathBuf,
    /// ICAM checkpoint used to predict profiles from spectra.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Map PGM; a CSV with the same stem is written next to it.
    #[arg(long)]
    out: PathBuf,
}

/// Object description accepted by `simulate --object-file`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    #[serde(default)]
    tail_gvd: f64,
    #[serde(default, rename = "interface")]
    interfaces: Vec<IfaceEntry>,
    #[serde(default, rename = "region")]
    regions: Vec<RegionEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IfaceEntry {
    position: usize,
    reflectivity: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionEntry {
    extent: usize,
    gvd: f64,
}

fn parse_pair(s: &str) -> std::result::Result<(&str, &str), String> {
    s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))
}

fn parse_iface(s: &str) -> std::result::Result<Interface<f64>, String> {
    let (p, r) = parse_pair(s)?;
    Ok(Interface {
        position: p.trim().parse().map_err(|_| format!("bad bin {p:?}"))?,
        reflectivity: r.trim().parse().map_err(|_| format!("bad reflectivity {r:?}"))?,
    })
}

fn parse_region(s: &str) -> std::result::Result<Region<f64>, String> {
    let (e, g) = parse_pair(s)?;
    Ok(Region {
        extent: e.trim().parse().map_err(|_| format!("bad extent {e:?}"))?,
        gvd: g.trim().parse().map_err(|_| format!("bad GVD {g:?}"))?,
    })
}

/// Failure of a command: bad flags (exit 2) or a runtime error (exit 1).
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` (program name first) and runs the command. Diagnostics go
/// to stderr; the return value is the process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("icaoct: usage error: {m}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("icaoct: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Stack(a) => stack(a),
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::EstimateGvd(a) => estimate(a),
        Command::FilterAc(a) => filter(a),
        Command::Map(a) => map(a),
    }
}

/// Worker count from `ICAOCT_THREADS`, defaulting to all processors.
pub fn thread_limit() -> std::result::Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("{THREADS_ENV}={v:?} is not a positive integer")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let grid = a.grid.grid().map_err(|e| usage(e.to_string()))?;
    let noise = match a.snr {
        Some(db) => NoiseSpec::gaussian(db, a.seed).map_err(|e| usage(e.to_string()))?,
        None => NoiseSpec::Noiseless,
    };
    let object = match &a.object_file {
        Some(path) => {
            let f: ObjectFile = read_toml(path)?;
            let ifaces = f
                .interfaces
                .iter()
                .map(|i| Interface {
                    position: i.position,
                    reflectivity: i.reflectivity,
                })
                .collect();
            let regions = f.regions.iter().map(|r| Region { extent: r.extent, gvd: r.gvd }).collect();
            ObjectModel::new(ifaces, regions, f.tail_gvd).map_err(|e| Error::Format {
                path: path.clone(),
                reason: e.to_string(),
            })?
        }
        None if a.regions.is_empty() => {
            let zeros = vec![0.0; a.ifaces.len()];
            ObjectModel::layered(a.ifaces.clone(), &zeros, a.tail_gvd).map_err(|e| usage(e.to_string()))?
        }
        None => ObjectModel::new(a.ifaces.clone(), a.regions.clone(), a.tail_gvd).map_err(|e| usage(e.to_string()))?,
    };
    object.validate_for(&grid).map_err(|e| usage(e.to_string()))?;

    let clean = synthesize_spectrum(&object, &grid, a.autocorr)?;
    let spectrum = add_noise(&clean, &noise);
    write_spectrum_csv(&spectrum, &a.out)?;
    if let Some(path) = &a.ascan {
        let s = standard_ascan(&spectrum);
        export_csv(&indexed_table("bin", &[("magnitude", s.values())])?, path)?;
    }
    if let Some(path) = &a.profile {
        let p = ground_truth_profile(&object, grid.n_samples());
        export_csv(&profile_table(&p)?, path)?;
    }
    Ok(())
}

fn indexed_table(index: &str, cols: &[(&str, &[f64])]) -> Result<Table> {
    let n = cols.first().map_or(0, |c| c.1.len());
    let mut names = vec![index.to_string()];
    let mut columns = vec![(0..n).map(|i| i as f64).collect()];
    for (name, values) in cols {
        names.push(name.to_string());
        columns.push(values.to_vec());
    }
    Table::new(names, columns)
}

fn profile_table(p: &DispersionProfile<f64>) -> Result<Table> {
    indexed_table("pixel", &[("u", p.values()), ("gvd", &p.gvd())])
}

fn check_input(path: &Path) -> CmdResult {
    if !path.is_file() {
        return Err(Failure::Runtime(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        )));
    }
    Ok(())
}

fn stack(a: StackArgs) -> CmdResult {
    let grid = a.grid.grid().map_err(|e| usage(e.to_string()))?;
    if a.fragments == 0 || a.fragments > grid.n_samples() {
        return Err(usage(format!("--fragments must be in 1..={}", grid.n_samples())));
    }
    if a.out.is_none() && a.raw.is_none() && a.ascan.is_none() {
        return Err(usage("nothing to write: give --out, --raw or --ascan"));
    }
    check_input(&a.input)?;
    let spectrum = read_spectrum_csv(&a.input, grid)?;
    let stack = build_stack(&spectrum, a.fragments)?;
    let values: Vec<f64> = stack.values().to_vec();
    if let Some(path) = &a.out {
        export_pgm(stack.rows(), stack.cols(), &values, PgmScale::MinMax, path)?;
    }
    if let Some(path) = &a.raw {
        let v32: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        export_raw_f32(stack.rows(), stack.cols(), &v32, path)?;
    }
    if let Some(path) = &a.ascan {
        let std_scan = standard_ascan(&spectrum);
        let ica = ica_ascan(&stack);
        export_csv(
            &indexed_table("bin", &[("standard", std_scan.values()), ("ica", ica.values())])?,
            path,
        )?;
    }
    Ok(())
}

fn dataset(a: DatasetArgs) -> CmdResult {
    let threads = match a.threads {
        Some(0) => return Err(usage("--threads must be positive")),
        Some(n) => n,
        None => thread_limit().map_err(usage)?,
    };
    let cfg = match &a.config {
        Some(path) => read_toml::<GeneratorConfig>(path)?,
        None => match a.preset {
            Preset::Full => GeneratorConfig::default(),
            Preset::Desk => GeneratorConfig::desk(),
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let n = create_dataset(&a.out, &cfg, a.count, a.base_seed, threads)?;
    eprintln!("wrote {n} examples to {}", a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    if a.epochs == 0 {
        return Err(usage("--epochs must be positive"));
    }
    let given = a.config.as_deref().map(read_toml::<RegressorConfig>).transpose()?;
    let (header, examples) = load_dataset(&a.data)?;
    let val = match &a.val {
        Some(p) => load_dataset(p)?.1,
        None => Vec::new(),
    };
    let cfg = match given {
        Some(c) => {
            c.validate()?;
            c
        }
        None => RegressorConfig {
            input_rows: header.stack_rows,
            input_cols: header.stack_cols,
            output_len: header.profile_len,
            ..RegressorConfig::desk()
        },
    };
    if (cfg.input_rows, cfg.input_cols, cfg.output_len) != (header.stack_rows, header.stack_cols, header.profile_len) {
        return Err(Failure::Runtime(Error::shape(
            format!(
                "{}x{} stacks and {}-pixel profiles (config)",
                cfg.input_rows, cfg.input_cols, cfg.output_len
            ),
            format!(
                "{}x{} and {} in {}",
                header.stack_rows,
                header.stack_cols,
                header.profile_len,
                a.data.display()
            ),
        )));
    }
    let mut model = init_model::<f32>(&cfg, a.seed)?;
    let opts = TrainOptions {
        epochs: a.epochs,
        shuffle_seed: a.seed,
        checkpoint: None,
        restore_best: true,
        verbose: a.verbose,
    };
    let history = train(&mut model, &examples, &val, &opts)?;
    model.save(&a.out)?;
    if let Some(path) = &a.history {
        export_csv(&history.to_table(), path)?;
    }
    Ok(())
}

/// Stacks from an ICAD file, a raw dump or a spectrum CSV, shaped for `cfg`.
fn load_stacks(path: &Path, cfg: &RegressorConfig) -> Result<Vec<FftStack<f32>>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "icad" => Ok(load_dataset(path)?.1.into_iter().map(|e| e.stack).collect()),
        "csv" => {
            let grid = Arc::new(SpectralGrid::<f64>::new(cfg.input_cols, DEFAULT_CENTER_NM, DEFAULT_SPAN_NM)?);
            let spectrum = read_spectrum_csv(path, grid)?;
            Ok(vec![build_stack(&spectrum, cfg.input_rows)?.cast()])
        }
        _ => {
            let (rows, cols, values) = import_raw_f32(path)?;
            Ok(vec![FftStack::from_values(rows, cols, values)?])
        }
    }
}

fn predict(a: PredictArgs) -> CmdResult {
    check_input(&a.model)?;
    check_input(&a.input)?;
    let model = RegressorModel::<f32>::load(&a.model)?;
    let stacks = load_stacks(&a.input, model.config())?;
    let preds = model.predict(stacks.iter())?;
    let cols: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| p.values().iter().map(|&v| v as f64).collect())
        .collect();
    let names: Vec<String> = (0..cols.len()).map(|i| format!("u{i}")).collect();
    let named: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(cols.iter().map(Vec::as_slice)).collect();
    export_csv(&indexed_table("pixel", &named)?, &a.out)?;
    Ok(())
}

fn estimate(a: EstimateArgs) -> CmdResult {
    let gvd = estimate_layer_gvd(a.lfront, a.lobj, a.bfront, a.bseg2).map_err(|e| usage(e.to_string()))?;
    println!("{gvd:.2}");
    Ok(())
}

fn filter(a: FilterArgs) -> CmdResult {
    let grid = a.grid.grid().map_err(|e| usage(e.to_string()))?;
    check_input(&a.input)?;
    let spectrum = read_spectrum_csv(&a.input, grid)?;
    let filtered = remove_autocorr_peaks(&spectrum, &a.zero).map_err(|e| usage(e.to_string()))?;
    write_spectrum_csv(&filtered, &a.out)?;
    Ok(())
}

fn map(a: MapArgs) -> CmdResult {
    if !a.bscan_dir.is_dir() {
        return Err(Failure::Runtime(Error::io(
            &a.bscan_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&a.bscan_dir)
        .map_err(|e| Error::io(&a.bscan_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Runtime(Error::Format {
            path: a.bscan_dir.clone(),
            reason: "no .csv files".into(),
        }));
    }

    let profiles: Vec<DispersionProfile<f64>> = match &a.model {
        Some(m) => {
            let model = RegressorModel::<f32>::load(m)?;
            let mut stacks = Vec::with_capacity(files.len());
            for f in &files {
                stacks.extend(load_stacks(f, model.config())?);
            }
            model.predict(stacks.iter())?.iter().map(|p| p.cast()).collect()
        }
        None => files
            .iter()
            .map(|f| {
                let t = import_csv(f)?;
                let u = t
                    .column("u")
                    .or_else(|| (t.names().len() >= 2).then(|| t.columns()[1].as_slice()))
                    .ok_or_else(|| Error::Format {
                        path: f.clone(),
                        reason: "missing profile column u".into(),
                    })?;
                Ok(DispersionProfile::from_encoded(u.to_vec()))
            })
            .collect::<Result<_>>()?,
    };
    let map = build_dispersion_map(profiles)?;
    let flat: Vec<f64> = map.rows().iter().flat_map(|r| r.values().iter().copied()).collect();
    export_pgm(map.height(), map.width(), &flat, PgmScale::Unit, &a.out)?;
    let names: Vec<String> = (0..map.width()).map(|i| format!("px{i}")).collect();
    let columns: Vec<Vec<f64>> = (0..map.width())
        .map(|c| map.rows().iter().map(|r| r.values()[c]).collect())
        .collect();
    export_csv(&Table::new(names, columns)?, &a.out.with_extension("csv"))?;
    Ok(())
}
