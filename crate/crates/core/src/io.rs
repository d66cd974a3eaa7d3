//! File exports: CSV tables, spectra, binary PGM images and raw `f32` dumps.
//! Every writer goes through [`atomic_write`], so a failed command never
//! leaves a partial file behind.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::optics::{SpectralGrid, Spectrum};
use crate::Scalar;

/// Runs `fill` against a temporary file next to `path` and renames it into
/// place on success. The temporary file is removed on failure.
pub fn atomic_write<R>(path: &Path, fill: impl FnOnce(&mut File) -> Result<R>) -> Result<R> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let mut file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let out = fill(&mut file).and_then(|r| {
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        Ok(r)
    });
    drop(file);
    match out {
        Ok(r) => {
            fs::rename(&tmp, path).map_err(|e| {
                let _ = fs::remove_file(&tmp);
                Error::io(path, e)
            })?;
            Ok(r)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, |f| f.write_all(bytes).map_err(|e| Error::io(path, e)))
}

/// Named numeric columns of equal length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::shape(
                format!("{} columns", names.len()),
                format!("{} columns", columns.len()),
            ));
        }
        if let Some(first) = columns.first() {
            if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != first.len()) {
                return Err(Error::shape(
                    format!("{} rows in every column", first.len()),
                    format!("{} rows in column {:?}", c.len(), names[i]),
                ));
            }
        }
        Ok(Self { names, columns })
    }

    /// Header-only table.
    pub fn empty(names: &[&str]) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            columns: vec![Vec::new(); names.len()],
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// CSV text: header row, LF line endings, shortest round-trip floats.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(&self.names).map_err(csv_err)?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| c[r].to_string()))
                .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

pub fn export_csv(table: &Table, path: &Path) -> Result<()> {
    write_bytes(path, &table.to_csv()?)
}

pub fn import_csv(path: &Path) -> Result<Table> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_slice());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format(e.to_string()))?;
        for (c, field) in rec.iter().enumerate() {
            let v = field
                .parse::<f64>()
                .map_err(|_| format(format!("row {}: {field:?} is not a number", line + 1)))?;
            columns[c].push(v);
        }
    }
    Table::new(names, columns).map_err(|e| format(e.to_string()))
}

/// Two-column `sample_index,intensity` CSV.
pub fn write_spectrum_csv<T: Scalar>(spectrum: &Spectrum<T>, path: &Path) -> Result<()> {
    let table = Table::new(
        vec!["sample_index".into(), "intensity".into()],
        vec![
            (0..spectrum.len()).map(|i| i as f64).collect(),
            spectrum.values().iter().map(|v| v.as_f64()).collect(),
        ],
    )?;
    export_csv(&table, path)
}

/// Reads a spectrum CSV; the intensity column is linearly resampled when its
/// length differs from the grid (e.g. 2048-point spectrometer output).
pub fn read_spectrum_csv<T: Scalar>(path: &Path, grid: Arc<SpectralGrid<T>>) -> Result<Spectrum<T>> {
    let table = import_csv(path)?;
    let intensity = table
        .column("intensity")
        .or_else(|| (table.names().len() == 2).then(|| table.columns()[1].as_slice()))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: "missing intensity column".into(),
        })?;
    if intensity.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "no samples".into(),
        });
    }
    let samples: Vec<T> = intensity.iter().map(|&v| T::of(v)).collect();
    Spectrum::resampled(&samples, grid)
}

/// Grey-level mapping for PGM export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmScale {
    /// Stretch min..max onto 0..255; a constant image maps to 128.
    MinMax,
    /// `round(255·u)` for values already in `[0, 1]`.
    Unit,
}

/// Binary P5 image of a row-major `rows × cols` matrix.
pub fn encode_pgm(rows: usize, cols: usize, values: &[f64], scale: PgmScale) -> Result<Vec<u8>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("cannot export an empty image".into()));
    }
    if values.len() != rows * cols {
        return Err(Error::shape(format!("{rows}x{cols} values"), values.len()));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    match scale {
        PgmScale::MinMax => {
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if hi > lo {
                out.extend(values.iter().map(|&v| (255.0 * (v - lo) / (hi - lo)).round() as u8));
            } else {
                out.extend(std::iter::repeat_n(128u8, values.len()));
            }
        }
        PgmScale::Unit => out.extend(values.iter().map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)),
    }
    Ok(out)
}

pub fn export_pgm(rows: usize, cols: usize, values: &[f64], scale: PgmScale, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pgm(rows, cols, values, scale)?)
}

/// Sidecar path of a raw dump: `<path>.hdr`.
pub fn raw_header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Row-major `f32` little-endian dump plus a `rows`/`cols` text sidecar.
pub fn export_raw_f32(rows: usize, cols: usize, values: &[f32], path: &Path) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::shape(format!("{rows}x{cols} values"), values.len()));
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(path, &bytes)?;
    write_bytes(
        &raw_header_path(path),
        format!("rows {rows}\ncols {cols}\ndtype f32le\n").as_bytes(),
    )
}

/// Reads a dump written by [`export_raw_f32`].
pub fn import_raw_f32(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let hdr = raw_header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let format = |p: &Path, reason: String| Error::Format {
        path: p.to_path_buf(),
        reason,
    };
    let field = |key: &str| -> Result<usize> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).map(str::trim))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format(&hdr, format!("missing {key}")))
    };
    let (rows, cols) = (field("rows")?, field("cols")?);
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * rows * cols {
        return Err(format(
            path,
            format!("{} bytes, expected {} for {rows}x{cols}", bytes.len(), 4 * rows * cols),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((rows, cols, values))
}
