//! `ICAM` checkpoints, little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `ICAM` |
//! | 4     | `u32` version (1) |
//! | 4     | `u32` config text length |
//! | n     | UTF-8 config text (TOML) |
//! | ...   | parameter tensors as `f32`, declaration order |
//! | ...   | batch-norm running mean then variance per layer, `f32` |

use std::fs;
use std::path::Path;

use super::config::RegressorConfig;
use super::model::{RegressorModel, RunningStats};
use crate::error::{Error, Result};
use crate::io::write_bytes;
use crate::Scalar;

pub const MAGIC: [u8; 4] = *b"ICAM";
pub const VERSION: u32 = 1;

impl<T: Scalar> RegressorModel<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let text = self.config().to_text();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let stats = self.running_stats().iter().flat_map(|s| s.mean.iter().chain(&s.var));
        for v in self.params().iter().flatten().chain(stats) {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let format = |reason: String| Error::Format {
            path: "<checkpoint>".into(),
            reason,
        };
        if bytes.len() < 12 || bytes[..4] != MAGIC {
            return Err(format("not an ICAM checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(format(format!("unsupported checkpoint version {version}")));
        }
        let text_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let text = bytes
            .get(12..12 + text_len)
            .ok_or_else(|| format("config text runs past the end of the file".into()))?;
        let text = std::str::from_utf8(text).map_err(|_| format("config text is not UTF-8".into()))?;
        let cfg = RegressorConfig::from_text(text)?;

        let template = RegressorModel::<T>::new(cfg.clone(), 0)?;
        let mut floats = bytes[12 + text_len..]
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64));
        let payload = bytes.len() - 12 - text_len;
        let expected = 4 * (template.parameter_count()
            + template.running_stats().iter().map(|s| 2 * s.mean.len()).sum::<usize>());
        if payload != expected {
            return Err(format(format!("payload has {payload} bytes, config needs {expected}")));
        }
        let params = template
            .params()
            .iter()
            .map(|p| floats.by_ref().take(p.len()).collect())
            .collect();
        let stats = template
            .running_stats()
            .iter()
            .map(|s| RunningStats {
                mean: floats.by_ref().take(s.mean.len()).collect(),
                var: floats.by_ref().take(s.var.len()).collect(),
            })
            .collect();
        RegressorModel::from_parts(cfg, params, stats)
    }
}

#[cfg(test)]
mod tests {
    use crate::nn::{init_model, RegressorConfig, RegressorModel};

    #[test]
    fn round_trip_preserves_predictions() {
        let cfg = RegressorConfig::desk();
        let m = init_model::<f32>(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.icam");
        m.save(&path).unwrap();
        let back = RegressorModel::<f32>::load(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let m = init_model::<f32>(&RegressorConfig::desk(), 5).unwrap();
        let bytes = m.to_checkpoint_bytes();
        assert!(RegressorModel::<f32>::from_checkpoint_bytes(b"ICAD\x01\0\0\0\0\0\0\0").is_err());
        assert!(RegressorModel::<f32>::from_checkpoint_bytes(&bytes[..bytes.len() - 4]).is_err());
    }
}
