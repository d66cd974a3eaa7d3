use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FcNorm {
    Batch,
    Layer,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Mse,
    Bce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
    Sgd,
}

/// Per-stack rescaling applied before the first convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    Raw,
    /// Divide by the stack maximum.
    Max,
    /// `ln(1 + 1000·x/max) / ln(1001)`, compressing the low-order bins.
    Log,
}

/// 3×3 same-padded convolution, optionally batch-normalised, then ReLU and
/// 2×2 pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub channels: usize,
    pub batch_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    pub input_scaling: InputScaling,
    pub conv_blocks: Vec<ConvBlock>,
    pub pool: Pool,
    pub fc_layers: usize,
    pub fc_units: usize,
    pub fc_norm: FcNorm,
    pub dropout: f64,
    pub output_len: usize,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
}

impl RegressorConfig {
    /// Published hyper-parameters on a 16×128 input with two conv blocks and
    /// 256 dense units.
    pub fn desk() -> Self {
        Self {
            input_rows: 16,
            input_cols: 128,
            input_scaling: InputScaling::Log,
            conv_blocks: vec![
                ConvBlock {
                    channels: 8,
                    batch_norm: true,
                },
                ConvBlock {
                    channels: 16,
                    batch_norm: true,
                },
            ],
            pool: Pool::Max,
            fc_layers: 1,
            fc_units: 256,
            fc_norm: FcNorm::Layer,
            dropout: 0.1,
            output_len: 128,
            loss: LossKind::Mae,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            batch_size: 16,
        }
    }

    /// Full-size geometry: 50×1024 stacks, 14336 dense units. Expressible,
    /// but far too slow to train on a CPU.
    pub fn full_scale() -> Self {
        let block = |channels| ConvBlock {
            channels,
            batch_norm: true,
        };
        Self {
            input_rows: 50,
            input_cols: 1024,
            conv_blocks: vec![block(64), block(128), block(256), block(512), block(512)],
            fc_units: 14336,
            output_len: 1024,
            ..Self::desk()
        }
    }

    /// Spatial size after the conv blocks.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let mut c = 1;
        let (mut h, mut w) = (self.input_rows, self.input_cols);
        for b in &self.conv_blocks {
            c = b.channels;
            h /= 2;
            w /= 2;
        }
        (c, h, w)
    }

    pub fn flat_features(&self) -> usize {
        let (c, h, w) = self.feature_shape();
        c * h * w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=0.5).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 0.5]", self.dropout));
        }
        if self.fc_layers == 0 {
            return bad("at least one fully connected layer is required".into());
        }
        if self.fc_units == 0 || self.output_len == 0 || self.batch_size == 0 {
            return bad("fc_units, output_len and batch_size must be positive".into());
        }
        if self.input_rows == 0 || self.input_cols == 0 {
            return bad("input dimensions must be positive".into());
        }
        if self.conv_blocks.iter().any(|b| b.channels == 0) {
            return bad("conv blocks need at least one channel".into());
        }
        let (_, h, w) = self.feature_shape();
        if h == 0 || w == 0 {
            return bad(format!(
                "{} pooling stages collapse a {}x{} input",
                self.conv_blocks.len(),
                self.input_rows,
                self.input_cols
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
