use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvBlock, FcNorm, InputScaling, LossKind, RegressorConfig};
use super::model::{Batch, RegressorModel};
use crate::error::{Error, Result};

/// Largest network [`gradient_check`] accepts.
pub const MAX_CHECK_PARAMS: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |a - n| / max(|a|, |n|, 1e-8)` over all parameters.
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub params_checked: usize,
}

/// 4×8 input, one 2-channel batch-normalised conv block, 8 layer-normalised
/// dense units, 8 outputs, MAE loss.
pub fn tiny_config() -> RegressorConfig {
    RegressorConfig {
        input_rows: 4,
        input_cols: 8,
        input_scaling: InputScaling::Raw,
        conv_blocks: vec![ConvBlock {
            channels: 2,
            batch_norm: true,
        }],
        fc_units: 8,
        fc_norm: FcNorm::Layer,
        dropout: 0.0,
        output_len: 8,
        loss: LossKind::Mae,
        ..RegressorConfig::desk()
    }
}

/// Central-difference check of every parameter of a freshly initialised
/// `cfg` network on a seeded batch of three examples. Dropout is disabled and
/// normalisation uses batch statistics without touching running averages.
pub fn gradient_check(cfg: &RegressorConfig, seed: u64, epsilon: f64) -> Result<GradCheckReport> {
    let mut cfg = cfg.clone();
    cfg.dropout = 0.0;
    let mut model = RegressorModel::<f64>::new(cfg, seed)?;
    if model.parameter_count() > MAX_CHECK_PARAMS {
        return Err(Error::Config(format!(
            "gradient check needs at most {MAX_CHECK_PARAMS} parameters, network has {}",
            model.parameter_count()
        )));
    }
    let c = model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let len = 3;
    let batch = Batch {
        inputs: (0..len * c.input_rows * c.input_cols).map(|_| rng.random_range(0.0..1.0)).collect(),
        targets: (0..len * c.output_len).map(|_| rng.random_range(0.05..0.95)).collect(),
        len,
    };
    Ok(check_model_gradients(&mut model, &batch, epsilon))
}

/// Compares backpropagated gradients of `model` on `batch` with central
/// differences of step `epsilon`, in train-mode normalisation.
pub fn check_model_gradients(model: &mut RegressorModel<f64>, batch: &Batch<f64>, epsilon: f64) -> GradCheckReport {
    let (_, analytic) = model.loss_and_gradients(batch, true);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
        params_checked: 0,
    };
    for t in 0..analytic.len() {
        for k in 0..analytic[t].len() {
            let orig = model.params()[t][k];
            model.params_mut()[t][k] = orig + epsilon;
            let up = model.batch_loss(batch, true);
            model.params_mut()[t][k] = orig - epsilon;
            let down = model.batch_loss(batch, true);
            model.params_mut()[t][k] = orig;
            let n = (up - down) / (2.0 * epsilon);
            let a = analytic[t][k];
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
            report.max_abs_numeric = report.max_abs_numeric.max(n.abs());
            report.params_checked += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::Pool;

    #[test]
    fn tiny_network_mae() {
        let r = gradient_check(&tiny_config(), 3, 1e-4).unwrap();
        assert!(r.params_checked <= MAX_CHECK_PARAMS);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn variants() {
        let mut cfg = tiny_config();
        cfg.pool = Pool::Avg;
        cfg.fc_norm = FcNorm::Batch;
        cfg.loss = LossKind::Mse;
        let r = gradient_check(&cfg, 8, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        cfg.loss = LossKind::Bce;
        cfg.fc_norm = FcNorm::None;
        cfg.conv_blocks.push(ConvBlock {
            channels: 3,
            batch_norm: false,
        });
        let r = gradient_check(&cfg, 9, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_network_with_matching_labels_has_zero_gradient() {
        let cfg = tiny_config();
        let mut model = RegressorModel::<f64>::new(cfg.clone(), 1).unwrap();
        for p in model.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let batch = Batch {
            inputs: vec![0.3; 2 * cfg.input_rows * cfg.input_cols],
            targets: vec![0.5; 2 * cfg.output_len],
            len: 2,
        };
        let r = check_model_gradients(&mut model, &batch, 1e-4);
        assert!(r.max_abs_analytic < 1e-4 && r.max_abs_numeric < 1e-4, "{r:?}");
    }

    #[test]
    fn oversized_network_is_refused() {
        assert!(gradient_check(&RegressorConfig::desk(), 0, 1e-4).is_err());
    }
}
