use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FcNorm, InputScaling, LossKind, Pool, RegressorConfig};
use super::layers::{self, ConvShape, Grouping};
use super::optim::OptimizerState;
use crate::analytics::DispersionProfile;
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::ica::FftStack;
use crate::Scalar;

/// Batch-norm running-average momentum: `running = 0.9·running + 0.1·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Running mean and (unbiased) variance of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Inputs and targets of a mini-batch at model precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub len: usize,
}

impl<T: Scalar> Batch<T> {
    pub fn from_examples(cfg: &RegressorConfig, examples: &[&Example]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut inputs = Vec::with_capacity(examples.len() * cfg.input_rows * cfg.input_cols);
        let mut targets = Vec::with_capacity(examples.len() * cfg.output_len);
        for ex in examples {
            check_stack(cfg, &ex.stack)?;
            if ex.profile.len() != cfg.output_len {
                return Err(Error::shape(
                    format!("{}-pixel profile", cfg.output_len),
                    format!("{}-pixel profile", ex.profile.len()),
                ));
            }
            inputs.extend(ex.stack.values().iter().map(|v| T::of(v.as_f64())));
            targets.extend(ex.profile.values().iter().map(|v| T::of(v.as_f64())));
        }
        Ok(Self {
            inputs,
            targets,
            len: examples.len(),
        })
    }
}

fn check_stack<U: Scalar>(cfg: &RegressorConfig, stack: &FftStack<U>) -> Result<()> {
    if (stack.rows(), stack.cols()) != (cfg.input_rows, cfg.input_cols) {
        return Err(Error::shape(
            format!("{}x{} stack", cfg.input_rows, cfg.input_cols),
            format!("{}x{} stack", stack.rows(), stack.cols()),
        ));
    }
    Ok(())
}

/// Convolutional regressor from FFT stacks to encoded dispersion profiles.
///
/// Layout: per conv block `conv3x3 → [batch norm] → ReLU → 2×2 pool`, then
/// `fc_layers × (dense → [norm] → ReLU → dropout)`, then `dense → sigmoid`.
#[derive(Clone, Debug)]
pub struct RegressorModel<T> {
    cfg: RegressorConfig,
    info: Vec<ParamInfo>,
    params: Vec<Vec<T>>,
    stats: Vec<RunningStats<T>>,
    optimizer: OptimizerState<T>,
    mode: Mode,
    rng: ChaCha8Rng,
}

enum Op<T> {
    Conv { input: Vec<T>, shape: ConvShape, p: usize },
    Norm { grouping: Grouping, xhat: Vec<T>, inv_std: Vec<T>, p: usize, fixed: bool },
    Relu { mask: Vec<bool> },
    MaxPool { arg: Vec<u32>, in_len: usize },
    AvgPool { planes: usize, h: usize, w: usize },
    Dense { input: Vec<T>, fin: usize, fout: usize, p: usize },
    Dropout { mask: Vec<T> },
}

struct Pass<T> {
    logits: Vec<T>,
    tape: Vec<Op<T>>,
    /// (mean, biased var, samples per group) of each batch-norm layer.
    batch_stats: Vec<(Vec<T>, Vec<T>, usize)>,
}

/// Builds a model with He-uniform weights (`±sqrt(6/fan_in)`, output layer
/// `±1/sqrt(fan_in)`), zero biases, unit scales and zero shifts.
pub fn init_model<T: Scalar>(cfg: &RegressorConfig, seed: u64) -> Result<RegressorModel<T>> {
    RegressorModel::new(cfg.clone(), seed)
}

impl<T: Scalar> RegressorModel<T> {
    pub fn new(cfg: RegressorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut info = Vec::new();
        let mut params = Vec::new();
        let mut stats = Vec::new();
        let uniform = |rng: &mut ChaCha8Rng, n: usize, bound: f64| -> Vec<T> {
            (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
        };
        let mut push = |name: String, shape: Vec<usize>, values: Vec<T>| {
            info.push(ParamInfo { name, shape });
            params.push(values);
        };
        let norm_pair = |push: &mut dyn FnMut(String, Vec<usize>, Vec<T>), prefix: &str, n: usize| {
            push(format!("{prefix}.gamma"), vec![n], vec![T::one(); n]);
            push(format!("{prefix}.beta"), vec![n], vec![T::zero(); n]);
        };

        let mut cin = 1;
        for (k, b) in cfg.conv_blocks.iter().enumerate() {
            let fan_in = cin * 9;
            let w = uniform(&mut rng, b.channels * fan_in, (6.0 / fan_in as f64).sqrt());
            push(format!("conv{k}.weight"), vec![b.channels, cin, 3, 3], w);
            push(format!("conv{k}.bias"), vec![b.channels], vec![T::zero(); b.channels]);
            if b.batch_norm {
                norm_pair(&mut push, &format!("conv{k}.bn"), b.channels);
                stats.push(RunningStats {
                    mean: vec![T::zero(); b.channels],
                    var: vec![T::one(); b.channels],
                });
            }
            cin = b.channels;
        }
        let mut fin = cfg.flat_features();
        for k in 0..cfg.fc_layers {
            let u = cfg.fc_units;
            let w = uniform(&mut rng, u * fin, (6.0 / fin as f64).sqrt());
            push(format!("fc{k}.weight"), vec![u, fin], w);
            push(format!("fc{k}.bias"), vec![u], vec![T::zero(); u]);
            match cfg.fc_norm {
                FcNorm::Layer => norm_pair(&mut push, &format!("fc{k}.ln"), u),
                FcNorm::Batch => {
                    norm_pair(&mut push, &format!("fc{k}.bn"), u);
                    stats.push(RunningStats {
                        mean: vec![T::zero(); u],
                        var: vec![T::one(); u],
                    });
                }
                FcNorm::None => {}
            }
            fin = u;
        }
        let o = cfg.output_len;
        let w = uniform(&mut rng, o * fin, (1.0 / fin as f64).sqrt());
        push("out.weight".into(), vec![o, fin], w);
        push("out.bias".into(), vec![o], vec![T::zero(); o]);

        let sizes: Vec<usize> = info.iter().map(ParamInfo::len).collect();
        Ok(Self {
            optimizer: OptimizerState::new(cfg.optimizer, &sizes),
            cfg,
            info,
            params,
            stats,
            mode: Mode::Eval,
            rng,
        })
    }

    pub fn config(&self) -> &RegressorConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    /// Parameter tensors in declaration order.
    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn optimizer(&self) -> &OptimizerState<T> {
        &self.optimizer
    }

    pub(crate) fn from_parts(
        cfg: RegressorConfig,
        params: Vec<Vec<T>>,
        stats: Vec<RunningStats<T>>,
    ) -> Result<Self> {
        let mut model = Self::new(cfg, 0)?;
        for (k, (have, want)) in params.iter().zip(&model.info).enumerate() {
            if have.len() != want.len() {
                return Err(Error::shape(
                    format!("{} values for {}", want.len(), want.name),
                    format!("{} in tensor {k}", have.len()),
                ));
            }
        }
        if params.len() != model.params.len() || stats.len() != model.stats.len() {
            return Err(Error::shape(
                format!("{} tensors and {} norm stats", model.params.len(), model.stats.len()),
                format!("{} tensors and {} norm stats", params.len(), stats.len()),
            ));
        }
        model.params = params;
        model.stats = stats;
        Ok(model)
    }

    pub(crate) fn restore(&mut self, params: Vec<Vec<T>>, stats: Vec<RunningStats<T>>) {
        self.params = params;
        self.stats = stats;
    }

    fn scale_input(&self, x: &mut [T]) {
        let per = self.cfg.input_rows * self.cfg.input_cols;
        if self.cfg.input_scaling == InputScaling::Raw {
            return;
        }
        let k = T::of(1000.0);
        let norm = (T::one() + k).ln();
        for ex in x.chunks_mut(per) {
            let m = ex.iter().copied().fold(T::zero(), T::max);
            if m <= T::zero() {
                continue;
            }
            for v in ex.iter_mut() {
                let u = v.max(T::zero()) / m;
                *v = match self.cfg.input_scaling {
                    InputScaling::Log => (T::one() + k * u).ln() / norm,
                    _ => u,
                };
            }
        }
    }

    /// Forward pass over a batch. Batch statistics are used when `train`;
    /// dropout only when an RNG is supplied.
    fn run(&self, input: &[T], batch: usize, train: bool, mut rng: Option<&mut ChaCha8Rng>, record: bool) -> Pass<T> {
        let cfg = &self.cfg;
        let mut x = input.to_vec();
        self.scale_input(&mut x);
        let mut tape = Vec::new();
        let mut batch_stats = Vec::new();
        let (mut c, mut h, mut w) = (1, cfg.input_rows, cfg.input_cols);
        let mut p = 0;
        let mut s = 0;

        let mut normalize = |x: Vec<T>, grouping: Grouping, p: usize, s: &mut usize, uses_stats: bool, tape: &mut Vec<Op<T>>| {
            let fixed = (uses_stats && !train).then(|| (&self.stats[*s].mean[..], &self.stats[*s].var[..]));
            let n = layers::normalize_forward(&x, grouping, &self.params[p], &self.params[p + 1], fixed);
            if uses_stats {
                if train {
                    let count = match grouping {
                        Grouping::Channel { batch, hw, .. } => batch * hw,
                        _ => batch,
                    };
                    batch_stats.push((n.mean, n.var, count));
                }
                *s += 1;
            }
            if record {
                tape.push(Op::Norm {
                    grouping,
                    xhat: n.xhat,
                    inv_std: n.inv_std,
                    p,
                    fixed: fixed.is_some(),
                });
            }
            n.y
        };

        for block in &cfg.conv_blocks {
            let shape = ConvShape {
                batch,
                cin: c,
                cout: block.channels,
                h,
                w,
            };
            let y = layers::conv3x3_forward(&x, shape, &self.params[p], &self.params[p + 1]);
            if record {
                tape.push(Op::Conv { input: x, shape, p });
            }
            x = y;
            p += 2;
            c = block.channels;
            if block.batch_norm {
                x = normalize(x, Grouping::Channel { batch, c, hw: h * w }, p, &mut s, true, &mut tape);
                p += 2;
            }
            let mask = layers::relu_forward(&mut x);
            if record {
                tape.push(Op::Relu { mask });
            }
            let planes = batch * c;
            let (y, arg) = layers::pool_forward(&x, planes, h, w, cfg.pool == Pool::Max);
            if record {
                tape.push(match cfg.pool {
                    Pool::Max => Op::MaxPool { arg, in_len: x.len() },
                    Pool::Avg => Op::AvgPool { planes, h, w },
                });
            }
            x = y;
            h /= 2;
            w /= 2;
        }

        let mut f = c * h * w;
        for _ in 0..cfg.fc_layers {
            let u = cfg.fc_units;
            let y = layers::dense_forward(&x, batch, f, u, &self.params[p], &self.params[p + 1]);
            if record {
                tape.push(Op::Dense {
                    input: x,
                    fin: f,
                    fout: u,
                    p,
                });
            }
            x = y;
            p += 2;
            f = u;
            match cfg.fc_norm {
                FcNorm::Layer => {
                    x = normalize(x, Grouping::Row { batch, f }, p, &mut s, false, &mut tape);
                    p += 2;
                }
                FcNorm::Batch => {
                    x = normalize(x, Grouping::Column { batch, f }, p, &mut s, true, &mut tape);
                    p += 2;
                }
                FcNorm::None => {}
            }
            let mask = layers::relu_forward(&mut x);
            if record {
                tape.push(Op::Relu { mask });
            }
            if let (true, Some(rng)) = (cfg.dropout > 0.0, rng.as_deref_mut()) {
                let keep = 1.0 - cfg.dropout;
                let scale = T::of(1.0 / keep);
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                for (v, &m) in x.iter_mut().zip(&mask) {
                    *v *= m;
                }
                if record {
                    tape.push(Op::Dropout { mask });
                }
            }
        }

        let o = cfg.output_len;
        let logits = layers::dense_forward(&x, batch, f, o, &self.params[p], &self.params[p + 1]);
        if record {
            tape.push(Op::Dense {
                input: x,
                fin: f,
                fout: o,
                p,
            });
        }
        Pass {
            logits,
            tape,
            batch_stats,
        }
    }

    fn backward(&self, tape: Vec<Op<T>>, dlogits: Vec<T>, batch: usize) -> Vec<Vec<T>> {
        let mut grads: Vec<Vec<T>> = self.params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let mut g = dlogits;
        for op in tape.into_iter().rev() {
            match op {
                Op::Dense { input, fin, fout, p } => {
                    let (dw, db) = pair(&mut grads, p);
                    g = layers::dense_backward(&input, batch, fin, fout, &self.params[p], &g, dw, db);
                }
                Op::Conv { input, shape, p } => {
                    let (dw, db) = pair(&mut grads, p);
                    match layers::conv3x3_backward(&input, shape, &self.params[p], &g, dw, db, p != 0) {
                        Some(dx) => g = dx,
                        None => break,
                    }
                }
                Op::Norm {
                    grouping,
                    xhat,
                    inv_std,
                    p,
                    fixed,
                } => {
                    let (dg, db) = pair(&mut grads, p);
                    g = layers::normalize_backward(&g, grouping, &xhat, &inv_std, &self.params[p], dg, db, fixed);
                }
                Op::Relu { mask } => layers::relu_backward(&mut g, &mask),
                Op::MaxPool { arg, in_len } => g = layers::max_pool_backward(&g, &arg, in_len),
                Op::AvgPool { planes, h, w } => g = layers::avg_pool_backward(&g, planes, h, w),
                Op::Dropout { mask } => {
                    for (d, &m) in g.iter_mut().zip(&mask) {
                        *d *= m;
                    }
                }
            }
        }
        grads
    }

    fn commit_stats(&mut self, batch_stats: Vec<(Vec<T>, Vec<T>, usize)>) {
        let m = T::of(BN_MOMENTUM);
        let rest = T::one() - m;
        for (st, (mean, var, count)) in self.stats.iter_mut().zip(batch_stats) {
            let unbias = if count > 1 {
                T::of(count as f64 / (count - 1) as f64)
            } else {
                T::one()
            };
            for (r, b) in st.mean.iter_mut().zip(mean) {
                *r = m * *r + rest * b;
            }
            for (r, b) in st.var.iter_mut().zip(var) {
                *r = m * *r + rest * b * unbias;
            }
        }
    }

    fn gather<'a, U: Scalar>(&self, stacks: impl IntoIterator<Item = &'a FftStack<U>>) -> Result<(Vec<T>, usize)> {
        let mut x = Vec::new();
        let mut n = 0;
        for s in stacks {
            check_stack(&self.cfg, s)?;
            x.extend(s.values().iter().map(|v| T::of(v.as_f64())));
            n += 1;
        }
        Ok((x, n))
    }

    fn to_profiles(&self, logits: &[T]) -> Vec<DispersionProfile<T>> {
        let (lo, hi) = (T::epsilon(), T::one() - T::epsilon());
        logits
            .chunks(self.cfg.output_len)
            .map(|z| DispersionProfile::from_encoded(z.iter().map(|&v| layers::sigmoid(v).max(lo).min(hi)).collect()))
            .collect()
    }

    /// Runs the network on `stacks`. In train mode batch statistics and
    /// dropout are active; running statistics are left untouched.
    pub fn forward<'a, U: Scalar>(
        &mut self,
        stacks: impl IntoIterator<Item = &'a FftStack<U>>,
        mode: Mode,
    ) -> Result<Vec<DispersionProfile<T>>> {
        let (x, n) = self.gather(stacks)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let pass = match mode {
            Mode::Eval => self.run(&x, n, false, None, false),
            Mode::Train => {
                let mut rng = self.rng.clone();
                let pass = self.run(&x, n, true, Some(&mut rng), false);
                self.rng = rng;
                pass
            }
        };
        Ok(self.to_profiles(&pass.logits))
    }

    /// Eval-mode predictions in input order, `batch_size` stacks at a time.
    pub fn predict<'a, U: Scalar>(&self, stacks: impl IntoIterator<Item = &'a FftStack<U>>) -> Result<Vec<DispersionProfile<T>>> {
        let all: Vec<&FftStack<U>> = stacks.into_iter().collect();
        let mut out = Vec::with_capacity(all.len());
        for chunk in all.chunks(self.cfg.batch_size) {
            let (x, n) = self.gather(chunk.iter().copied())?;
            out.extend(self.to_profiles(&self.run(&x, n, false, None, false).logits));
        }
        Ok(out)
    }

    /// Mean loss of `batch` and its gradient. `train` selects batch
    /// statistics; dropout is off and running statistics are not updated.
    pub fn loss_and_gradients(&self, batch: &Batch<T>, train: bool) -> (T, Vec<Vec<T>>) {
        let pass = self.run(&batch.inputs, batch.len, train, None, true);
        let (loss, dz) = loss_and_grad(self.cfg.loss, &pass.logits, &batch.targets);
        (loss, self.backward(pass.tape, dz, batch.len))
    }

    /// Mean loss without gradients; same switches as [`Self::loss_and_gradients`].
    pub fn batch_loss(&self, batch: &Batch<T>, train: bool) -> T {
        let pass = self.run(&batch.inputs, batch.len, train, None, false);
        loss_and_grad(self.cfg.loss, &pass.logits, &batch.targets).0
    }

    /// One optimisation step in train mode: forward with dropout, backward,
    /// optimizer update. Returns the loss before the update.
    pub fn train_step_batch(&mut self, batch: &Batch<T>) -> Result<T> {
        if batch.len == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut rng = self.rng.clone();
        let pass = self.run(&batch.inputs, batch.len, true, Some(&mut rng), true);
        let (loss, dz) = loss_and_grad(self.cfg.loss, &pass.logits, &batch.targets);
        if !loss.is_finite() {
            let bad = self.params.iter().zip(&self.info).find(|(p, _)| p.iter().any(|v| !v.is_finite()));
            return Err(Error::NonFiniteLoss {
                step: self.optimizer.step + 1,
                detail: match bad {
                    Some((_, info)) => format!("loss {loss}, parameter {} is non-finite", info.name),
                    None => format!("loss {loss} with finite parameters"),
                },
            });
        }
        self.rng = rng;
        let grads = self.backward(pass.tape, dz, batch.len);
        self.optimizer.apply(&mut self.params, &grads, self.cfg.learning_rate);
        self.commit_stats(pass.batch_stats);
        Ok(loss)
    }

    pub fn train_step(&mut self, examples: &[&Example]) -> Result<T> {
        let batch = Batch::from_examples(&self.cfg, examples)?;
        self.train_step_batch(&batch)
    }

    /// Eval-mode loss over `examples`, averaged per example.
    pub fn evaluate(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("no examples to evaluate".into()));
        }
        let mut total = 0.0;
        for chunk in examples.chunks(self.cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().collect();
            let batch = Batch::from_examples(&self.cfg, &refs)?;
            total += self.batch_loss(&batch, false).as_f64() * chunk.len() as f64;
        }
        Ok(total / examples.len() as f64)
    }

    /// Eval-mode mean absolute error of the encoded predictions.
    pub fn mae(&self, examples: &[Example]) -> Result<f64> {
        let preds = self.predict(examples.iter().map(|e| &e.stack))?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (p, e) in preds.iter().zip(examples) {
            for (a, b) in p.values().iter().zip(e.profile.values()) {
                sum += (a.as_f64() - b.as_f64()).abs();
                n += 1;
            }
        }
        Ok(if n == 0 { 0.0 } else { sum / n as f64 })
    }
}

fn pair<T>(v: &mut [Vec<T>], p: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = v.split_at_mut(p + 1);
    (&mut a[p], &mut b[0])
}

/// Mean loss over all outputs and its gradient with respect to the logits.
fn loss_and_grad<T: Scalar>(kind: LossKind, logits: &[T], targets: &[T]) -> (T, Vec<T>) {
    let n = T::from_usize(logits.len()).unwrap();
    let mut loss = T::zero();
    let mut dz = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        let y = layers::sigmoid(z);
        let slope = y * (T::one() - y);
        match kind {
            LossKind::Mae => {
                let d = y - t;
                loss += d.abs();
                let sign = if d > T::zero() {
                    T::one()
                } else if d < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                dz.push(sign * slope / n);
            }
            LossKind::Mse => {
                let d = y - t;
                loss += d * d;
                dz.push((d + d) * slope / n);
            }
            LossKind::Bce => {
                loss += z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln();
                dz.push((y - t) / n);
            }
        }
    }
    (loss / n, dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::ConvBlock;

    fn stack(rows: usize, cols: usize, seed: u64) -> FftStack<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FftStack::from_values(rows, cols, (0..rows * cols).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn example(cfg: &RegressorConfig, seed: u64) -> Example {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        Example {
            stack: stack(cfg.input_rows, cfg.input_cols, seed),
            profile: DispersionProfile::from_encoded((0..cfg.output_len).map(|_| rng.random_range(0.1f32..0.9)).collect()),
        }
    }

    fn small() -> RegressorConfig {
        RegressorConfig {
            input_rows: 8,
            input_cols: 16,
            conv_blocks: vec![ConvBlock {
                channels: 4,
                batch_norm: true,
            }],
            fc_units: 32,
            output_len: 16,
            ..RegressorConfig::desk()
        }
    }

    #[test]
    fn desk_parameter_count() {
        let m = init_model::<f32>(&RegressorConfig::desk(), 1).unwrap();
        let conv1 = 1 * 8 * 9 + 8 + 2 * 8;
        let conv2 = 8 * 16 * 9 + 16 + 2 * 16;
        let fc = 2048 * 256 + 256 + 2 * 256;
        let out = 256 * 128 + 128;
        assert_eq!(m.parameter_count(), conv1 + conv2 + fc + out);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model::<f32>(&small(), 9).unwrap();
        let b = init_model::<f32>(&small(), 9).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.mode(), Mode::Eval);
        let mut bad = small();
        bad.dropout = 0.6;
        assert!(init_model::<f32>(&bad, 9).is_err());
    }

    #[test]
    fn outputs_are_open_unit_interval_and_eval_is_repeatable() {
        let mut m = init_model::<f32>(&small(), 3).unwrap();
        let s = stack(8, 16, 5);
        let a = m.forward([&s], Mode::Eval).unwrap();
        let b = m.forward([&s], Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 16);
        assert!(a[0].values().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_input_gives_constant_output() {
        let m = init_model::<f64>(&small(), 4).unwrap();
        let zero = FftStack::from_values(8, 16, vec![0.0f32; 128]).unwrap();
        let out = m.predict([&zero]).unwrap();
        let v = out[0].values();
        assert!(v.iter().all(|&x| (x - v[0]).abs() < 1e-15), "{v:?}");
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = init_model::<f32>(&small(), 4).unwrap();
        let wrong = stack(8, 15, 1);
        assert!(matches!(m.predict([&wrong]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn predict_preserves_order() {
        let m = init_model::<f32>(&small(), 4).unwrap();
        let stacks: Vec<FftStack<f32>> = (0..5).map(|i| stack(8, 16, i)).collect();
        let fwd = m.predict(stacks.iter()).unwrap();
        let rev = m.predict(stacks.iter().rev()).unwrap();
        for (a, b) in fwd.iter().zip(rev.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut cfg = small();
        cfg.learning_rate = 0.0;
        cfg.dropout = 0.0;
        let mut m = init_model::<f32>(&cfg, 2).unwrap();
        let exs: Vec<Example> = (0..4).map(|i| example(&cfg, i)).collect();
        let refs: Vec<&Example> = exs.iter().collect();
        let before = m.params().to_vec();
        let l1 = m.train_step(&refs).unwrap();
        let l2 = m.train_step(&refs).unwrap();
        assert_eq!(before, m.params());
        assert_eq!(l1, l2);
    }

    #[test]
    fn identical_examples_match_single_example_gradient() {
        let mut cfg = small();
        cfg.conv_blocks[0].batch_norm = false;
        let m = init_model::<f64>(&cfg, 2).unwrap();
        let ex = example(&cfg, 7);
        let one = Batch::from_examples(&cfg, &[&ex]).unwrap();
        let three = Batch::from_examples(&cfg, &[&ex, &ex, &ex]).unwrap();
        let (la, ga) = m.loss_and_gradients(&one, true);
        let (lb, gb) = m.loss_and_gradients(&three, true);
        assert!((la - lb).abs() < 1e-12);
        for (a, b) in ga.iter().flatten().zip(gb.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn fixed_batch_loss_decreases() {
        let mut cfg = small();
        cfg.learning_rate = 1e-3;
        cfg.dropout = 0.0;
        let mut m = init_model::<f32>(&cfg, 11).unwrap();
        let exs: Vec<Example> = (0..4).map(|i| example(&cfg, 100 + i)).collect();
        let refs: Vec<&Example> = exs.iter().collect();
        let losses: Vec<f32> = (0..200).map(|_| m.train_step(&refs).unwrap()).collect();
        for w in 0..4 {
            let (a, b) = (losses[w * 50], losses[w * 50 + 49]);
            assert!(b < a, "window {w}: {a} -> {b}");
        }
    }

    #[test]
    fn train_mode_updates_running_stats() {
        let cfg = small();
        let mut m = init_model::<f32>(&cfg, 2).unwrap();
        let ex = example(&cfg, 1);
        m.train_step(&[&ex]).unwrap();
        assert!(m.running_stats()[0].mean.iter().any(|&v| v != 0.0));
    }
}
