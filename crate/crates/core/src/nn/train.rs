use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Batch, Mode, RegressorModel};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::io::Table;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub shuffle_seed: u64,
    /// Written whenever the monitored loss improves.
    pub checkpoint: Option<PathBuf>,
    /// Reload the best epoch's weights at the end.
    pub restore_best: bool,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            shuffle_seed: 0,
            checkpoint: None,
            restore_best: true,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` without a validation set.
    pub val_loss: Option<f64>,
    pub seconds: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss (training loss without a
    /// validation set).
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,seconds`; a missing validation loss is NaN.
    pub fn to_table(&self) -> Table {
        let col = |f: &dyn Fn(&EpochRecord) -> f64| self.epochs.iter().map(f).collect::<Vec<f64>>();
        Table::new(
            ["epoch", "train_loss", "val_loss", "seconds"].map(String::from).to_vec(),
            vec![
                col(&|r| r.epoch as f64),
                col(&|r| r.train_loss),
                col(&|r| r.val_loss.unwrap_or(f64::NAN)),
                col(&|r| r.seconds),
            ],
        )
        .expect("columns have equal length")
    }
}

/// Mini-batch training over `train_set` with a seeded shuffle per epoch.
pub fn train<T: Scalar>(
    model: &mut RegressorModel<T>,
    train_set: &[Example],
    val_set: &[Example],
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let bs = model.config().batch_size;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, RegressorModel<T>)> = None;
    model.set_mode(Mode::Train);

    for epoch in 1..=opts.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0u64;
        for chunk in order.chunks(bs) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = Batch::from_examples(model.config(), &refs)?;
            total += model.train_step_batch(&batch)?.as_f64() * chunk.len() as f64;
            steps += 1;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(model.evaluate(val_set)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
            steps,
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch}: train {train_loss:.5} val {} ({:.1}s)",
                val_loss.map_or("-".into(), |v| format!("{v:.5}")),
                record.seconds
            );
        }
        history.epochs.push(record);

        let monitored = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            history.best_epoch = Some(epoch);
            if let Some(path) = &opts.checkpoint {
                model.save(path)?;
            }
            best = Some((monitored, model.clone()));
        }
    }

    if let (true, Some((_, snapshot))) = (opts.restore_best, best) {
        model.restore(snapshot.params().to_vec(), snapshot.running_stats().to_vec());
    }
    model.set_mode(Mode::Eval);
    Ok(history)
}
