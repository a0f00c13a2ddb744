//! Epoch/batch training loop and evaluation metrics.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::{embed_window, EmbeddingTable};
use crate::error::{Error, Result};
use crate::ingest::Window;
use crate::net::{adam_step, loss_and_backward, predict_batch, AdamState, Dropout, ModelParams, NetConfig};
use crate::types::{argmax, one_hot, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, dropout active.
    pub train_loss: f64,
    /// Accuracy on the training batches as they were fitted.
    pub train_acc: f64,
    pub val_acc: f64,
    pub wall_time_s: f64,
}

/// Embeds every window and attaches its one-hot target.
pub fn samples_from_windows(windows: &[Window], table: &EmbeddingTable, classes: usize) -> Result<Vec<Sample>> {
    windows
        .iter()
        .map(|w| {
            Sample::new(
                embed_window(&w.tokens, table)?,
                one_hot(w.label, classes)?,
                w.occurrence_id.clone(),
                w.start,
            )
        })
        .collect()
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 1) | stream);
    rng
}

/// Trains for exactly `cfg.epochs` epochs. Each epoch reshuffles the training
/// set with a permutation seeded by `(cfg.seed, epoch)` and takes one Adam
/// step per batch; the last batch may be short.
pub fn train(
    mut model: ModelParams,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &NetConfig,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    let history = train_with(&mut model, train_set, val_set, cfg, |_| {})?;
    Ok((model, history))
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    model: &mut ModelParams,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &NetConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Training("training and validation sets must be non-empty".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let mut state = AdamState::new(model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch, 0));
        let mut drop_rng = epoch_rng(cfg.seed, epoch, 1);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let dropout = (cfg.dropout_p > 0.0)
                .then(|| Dropout::sample(&mut drop_rng, batch.len(), model.cfg.flat_len(), cfg.dropout_p));
            let res = loss_and_backward(model, &batch, dropout.as_ref()).map_err(|e| match e {
                Error::Numeric { sample } => Error::Numeric { sample: chunk[sample] },
                other => other,
            })?;
            adam_step(model, &res.grads, &mut state, cfg.lr);
            loss_sum += res.loss * batch.len() as f64;
            correct += res.correct;
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc: accuracy(model, val_set)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(history)
}

const EVAL_CHUNK: usize = 256;

/// Inference-mode argmax predictions, in sample order.
pub fn predictions(model: &ModelParams, samples: &[Sample]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let views: Vec<ArrayView2<'_, f64>> = chunk.iter().map(|s| s.window.view()).collect();
        let probs = predict_batch(model, &views)?;
        out.extend(probs.rows().into_iter().map(|r| argmax(r.as_slice().expect("row"))));
    }
    Ok(out)
}

pub fn accuracy(model: &ModelParams, samples: &[Sample]) -> Result<f64> {
    let pred = predictions(model, samples)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.class_index()).count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes that were never predicted.
    pub per_class_precision: Vec<Option<f64>>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    /// Builds the report from `(true, predicted)` class pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, classes: usize) -> Result<Self> {
        let mut confusion = vec![vec![0usize; classes]; classes];
        let mut n = 0usize;
        for (t, p) in pairs {
            if t >= classes || p >= classes {
                return Err(Error::Label(format!("class pair ({t}, {p}) outside {classes} classes")));
            }
            confusion[t][p] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Label("nothing to evaluate".into()));
        }
        let trace: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class_precision = (0..classes)
            .map(|c| {
                let col: usize = confusion.iter().map(|row| row[c]).sum();
                (col > 0).then(|| confusion[c][c] as f64 / col as f64)
            })
            .collect();
        Ok(EvalReport {
            accuracy: trace as f64 / n as f64,
            per_class_precision,
            confusion,
        })
    }

    /// Mean precision over classes that were predicted at least once.
    pub fn macro_precision(&self) -> Option<f64> {
        let defined: Vec<f64> = self.per_class_precision.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn write_confusion_csv<W: Write>(&self, mut w: W, labels: &[u32]) -> Result<()> {
        let head: Vec<String> = labels.iter().map(|l| format!("pred_{l}")).collect();
        writeln!(w, "true,{}", head.join(","))?;
        for (l, row) in labels.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            writeln!(w, "{l},{}", cells.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples   {}", self.total())?;
        writeln!(f, "accuracy  {:.4}", self.accuracy)?;
        match self.macro_precision() {
            Some(m) => writeln!(f, "precision {m:.4} (macro)")?,
            None => writeln!(f, "precision n/a")?,
        }
        for (c, p) in self.per_class_precision.iter().enumerate() {
            match p {
                Some(p) => writeln!(f, "  class {c:>2}: {p:.4}")?,
                None => writeln!(f, "  class {c:>2}: never predicted")?,
            }
        }
        Ok(())
    }
}

pub fn evaluate(model: &ModelParams, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Label("nothing to evaluate".into()));
    }
    let pred = predictions(model, samples)?;
    EvalReport::from_pairs(samples.iter().map(Sample::class_index).zip(pred), model.cfg.classes)
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_acc,wall_time_s";

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(w, "{},{:?},{:?},{:?},{:.3}", r.epoch, r.train_loss, r.train_acc, r.val_acc, r.wall_time_s)?;
    }
    Ok(())
}
