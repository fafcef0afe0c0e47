//! Mini-batch training with Adam and dev-based model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{EncodedExample, Model, ModelSpec, NUM_CLASSES};
use crate::params::{adam_step, AdamConfig};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Per-class loss weights; uniform when empty.
    pub class_weights: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 100,
            lr: 1e-3,
            seed: 0,
            class_weights: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !self.class_weights.is_empty()
            && (self.class_weights.len() != NUM_CLASSES
                || self.class_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)))
        {
            return Err(Error::Config("class_weights needs 6 positive values".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        if self.class_weights.is_empty() {
            vec![1.0; NUM_CLASSES]
        } else {
            self.class_weights.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
    pub dev_weighted_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub epochs: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// One Adam update on a batch; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    batch: &[&EncodedExample],
    class_weights: &[f64],
    adam: &AdamConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    model.store.zero_grad();
    let (loss, grads) = {
        let mut tape = Tape::with_params(&model.store);
        let loss = model.net.loss(&mut tape, batch, class_weights, Some(rng))?;
        tape.backward(loss)?;
        (tape.values(loss)[0], tape.param_grads())
    };
    if !loss.is_finite() {
        return Err(Error::State(format!("non-finite training loss {loss}")));
    }
    grads.accumulate_into(&mut model.store)?;
    adam_step(&mut model.store, adam)?;
    Ok(loss)
}

/// Argmax predictions scored against the examples' labels.
pub fn evaluate(model: &Model, examples: &[EncodedExample]) -> Result<EvalReport> {
    let gold = examples
        .iter()
        .map(|e| e.label.ok_or_else(|| Error::Data("evaluation example without a label".into())))
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<usize> = model.predict(examples)?.iter().map(|d| d.argmax()).collect();
    EvalReport::from_predictions(&gold, &predicted, NUM_CLASSES)
}

/// Trains `model` and returns the parameters of the
/// epoch with the best dev weighted F1 (the last epoch when `dev` is empty).
pub fn fit(
    mut model: Model,
    cfg: &TrainConfig,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if let Some(i) = train.iter().position(|e| e.label.is_none()) {
        return Err(Error::Data(format!("training example {i} has no label")));
    }
    let weights = cfg.weights();
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, usize::MAX));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch)));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train[i]).collect();
            total += train_step(&mut model, &batch, &weights, &adam, &mut dropout_rng)?;
            batches += 1;
        }
        let report = if dev.is_empty() {
            None
        } else {
            Some(evaluate(&model, dev)?)
        };
        let log = EpochLog {
            epoch,
            loss: total / batches as f64,
            dev_accuracy: report.as_ref().map(|r| r.accuracy),
            dev_weighted_f1: report.as_ref().map(|r| r.weighted.f1),
        };
        on_epoch(&log);
        logs.push(log);
        if let Some(r) = report {
            if best.as_ref().is_none_or(|(f, _, _)| r.weighted.f1 > *f) {
                best = Some((r.weighted.f1, epoch, model.clone()));
            }
        }
    }
    let (best_epoch, model) = match best {
        Some((_, e, m)) => (e, m),
        None => (cfg.epochs, model),
    };
    Ok(TrainOutcome {
        model,
        epochs: logs,
        best_epoch,
    })
}

/// Builds a fresh model from `spec` and trains it.
pub fn train(
    spec: ModelSpec,
    content_vocab: usize,
    pos_vocab: usize,
    cfg: &TrainConfig,
    train: &[EncodedExample],
    dev: &[EncodedExample],
) -> Result<TrainOutcome> {
    fit(Model::build(spec, content_vocab, pos_vocab)?, cfg, train, dev, |_| {})
}

/// Mean weighted loss without dropout.
pub fn mean_loss(model: &Model, examples: &[EncodedExample], class_weights: &[f64]) -> Result<f64> {
    let refs: Vec<&EncodedExample> = examples.iter().collect();
    let mut tape = Tape::with_params(&model.store);
    let loss = model.net.loss(&mut tape, &refs, class_weights, None)?;
    Ok(tape.values(loss)[0])
}
