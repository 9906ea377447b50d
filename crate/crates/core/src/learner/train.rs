use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::{LearnerError, SequenceModel};
use crate::nn::{AdamConfig, AdamState, ParamSet};
use crate::rng::{derived_rng, STREAM_SHUFFLE};
use crate::traces::PartialTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop once an epoch's mean per-entry loss falls below this.
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch_size: 20, lr: 1e-3, seed: 0, tolerance: 1e-5 }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean per-entry loss of each completed epoch, measured while training.
    pub loss_curve: Vec<f64>,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

/// Per-batch gradient of a list of items: each item yields a loss sum, a
/// supervised count, and an unnormalized gradient. Items are evaluated in
/// parallel and reduced in index order, so results do not depend on the
/// thread count.
pub(crate) fn batch_gradient<M, T, F>(items: &[&T], f: F) -> (f64, usize, M)
where
    M: ParamSet + Send + Sync,
    T: Sync,
    F: Fn(&T) -> (f64, usize, M) + Sync + Send,
{
    let parts: Vec<(f64, usize, M)> = items.par_iter().map(|t| f(t)).collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut count, mut grads) = iter.next().expect("nonempty batch");
    for (l, c, g) in iter {
        loss += l;
        count += c;
        grads.accumulate(&g);
    }
    (loss, count, grads)
}

/// Adam over shuffled mini-batches of traces. The per-entry loss is averaged
/// over all supervised entries in a batch.
pub fn train(model: &mut SequenceModel, data: &[PartialTrace], cfg: &TrainConfig) -> Result<TrainOutcome, LearnerError> {
    if data.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(LearnerError::Config("batch_size must be positive".into()));
    }
    for t in data {
        model.check_trace(t)?;
    }
    let mut adam = AdamState::new(cfg.adam(), model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::new();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut derived_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PartialTrace> = chunk.iter().map(|&i| &data[i]).collect();
            let m = &*model;
            let (loss, count, mut grads) = batch_gradient(&batch, |t| {
                let mut g = m.zeros_like();
                let (l, c) = m.trace_loss_grad(t, &mut g);
                (l, c, g)
            });
            if !loss.is_finite() || !grads.all_finite() {
                return Err(LearnerError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            epoch_count += count;
            if count == 0 {
                continue;
            }
            grads.scale(1.0 / count as f64);
            adam.step(model, &grads)?;
        }
        let mean = if epoch_count == 0 { 0.0 } else { epoch_loss / epoch_count as f64 };
        loss_curve.push(mean);
        debug!(epoch, loss = mean, "sequence model epoch");
        if mean < cfg.tolerance {
            info!(epoch, loss = mean, "sequence model converged");
            return Ok(TrainOutcome { loss_curve, converged: true });
        }
    }
    info!(epochs = loss_curve.len(), loss = loss_curve.last().copied().unwrap_or(f64::NAN), "sequence model trained");
    Ok(TrainOutcome { loss_curve, converged: false })
}
