//! The action-selection network: trained on (earlier state, later state)
//! pairs from estimated traces to recommend the action taken at the earlier
//! state, then queried with (current state, goal) during planning.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::learner::{batch_gradient, EstimatedTrace, LearnerError, SequenceModel, TrainOutcome};
use crate::nn::{sigmoid, Activation, AdamConfig, AdamState, Checkpoint, LayerSpec, Mlp, MlpSpec, ParamSet, TensorRef};
use crate::rng::{derived_rng, STREAM_INIT, STREAM_PAIRS, STREAM_SHUFFLE};
use crate::strips::{ActionId, State};

/// Default pair budget per trace, as a multiple of its length.
pub const DEFAULT_PAIR_BUDGET: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub from: State,
    pub to: State,
    pub from_vector: Vec<f64>,
    pub to_vector: Vec<f64>,
    /// Actions taken at `from` on the way to `to`, ascending.
    pub labels: Vec<ActionId>,
}

impl PairExample {
    pub fn input(&self) -> Vec<f64> {
        [self.from_vector.as_slice(), self.to_vector.as_slice()].concat()
    }
}

/// Index pairs `(i, j)`, `i < j`, kept from a trace of `n` steps. Adjacent
/// and goal pairs are always kept; the rest are sampled uniformly so that
/// at most `budget_factor * n` pairs remain.
pub fn select_pairs(n: usize, budget_factor: usize, seed: u64, trace_index: u64) -> Vec<(usize, usize)> {
    let mut keep: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i + 1)).chain((0..n).map(|i| (i, n))).collect();
    let rest: Vec<(usize, usize)> =
        (0..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).filter(|p| !keep.contains(p)).collect();
    let room = (budget_factor * n).saturating_sub(keep.len());
    if rest.len() <= room {
        keep.extend(rest);
    } else {
        let mut rng = derived_rng(seed, STREAM_PAIRS, trace_index);
        keep.extend(sample(&mut rng, rest.len(), room).into_iter().map(|i| rest[i]));
    }
    keep.into_iter().collect()
}

/// Pairs of decoded states from each trace, labelled with the action taken
/// at the earlier state. Pairs with identical states are merged by label
/// union; the output is ordered by `(from, to)`.
pub fn build_pairs(traces: &[EstimatedTrace], model: &SequenceModel, budget_factor: usize, seed: u64) -> Vec<PairExample> {
    let mut merged: BTreeMap<(&State, &State), BTreeSet<ActionId>> = BTreeMap::new();
    for (ti, t) in traces.iter().enumerate() {
        for (i, j) in select_pairs(t.actions.len(), budget_factor, seed, ti as u64) {
            merged.entry((&t.decoded_states[i], &t.decoded_states[j])).or_default().insert(t.actions[i]);
        }
    }
    let mut vectors: BTreeMap<&State, Vec<f64>> = BTreeMap::new();
    for (from, to) in merged.keys() {
        for s in [*from, *to] {
            vectors.entry(s).or_insert_with(|| model.bridge(s));
        }
    }
    merged
        .into_iter()
        .map(|((from, to), labels)| PairExample {
            from: from.clone(),
            to: to.clone(),
            from_vector: vectors[from].clone(),
            to_vector: vectors[to].clone(),
            labels: labels.into_iter().collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            hidden: vec![150, 150, 150],
            activation: Activation::Relu,
            epochs: 60,
            batch_size: 20,
            lr: 1e-3,
            seed: 0,
            tolerance: 1e-5,
        }
    }
}

/// Maps a concatenated pair of state vectors to one logit per action.
/// Confidences are the sigmoids of the logits.
///
/// Inputs are standardized per feature before the network. Learned state
/// vectors share a large state-independent component, so raw inputs for
/// different states are nearly identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorNet {
    k: usize,
    net: Mlp,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
}

impl SelectorNet {
    pub fn new(k: usize, num_actions: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec { out: h, layer_norm: true, activation }).collect();
        layers.push(LayerSpec { out: num_actions, layer_norm: false, activation: Activation::Identity });
        let spec = MlpSpec { input: 2 * k, layers };
        SelectorNet {
            k,
            net: Mlp::new(spec, &mut derived_rng(seed, STREAM_INIT, 1)),
            input_shift: vec![0.0; 2 * k],
            input_scale: vec![1.0; 2 * k],
        }
    }

    pub fn zeros_like(&self) -> Self {
        SelectorNet { net: self.net.zeros_like(), ..self.clone() }
    }

    /// Sets the input standardization to the per-feature mean and inverse
    /// standard deviation over `pairs`. Constant features get scale 1.
    pub fn fit_input_scaling(&mut self, pairs: &[PairExample]) {
        let dim = 2 * self.k;
        if pairs.is_empty() {
            self.input_shift = vec![0.0; dim];
            self.input_scale = vec![1.0; dim];
            return;
        }
        let n = pairs.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in pairs {
            for (m, x) in mean.iter_mut().zip(p.input()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for p in pairs {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(p.input()) {
                *v += (x - m) * (x - m) / n;
            }
        }
        self.input_scale = var.iter().map(|v| if v.sqrt() > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        self.input_shift = mean;
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_shift).zip(&self.input_scale).map(|((x, m), s)| (x - m) * s).collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn logits(&self, from: &[f64], to: &[f64]) -> Result<Vec<f64>, LearnerError> {
        Ok(self.net.forward(&self.standardize(&[from, to].concat()))?.0)
    }

    pub fn confidences(&self, from: &[f64], to: &[f64]) -> Result<Vec<f64>, LearnerError> {
        Ok(self.logits(from, to)?.into_iter().map(sigmoid).collect())
    }

    /// The `k_top` most confident actions with their confidences.
    pub fn recommend(&self, from: &[f64], goal: &[f64], k_top: usize) -> Result<Vec<(ActionId, f64)>, LearnerError> {
        let logits = self.logits(from, goal)?;
        Ok(rank_logits(&logits).into_iter().take(k_top).map(|a| (a, sigmoid(logits[a]))).collect())
    }

    /// Summed sigmoid cross-entropy over all outputs of one pair, computed
    /// from logits, with its gradient added to `grads`.
    fn pair_loss_grad(&self, pair: &PairExample, grads: &mut SelectorNet) -> Result<f64, LearnerError> {
        let (z, cache) = self.net.forward(&self.standardize(&pair.input()))?;
        let mut target = vec![0.0; z.len()];
        for &a in &pair.labels {
            target[a] = 1.0;
        }
        let mut loss = 0.0;
        let grad: Vec<f64> = z
            .iter()
            .zip(&target)
            .map(|(&zi, &y)| {
                loss += softplus(zi) - y * zi;
                sigmoid(zi) - y
            })
            .collect();
        self.net.backward(&cache, &grad, &mut grads.net);
        Ok(loss)
    }

    /// Mean per-output loss over `pairs` and its gradient.
    pub fn loss(&self, pairs: &[PairExample]) -> Result<(f64, SelectorNet), LearnerError> {
        let mut grads = self.zeros_like();
        let mut total = 0.0;
        for p in pairs {
            total += self.pair_loss_grad(p, &mut grads)?;
        }
        let count = (pairs.len() * self.num_actions()).max(1) as f64;
        grads.scale(1.0 / count);
        Ok((total / count, grads))
    }

    pub fn to_checkpoint(&self, domain_fingerprint: &str) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", "selector");
        c.set_meta("domain", domain_fingerprint);
        c.set_meta("k", self.k);
        c.set_meta("num_actions", self.num_actions());
        let hidden: Vec<String> = self.net.spec.layers[..self.net.spec.layers.len() - 1].iter().map(|l| l.out.to_string()).collect();
        c.set_meta("hidden", hidden.join(","));
        c.set_meta("activation", self.net.spec.layers[0].activation);
        c.push_params("selector", self);
        c.push("selector_input.shift", vec![2 * self.k], self.input_shift.clone());
        c.push("selector_input.scale", vec![2 * self.k], self.input_scale.clone());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint, domain_fingerprint: &str) -> Result<Self, LearnerError> {
        c.expect_meta("kind", "selector")?;
        c.expect_meta("domain", domain_fingerprint)?;
        let hidden = c
            .meta("hidden")?
            .split(',')
            .filter(|h| !h.is_empty())
            .map(|h| h.parse::<usize>().map_err(|_| LearnerError::Config(format!("bad hidden width `{h}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let activation = if hidden.is_empty() { Activation::Identity } else { c.meta_parse("activation")? };
        let mut net = SelectorNet::new(c.meta_parse("k")?, c.meta_parse("num_actions")?, &hidden, activation, 0);
        c.load_params("selector", &mut net)?;
        net.input_shift = c.fetch("selector_input.shift", vec![2 * net.k])?;
        net.input_scale = c.fetch("selector_input.scale", vec![2 * net.k])?;
        Ok(net)
    }

    pub fn save(&self, path: &Path, domain_fingerprint: &str) -> Result<(), LearnerError> {
        Ok(self.to_checkpoint(domain_fingerprint).save(path)?)
    }

    pub fn load(path: &Path, domain_fingerprint: &str) -> Result<Self, LearnerError> {
        Self::from_checkpoint(&Checkpoint::load(path)?, domain_fingerprint)
    }
}

impl ParamSet for SelectorNet {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Action ids by descending score, ties by ascending id.
pub fn rank_logits(scores: &[f64]) -> Vec<ActionId> {
    let mut ids: Vec<ActionId> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

/// Fits the input standardization to `pairs`, then runs Adam over
/// shuffled mini-batches.
pub fn train_selector(
    net: &mut SelectorNet,
    pairs: &[PairExample],
    cfg: &SelectorConfig,
) -> Result<TrainOutcome, LearnerError> {
    if pairs.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(LearnerError::Config("batch_size must be positive".into()));
    }
    for p in pairs {
        if p.from_vector.len() != net.k() || p.to_vector.len() != net.k() {
            return Err(LearnerError::Config(format!("pair vectors must have length {}", net.k())));
        }
        if let Some(&a) = p.labels.iter().find(|&&a| a >= net.num_actions()) {
            return Err(LearnerError::ActionOutOfRange { action: a, num_actions: net.num_actions() });
        }
    }
    net.fit_input_scaling(pairs);
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, net);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut loss_curve = Vec::new();
    let outputs = net.num_actions();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut derived_rng(cfg.seed, STREAM_SHUFFLE, (1 << 32) + epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PairExample> = chunk.iter().map(|&i| &pairs[i]).collect();
            let m = &*net;
            let (loss, count, mut grads) = batch_gradient(&batch, |p| {
                let mut g = m.zeros_like();
                let l = m.pair_loss_grad(p, &mut g).unwrap_or(f64::NAN);
                (l, outputs, g)
            });
            if !loss.is_finite() || !grads.all_finite() {
                return Err(LearnerError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            grads.scale(1.0 / count as f64);
            adam.step(net, &grads)?;
        }
        let mean = epoch_loss / (pairs.len() * outputs) as f64;
        loss_curve.push(mean);
        debug!(epoch, loss = mean, "selector epoch");
        if mean < cfg.tolerance {
            info!(epoch, loss = mean, "selector converged");
            return Ok(TrainOutcome { loss_curve, converged: true });
        }
    }
    info!(epochs = loss_curve.len(), loss = loss_curve.last().copied().unwrap_or(f64::NAN), "selector trained");
    Ok(TrainOutcome { loss_curve, converged: false })
}
