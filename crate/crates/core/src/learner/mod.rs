//! The proposition-state graph sequence model.
//!
//! A state is a graph with one vertex per proposition, each joined to a
//! state vertex by an edge whose boolean attribute says whether the
//! proposition holds. The state network turns `[p_1 ‖ e_1 ‖ p_2 ‖ e_2 ‖ …]`
//! into a state vector `s`; the edge network, shared across edges, maps
//! `[e_j ‖ s ‖ p_j ‖ a]` to the probability that `p_j` holds after action
//! `a`. Thresholding those probabilities gives the successor state.
//!
//! Training unrolls the model along each trace feeding probabilities (not
//! thresholded booleans) forward so the whole sequence is differentiable.
//! Inference feeds decoded booleans.

mod train;

pub use train::{train, TrainConfig, TrainOutcome};
pub(crate) use train::batch_gradient;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{uniform_vec, BCE_CLAMP, Activation, Checkpoint, CheckpointError, Mlp, MlpCache, MlpSpec, NnError, ParamSet, TensorRef};
use crate::rng::{derived_rng, STREAM_INIT};
use crate::strips::{ActionId, GroundDomain, State};
use crate::traces::PartialTrace;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("action {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: ActionId, num_actions: usize },
    #[error("proposition {prop} out of range for {num_props} propositions")]
    PropOutOfRange { prop: usize, num_props: usize },
    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no training traces")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsgConfig {
    /// Embedding and state-vector dimension.
    pub k: usize,
    /// Hidden widths shared by the state and edge networks.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Embeddings are drawn uniformly from `[-embed_bound, embed_bound]`.
    pub embed_bound: f64,
    /// Probabilities at or above this decode to true.
    pub decode_threshold: f64,
    /// Treat propositions missing from an intermediate observation as false
    /// instead of unknown.
    pub absent_as_negative: bool,
    /// Probability that a true proposition shows up in an intermediate
    /// observation. When set, a missing proposition is weak evidence of
    /// falsehood and contributes `-ln(1 - rate * p)`; `1.0` is the same as
    /// `absent_as_negative`, `0.0` the same as leaving it out.
    pub observation_rate: Option<f64>,
    /// During training, force observed propositions to true before feeding
    /// the next step.
    pub teacher_forcing: bool,
}

impl Default for PsgConfig {
    fn default() -> Self {
        PsgConfig {
            k: 100,
            hidden: vec![100, 100],
            activation: Activation::Relu,
            embed_bound: 0.6,
            decode_threshold: 0.5,
            absent_as_negative: false,
            observation_rate: None,
            teacher_forcing: false,
        }
    }
}

impl PsgConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be nonempty with positive widths");
        }
        if !(self.decode_threshold > 0.0 && self.decode_threshold < 1.0) {
            return bad("decode_threshold must lie in (0, 1)");
        }
        if let Some(r) = self.observation_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad("observation_rate must lie in [0, 1]");
            }
        }
        if self.embed_bound.is_nan() || self.embed_bound <= 0.0 {
            return bad("embed_bound must be positive");
        }
        Ok(())
    }

    pub fn loss_options(&self) -> LossOptions {
        let absent_rate = if self.absent_as_negative { 1.0 } else { self.observation_rate.unwrap_or(0.0) };
        LossOptions { absent_rate, teacher_forcing: self.teacher_forcing }
    }
}

/// How intermediate observations turn into training targets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossOptions {
    /// Weight of the evidence carried by a proposition missing from an
    /// intermediate observation, in `[0, 1]`.
    pub absent_rate: f64,
    pub teacher_forcing: bool,
}

/// Supervision for one state of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTargets {
    /// 1 for observed propositions, 0 otherwise.
    pub targets: Vec<f64>,
    /// Entries that contribute to the loss.
    pub mask: Vec<bool>,
    /// Observation rate behind the zero targets: 1 when absence means false.
    pub absent_rate: f64,
}

/// Supervision for the state after `step` actions (`1..=n`). The final state
/// is complete, so absence there means false. At intermediate states
/// observed propositions are positives and the rest are weighted by the
/// configured absent rate (left out when it is zero).
pub fn step_targets(trace: &PartialTrace, step: usize, num_props: usize, opts: LossOptions) -> StepTargets {
    let observed = trace.observed(step);
    let targets = observed.to_attrs(num_props);
    let absent_rate = if step == trace.num_steps() { 1.0 } else { opts.absent_rate };
    let mask = if absent_rate > 0.0 { vec![true; num_props] } else { observed.to_bools(num_props) };
    StepTargets { targets, mask, absent_rate }
}

/// Negative log-likelihood of partial observations. An observed entry costs
/// `-ln p`; an unobserved one `-ln(1 - rate * p)`, which is ordinary
/// cross-entropy at `rate = 1`. Probabilities are clamped like
/// [`bce_loss`]. Returns the summed loss, its gradient, and the number of
/// contributing entries.
pub fn observation_loss(probs: &[f64], t: &StepTargets) -> (f64, Vec<f64>, usize) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    let mut count = 0;
    for (j, &p) in probs.iter().enumerate() {
        if !t.mask[j] {
            continue;
        }
        count += 1;
        let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let inside = q == p;
        if t.targets[j] > 0.5 {
            loss -= q.ln();
            if inside {
                grad[j] = -1.0 / q;
            }
        } else {
            let r = t.absent_rate;
            loss -= (1.0 - r * q).ln();
            if inside {
                grad[j] = r / (1.0 - r * q);
            }
        }
    }
    (loss, grad, count)
}

pub fn decode(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&p| p >= threshold).collect()
}

/// A successor model over (possibly fractional) edge attributes. The
/// trained network implements it; so do test doubles built on the true
/// domain.
pub trait Transition {
    fn num_props(&self) -> usize;

    fn decode_threshold(&self) -> f64 {
        0.5
    }

    fn edge_probabilities(&self, attrs: &[f64], action: ActionId) -> Vec<f64>;
}

/// The true STRIPS semantics dressed up as a transition model: attributes
/// are thresholded, the action applied (or ignored if inapplicable), and the
/// result returned as probabilities `clamp` and `1 - clamp`.
pub struct OracleTransition<'a> {
    pub domain: &'a GroundDomain,
    pub clamp: f64,
}

impl Transition for OracleTransition<'_> {
    fn num_props(&self) -> usize {
        self.domain.num_props()
    }

    fn edge_probabilities(&self, attrs: &[f64], action: ActionId) -> Vec<f64> {
        let s = State::from_bools(&decode(attrs, 0.5));
        let next = self.domain.apply(&s, action).unwrap_or(s);
        next.to_bools(attrs.len()).iter().map(|&b| if b { 1.0 - self.clamp } else { self.clamp }).collect()
    }
}

/// Inference-mode unroll result.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTrace {
    pub actions: Vec<ActionId>,
    /// `n + 1` states; the endpoints are the observed ones.
    pub decoded_states: Vec<State>,
    /// Edge probabilities produced for states `1..=n`.
    pub edge_probabilities: Vec<Vec<f64>>,
}

/// Runs `model` along the trace's actions from its initial state, feeding
/// decoded booleans forward. Endpoints are anchored to the observations.
pub fn unroll<T: Transition + ?Sized>(model: &T, trace: &PartialTrace) -> EstimatedTrace {
    let p = model.num_props();
    let n = trace.num_steps();
    let mut decoded_states = Vec::with_capacity(n + 1);
    let mut edge_probabilities = Vec::with_capacity(n);
    decoded_states.push(trace.initial.clone());
    let mut attrs = trace.initial.to_attrs(p);
    for (i, &a) in trace.actions.iter().enumerate() {
        let probs = model.edge_probabilities(&attrs, a);
        let bits = decode(&probs, model.decode_threshold());
        attrs = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        decoded_states.push(if i + 1 == n { trace.final_state.clone() } else { State::from_bools(&bits) });
        edge_probabilities.push(probs);
    }
    EstimatedTrace { actions: trace.actions.clone(), decoded_states, edge_probabilities }
}

/// Mean masked cross-entropy of a soft (training-mode) unroll. Returns the
/// per-entry mean and the number of supervised entries.
pub fn soft_sequence_loss<T: Transition + ?Sized>(model: &T, trace: &PartialTrace, opts: LossOptions) -> (f64, usize) {
    let p = model.num_props();
    let n = trace.num_steps();
    let mut attrs = trace.initial.to_attrs(p);
    let (mut sum, mut count) = (0.0, 0);
    for (i, &a) in trace.actions.iter().enumerate() {
        let probs = model.edge_probabilities(&attrs, a);
        let (l, _, c) = observation_loss(&probs, &step_targets(trace, i + 1, p, opts));
        sum += l;
        count += c;
        attrs = probs;
        if opts.teacher_forcing && i + 1 < n {
            for j in trace.observed(i + 1).iter() {
                attrs[j] = 1.0;
            }
        }
    }
    (if count == 0 { 0.0 } else { sum / count as f64 }, count)
}

/// A decoded state together with its state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PropStateGraph {
    pub state: State,
    pub vector: Vec<f64>,
}

/// First-layer products that depend only on the parameters, shared by every
/// forward pass until the parameters change.
#[derive(Debug, Clone)]
struct Precomputed {
    /// State-net bias plus the proposition-vector blocks.
    state_base: Vec<f64>,
    /// State-net weight column of each edge attribute, contiguous.
    state_ecols: Vec<Vec<f64>>,
    /// Edge-net weight block for `p_j` applied to `p_j`.
    edge_props: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SequenceModel {
    config: PsgConfig,
    num_props: usize,
    num_actions: usize,
    prop_vectors: Vec<f64>,
    action_vectors: Vec<f64>,
    state_net: Mlp,
    edge_net: Mlp,
    pre: OnceLock<Precomputed>,
}

impl SequenceModel {
    pub fn new(config: PsgConfig, num_props: usize, num_actions: usize, seed: u64) -> Result<Self, LearnerError> {
        config.validate()?;
        if num_props == 0 || num_actions == 0 {
            return Err(LearnerError::Config("domain needs propositions and actions".into()));
        }
        let mut rng = derived_rng(seed, STREAM_INIT, 0);
        let k = config.k;
        let prop_vectors = uniform_vec(num_props * k, config.embed_bound, &mut rng);
        let action_vectors = uniform_vec(num_actions * k, config.embed_bound, &mut rng);
        let (state_spec, edge_spec) = Self::specs(&config, num_props);
        let state_net = Mlp::new(state_spec, &mut rng);
        let edge_net = Mlp::new(edge_spec, &mut rng);
        Ok(SequenceModel { config, num_props, num_actions, prop_vectors, action_vectors, state_net, edge_net, pre: OnceLock::new() })
    }

    pub fn for_domain(config: PsgConfig, domain: &GroundDomain, seed: u64) -> Result<Self, LearnerError> {
        Self::new(config, domain.num_props(), domain.num_actions(), seed)
    }

    fn specs(config: &PsgConfig, num_props: usize) -> (MlpSpec, MlpSpec) {
        let k = config.k;
        let state = MlpSpec::stack(num_props * (k + 1), &config.hidden, config.activation, k, true, Activation::Identity);
        let edge = MlpSpec::stack(1 + 3 * k, &config.hidden, config.activation, 1, false, Activation::Sigmoid);
        (state, edge)
    }

    /// Same shapes, all parameters zero; used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        SequenceModel {
            config: self.config.clone(),
            num_props: self.num_props,
            num_actions: self.num_actions,
            prop_vectors: vec![0.0; self.prop_vectors.len()],
            action_vectors: vec![0.0; self.action_vectors.len()],
            state_net: self.state_net.zeros_like(),
            edge_net: self.edge_net.zeros_like(),
            pre: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &PsgConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn num_props(&self) -> usize {
        self.num_props
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prop_vector(&self, j: usize) -> &[f64] {
        &self.prop_vectors[j * self.k()..(j + 1) * self.k()]
    }

    pub fn action_vector(&self, a: ActionId) -> &[f64] {
        &self.action_vectors[a * self.k()..(a + 1) * self.k()]
    }

    pub fn state_net(&self) -> &Mlp {
        &self.state_net
    }

    pub fn edge_net(&self) -> &Mlp {
        &self.edge_net
    }

    /// Column of the state net's input holding edge attribute `j`.
    fn state_ecol(&self, j: usize) -> usize {
        j * (self.k() + 1) + self.k()
    }

    fn precomputed(&self) -> &Precomputed {
        self.pre.get_or_init(|| {
            let k = self.k();
            let sd = &self.state_net.dense[0];
            let ed = &self.edge_net.dense[0];
            let mut state_base = sd.bias.clone();
            let mut state_ecols = Vec::with_capacity(self.num_props);
            let mut edge_props = Vec::with_capacity(self.num_props);
            for j in 0..self.num_props {
                let pj = self.prop_vector(j);
                sd.add_block(j * (k + 1), pj, &mut state_base);
                let col = self.state_ecol(j);
                state_ecols.push((0..sd.out_dim).map(|o| sd.weight[o * sd.in_dim + col]).collect());
                let mut ep = vec![0.0; ed.out_dim];
                ed.add_block(1 + k, pj, &mut ep);
                edge_props.push(ep);
            }
            Precomputed { state_base, state_ecols, edge_props }
        })
    }

    fn check_action(&self, a: ActionId) -> Result<(), LearnerError> {
        if a < self.num_actions {
            Ok(())
        } else {
            Err(LearnerError::ActionOutOfRange { action: a, num_actions: self.num_actions })
        }
    }

    fn state_forward(&self, attrs: &[f64]) -> (Vec<f64>, MlpCache) {
        let pre = self.precomputed();
        let mut z0 = pre.state_base.clone();
        for (col, &e) in pre.state_ecols.iter().zip(attrs) {
            if e != 0.0 {
                for (z, w) in z0.iter_mut().zip(col) {
                    *z += w * e;
                }
            }
        }
        let cache = self.state_net.forward_tail(z0);
        (cache.output().to_vec(), cache)
    }

    fn edge_forward(&self, attrs: &[f64], state: &[f64], action: ActionId) -> (Vec<f64>, Vec<MlpCache>) {
        let k = self.k();
        let pre = self.precomputed();
        let d = &self.edge_net.dense[0];
        let mut shared = d.bias.clone();
        d.add_block(1, state, &mut shared);
        d.add_block(1 + 2 * k, self.action_vector(action), &mut shared);
        let mut probs = Vec::with_capacity(self.num_props);
        let mut caches = Vec::with_capacity(self.num_props);
        for (j, &e) in attrs.iter().enumerate() {
            let mut z0: Vec<f64> = shared.iter().zip(&pre.edge_props[j]).map(|(a, b)| a + b).collect();
            d.add_column(0, e, &mut z0);
            let cache = self.edge_net.forward_tail(z0);
            probs.push(cache.output()[0]);
            caches.push(cache);
        }
        (probs, caches)
    }

    /// State vector for edge attributes in `[0, 1]`.
    pub fn state_update(&self, attrs: &[f64]) -> Result<Vec<f64>, LearnerError> {
        crate::nn::check_len(self.num_props, attrs.len())?;
        Ok(self.state_forward(attrs).0)
    }

    /// Per-edge probabilities after applying `action` in the state with
    /// attributes `attrs` and vector `state`.
    pub fn edge_update(&self, attrs: &[f64], state: &[f64], action: ActionId) -> Result<Vec<f64>, LearnerError> {
        crate::nn::check_len(self.num_props, attrs.len())?;
        crate::nn::check_len(self.k(), state.len())?;
        self.check_action(action)?;
        Ok(self.edge_forward(attrs, state, action).0)
    }

    pub fn decode(&self, probs: &[f64]) -> Vec<bool> {
        decode(probs, self.config.decode_threshold)
    }

    /// One learned transition on decoded attributes: the successor's
    /// decoded attributes and its state vector.
    pub fn transition(&self, attrs: &[bool], action: ActionId) -> Result<(Vec<bool>, Vec<f64>), LearnerError> {
        let attrs: Vec<f64> = attrs.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let s = self.state_update(&attrs)?;
        let probs = self.edge_update(&attrs, &s, action)?;
        let next = self.decode(&probs);
        let nf: Vec<f64> = next.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let s2 = self.state_forward(&nf).0;
        Ok((next, s2))
    }

    /// State vector of a decoded state.
    pub fn bridge(&self, state: &State) -> Vec<f64> {
        self.state_forward(&state.to_attrs(self.num_props)).0
    }

    pub fn graph(&self, state: &State) -> PropStateGraph {
        PropStateGraph { state: state.clone(), vector: self.bridge(state) }
    }

    /// Successor graph of `g` under `action`, reusing `g`'s state vector.
    pub fn step(&self, g: &PropStateGraph, action: ActionId) -> Result<PropStateGraph, LearnerError> {
        self.check_action(action)?;
        let attrs = g.state.to_attrs(self.num_props);
        let probs = self.edge_forward(&attrs, &g.vector, action).0;
        let state = State::from_bools(&self.decode(&probs));
        let vector = self.bridge(&state);
        Ok(PropStateGraph { state, vector })
    }

    pub fn unroll(&self, trace: &PartialTrace) -> EstimatedTrace {
        unroll(self, trace)
    }

    /// Mean masked cross-entropy of the training-mode unroll and its
    /// gradient with respect to every parameter and embedding.
    pub fn sequence_loss(&self, trace: &PartialTrace) -> Result<(f64, SequenceModel), LearnerError> {
        self.check_trace(trace)?;
        let mut grads = self.zeros_like();
        let (sum, count) = self.trace_loss_grad(trace, &mut grads);
        if count == 0 {
            return Ok((0.0, grads));
        }
        grads.scale(1.0 / count as f64);
        Ok((sum / count as f64, grads))
    }

    pub(crate) fn check_trace(&self, trace: &PartialTrace) -> Result<(), LearnerError> {
        for &a in &trace.actions {
            self.check_action(a)?;
        }
        let states = std::iter::once(&trace.initial).chain(&trace.observations).chain(std::iter::once(&trace.final_state));
        for s in states {
            if let Some(p) = s.max_id().filter(|&p| p >= self.num_props) {
                return Err(LearnerError::PropOutOfRange { prop: p, num_props: self.num_props });
            }
        }
        Ok(())
    }

    /// Forward and backward through one trace. Adds unnormalized gradients
    /// into `grads` and returns the loss sum and supervised entry count.
    fn trace_loss_grad(&self, trace: &PartialTrace, grads: &mut SequenceModel) -> (f64, usize) {
        struct Step {
            attrs: Vec<f64>,
            state: Vec<f64>,
            state_cache: MlpCache,
            edge_caches: Vec<MlpCache>,
            loss_grad: Vec<f64>,
            forced: Vec<bool>,
        }

        let p = self.num_props;
        let k = self.k();
        let n = trace.num_steps();
        let opts = self.config.loss_options();
        if n == 0 {
            return (0.0, 0);
        }

        let mut steps: Vec<Step> = Vec::with_capacity(n);
        let mut attrs = trace.initial.to_attrs(p);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            let a = trace.actions[i];
            let (state, state_cache) = self.state_forward(&attrs);
            let (probs, edge_caches) = self.edge_forward(&attrs, &state, a);
            let (l, g, c) = observation_loss(&probs, &step_targets(trace, i + 1, p, opts));
            loss_sum += l;
            count += c;
            let mut next = probs;
            let mut forced = vec![false; p];
            if opts.teacher_forcing && i + 1 < n {
                for j in trace.observed(i + 1).iter() {
                    next[j] = 1.0;
                    forced[j] = true;
                }
            }
            steps.push(Step { attrs: std::mem::replace(&mut attrs, next), state, state_cache, edge_caches, loss_grad: g, forced });
        }

        let ed = &self.edge_net.dense[0];
        let sd = &self.state_net.dense[0];
        let h_edge = ed.out_dim;
        let mut state_gsum = vec![0.0; sd.out_dim];
        let mut edge_hsum = vec![vec![0.0; h_edge]; p];
        let mut downstream = vec![0.0; p];
        for i in (0..n).rev() {
            let st = &steps[i];
            let a = trace.actions[i];
            let mut grad_attrs = vec![0.0; p];
            let mut g_shared = vec![0.0; h_edge];
            for j in 0..p {
                let mut gp = st.loss_grad[j];
                if !st.forced[j] {
                    gp += downstream[j];
                }
                if gp == 0.0 {
                    continue;
                }
                let g = self.edge_net.backward_tail(&st.edge_caches[j], &[gp], &mut grads.edge_net);
                grad_attrs[j] += ed.backward_column(0, st.attrs[j], &g, &mut grads.edge_net.dense[0]);
                for ((s, h), v) in g_shared.iter_mut().zip(edge_hsum[j].iter_mut()).zip(&g) {
                    *s += v;
                    *h += v;
                }
            }
            let mut grad_state = vec![0.0; k];
            ed.backward_block(1, &st.state, &g_shared, &mut grads.edge_net.dense[0], Some(&mut grad_state));
            let ga = &mut grads.action_vectors[a * k..(a + 1) * k];
            ed.backward_block(1 + 2 * k, self.action_vector(a), &g_shared, &mut grads.edge_net.dense[0], Some(ga));
            crate::nn::Dense::backward_bias(&g_shared, &mut grads.edge_net.dense[0]);

            let gs = self.state_net.backward_tail(&st.state_cache, &grad_state, &mut grads.state_net);
            for j in 0..p {
                grad_attrs[j] += sd.backward_column(self.state_ecol(j), st.attrs[j], &gs, &mut grads.state_net.dense[0]);
            }
            for (acc, v) in state_gsum.iter_mut().zip(&gs) {
                *acc += v;
            }
            downstream = grad_attrs;
        }

        crate::nn::Dense::backward_bias(&state_gsum, &mut grads.state_net.dense[0]);
        for j in 0..p {
            let pj = self.prop_vector(j);
            let gp = &mut grads.prop_vectors[j * k..(j + 1) * k];
            sd.backward_block(j * (k + 1), pj, &state_gsum, &mut grads.state_net.dense[0], Some(&mut *gp));
            ed.backward_block(1 + k, pj, &edge_hsum[j], &mut grads.edge_net.dense[0], Some(gp));
        }
        (loss_sum, count)
    }

    pub fn to_checkpoint(&self, domain_fingerprint: &str) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", "sequence-model");
        c.set_meta("domain", domain_fingerprint);
        c.set_meta("num_props", self.num_props);
        c.set_meta("num_actions", self.num_actions);
        c.set_meta("k", self.config.k);
        let hidden: Vec<String> = self.config.hidden.iter().map(usize::to_string).collect();
        c.set_meta("hidden", hidden.join(","));
        c.set_meta("activation", self.config.activation);
        c.set_meta("embed_bound", format!("{:e}", self.config.embed_bound));
        c.set_meta("decode_threshold", format!("{:e}", self.config.decode_threshold));
        c.set_meta("absent_as_negative", self.config.absent_as_negative);
        c.set_meta("observation_rate", self.config.observation_rate.map_or("none".to_string(), |r| format!("{r:e}")));
        c.set_meta("teacher_forcing", self.config.teacher_forcing);
        c.push_params("model", self);
        c
    }

    /// Rebuilds a model, refusing checkpoints trained on another domain.
    pub fn from_checkpoint(c: &Checkpoint, domain_fingerprint: &str) -> Result<Self, LearnerError> {
        c.expect_meta("kind", "sequence-model")?;
        c.expect_meta("domain", domain_fingerprint)?;
        let hidden = c
            .meta("hidden")?
            .split(',')
            .map(|h| h.parse::<usize>().map_err(|_| LearnerError::Config(format!("bad hidden width `{h}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let config = PsgConfig {
            k: c.meta_parse("k")?,
            hidden,
            activation: c.meta_parse("activation")?,
            embed_bound: c.meta_parse("embed_bound")?,
            decode_threshold: c.meta_parse("decode_threshold")?,
            absent_as_negative: c.meta_parse("absent_as_negative")?,
            observation_rate: match c.meta("observation_rate")? {
                "none" => None,
                _ => Some(c.meta_parse("observation_rate")?),
            },
            teacher_forcing: c.meta_parse("teacher_forcing")?,
        };
        let mut model = Self::new(config, c.meta_parse("num_props")?, c.meta_parse("num_actions")?, 0)?;
        c.load_params("model", &mut model)?;
        Ok(model)
    }
}

impl ParamSet for SequenceModel {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let k = self.k();
        let mut out = vec![
            TensorRef { name: "prop_vectors".into(), shape: vec![self.num_props, k], data: &self.prop_vectors },
            TensorRef { name: "action_vectors".into(), shape: vec![self.num_actions, k], data: &self.action_vectors },
        ];
        for (prefix, net) in [("state_net", &self.state_net), ("edge_net", &self.edge_net)] {
            out.extend(net.tensors().into_iter().map(|t| TensorRef { name: format!("{prefix}.{}", t.name), ..t }));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.pre = OnceLock::new();
        let mut out: Vec<&mut [f64]> = vec![&mut self.prop_vectors, &mut self.action_vectors];
        out.extend(self.state_net.tensors_mut());
        out.extend(self.edge_net.tensors_mut());
        out
    }
}

impl Transition for SequenceModel {
    fn num_props(&self) -> usize {
        self.num_props
    }

    fn decode_threshold(&self) -> f64 {
        self.config.decode_threshold
    }

    fn edge_probabilities(&self, attrs: &[f64], action: ActionId) -> Vec<f64> {
        let (s, _) = self.state_forward(attrs);
        self.edge_forward(attrs, &s, action).0
    }
}
