//! Turning a trained sequence model into a planning model: estimated
//! traces, per-action preconditions, learned applicability, and the
//! state-to-vector bridge.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::learner::{EstimatedTrace, LearnerError, SequenceModel};
use crate::nn::{Checkpoint, CheckpointError};
use crate::strips::{ActionId, GroundDomain, State};
use crate::traces::PartialTrace;

/// Inference-mode unroll of every trace, in input order.
pub fn estimate_traces(model: &SequenceModel, data: &[PartialTrace]) -> Vec<EstimatedTrace> {
    data.par_iter().map(|t| model.unroll(t)).collect()
}

/// Preconditions as the intersection of the decoded states each action was
/// executed in, with the number of executions behind each intersection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Preconditions {
    pub pre: BTreeMap<ActionId, State>,
    pub occurrences: BTreeMap<ActionId, usize>,
}

impl Preconditions {
    pub fn get(&self, a: ActionId) -> Option<&State> {
        self.pre.get(&a)
    }

    pub fn seen_actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.pre.keys().copied()
    }

    /// Narrows the sets with one more trace.
    pub fn absorb(&mut self, trace: &EstimatedTrace) {
        for (i, &a) in trace.actions.iter().enumerate() {
            let s = &trace.decoded_states[i];
            self.pre.entry(a).and_modify(|p| *p = p.intersection(s)).or_insert_with(|| s.clone());
            *self.occurrences.entry(a).or_default() += 1;
        }
    }
}

pub fn extract_preconditions(traces: &[EstimatedTrace]) -> Preconditions {
    let mut out = Preconditions::default();
    for t in traces {
        out.absorb(t);
    }
    out
}

#[derive(Debug, Clone)]
pub struct LearnedDomainModel {
    pub sequence_model: SequenceModel,
    pub preconditions: Preconditions,
}

impl LearnedDomainModel {
    pub fn new(sequence_model: SequenceModel, preconditions: Preconditions) -> Self {
        LearnedDomainModel { sequence_model, preconditions }
    }

    /// Unrolls the training traces with the final model and intersects.
    pub fn from_training(sequence_model: SequenceModel, data: &[PartialTrace]) -> Self {
        let estimated = estimate_traces(&sequence_model, data);
        let preconditions = extract_preconditions(&estimated);
        LearnedDomainModel { sequence_model, preconditions }
    }

    pub fn num_props(&self) -> usize {
        self.sequence_model.num_props()
    }

    pub fn num_actions(&self) -> usize {
        self.sequence_model.num_actions()
    }

    pub fn is_seen(&self, a: ActionId) -> bool {
        self.preconditions.pre.contains_key(&a)
    }

    /// Seen actions whose learned precondition holds in `s`, ascending.
    pub fn learned_applicable(&self, s: &State) -> Vec<ActionId> {
        self.preconditions.pre.iter().filter(|(_, p)| p.is_subset(s)).map(|(&a, _)| a).collect()
    }

    pub fn bridge_state(&self, s: &State) -> Vec<f64> {
        self.sequence_model.bridge(s)
    }

    /// Decoded successor under the learned transition.
    pub fn successor(&self, s: &State, a: ActionId) -> Result<State, LearnerError> {
        let (bits, _) = self.sequence_model.transition(&s.to_bools(self.num_props()), a)?;
        Ok(State::from_bools(&bits))
    }

    /// Preconditions by name, one action per line; unseen actions are
    /// listed as such.
    pub fn report(&self, domain: &GroundDomain) -> String {
        let mut s = String::new();
        for a in 0..domain.num_actions() {
            let name = domain.action_name(a);
            match self.preconditions.get(a) {
                Some(p) => {
                    let n = self.preconditions.occurrences[&a];
                    writeln!(s, "{name} [{n}x]: {}", domain.state_names(p).join(" ")).unwrap();
                }
                None => writeln!(s, "{name}: unseen").unwrap(),
            }
        }
        s
    }

    pub fn to_checkpoint(&self, domain_fingerprint: &str) -> Checkpoint {
        let mut c = self.sequence_model.to_checkpoint(domain_fingerprint);
        let (p, na) = (self.num_props(), self.num_actions());
        let mut pre = vec![0.0; na * p];
        let mut occ = vec![0.0; na];
        for (&a, s) in &self.preconditions.pre {
            for j in s.iter() {
                pre[a * p + j] = 1.0;
            }
            occ[a] = self.preconditions.occurrences[&a] as f64;
        }
        c.push("preconditions", vec![na, p], pre);
        c.push("occurrences", vec![na], occ);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint, domain_fingerprint: &str) -> Result<Self, LearnerError> {
        let sequence_model = SequenceModel::from_checkpoint(c, domain_fingerprint)?;
        let (p, na) = (sequence_model.num_props(), sequence_model.num_actions());
        let pre = c.fetch("preconditions", vec![na, p])?;
        let occ = c.fetch("occurrences", vec![na])?;
        let mut preconditions = Preconditions::default();
        for a in 0..na {
            if occ[a] > 0.0 {
                let s: State = (0..p).filter(|&j| pre[a * p + j] > 0.5).collect();
                preconditions.pre.insert(a, s);
                preconditions.occurrences.insert(a, occ[a] as usize);
            }
        }
        Ok(LearnedDomainModel { sequence_model, preconditions })
    }

    pub fn save(&self, path: &Path, domain_fingerprint: &str) -> Result<(), CheckpointError> {
        self.to_checkpoint(domain_fingerprint).save(path)
    }

    pub fn load(path: &Path, domain_fingerprint: &str) -> Result<Self, LearnerError> {
        Self::from_checkpoint(&Checkpoint::load(path)?, domain_fingerprint)
    }
}
