//! Instance and plan-trace generation, observation masking, dataset splits.

mod io;

pub use io::{read_traces, read_traces_file, write_traces, write_traces_file, TraceIoError};

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::DomainTemplate;
use crate::rng::{derived_rng, STREAM_INSTANCES, STREAM_MASK};
use crate::strips::{oracle_plan, ActionId, GroundDomain, Instance, OracleError, SearchStrategy, State, DEFAULT_ORACLE_BUDGET};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("found only {found} of {requested} distinct solvable instances after {attempts} attempts")]
    GenerationExhausted { requested: usize, found: usize, attempts: usize },
    #[error("instance {index}: {source}")]
    Planning { index: usize, source: OracleError },
    #[error("count must be positive")]
    ZeroCount,
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("observation percentage {0} is not one of 0, 20, 40, 60, 80, 100")]
    BadPercentage(u32),
}

/// A fully observed trace `s0, a1, s1, ..., an, sn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanTrace {
    pub states: Vec<State>,
    pub actions: Vec<ActionId>,
}

impl PlanTrace {
    /// Executes `plan` from the instance's initial state.
    pub fn from_plan(domain: &GroundDomain, initial: &State, plan: &[ActionId]) -> Result<Self, TraceError> {
        let mut states = Vec::with_capacity(plan.len() + 1);
        states.push(initial.clone());
        for &a in plan {
            let next = domain
                .apply(states.last().unwrap(), a)
                .map_err(|e| TraceError::Malformed(e.to_string()))?;
            states.push(next);
        }
        Ok(PlanTrace { states, actions: plan.to_vec() })
    }

    pub fn num_steps(&self) -> usize {
        self.actions.len()
    }

    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trace has at least one state")
    }

    /// True iff every action applies and the states chain under `apply`.
    pub fn is_consistent(&self, domain: &GroundDomain) -> bool {
        self.states.len() == self.actions.len() + 1
            && self
                .actions
                .iter()
                .enumerate()
                .all(|(i, &a)| domain.apply(&self.states[i], a).ok().as_ref() == Some(&self.states[i + 1]))
    }
}

/// A trace whose intermediate states are replaced by observed subsets.
/// Propositions missing from an observation are false or unobserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialTrace {
    pub initial: State,
    pub final_state: State,
    pub actions: Vec<ActionId>,
    /// `observations[i]` belongs to the state after `actions[i]`, for the
    /// `n - 1` intermediate states.
    pub observations: Vec<State>,
}

impl PartialTrace {
    pub fn new(
        initial: State,
        final_state: State,
        actions: Vec<ActionId>,
        observations: Vec<State>,
    ) -> Result<Self, TraceError> {
        let expected = actions.len().saturating_sub(1);
        if observations.len() != expected {
            return Err(TraceError::Malformed(format!(
                "{} actions need {expected} observations, got {}",
                actions.len(),
                observations.len()
            )));
        }
        if actions.is_empty() && initial != final_state {
            return Err(TraceError::Malformed("empty trace with distinct endpoints".into()));
        }
        Ok(PartialTrace { initial, final_state, actions, observations })
    }

    /// Every state observed in full.
    pub fn fully_observed(trace: &PlanTrace) -> Self {
        let n = trace.num_steps();
        let observations = if n > 1 { trace.states[1..n].to_vec() } else { Vec::new() };
        PartialTrace {
            initial: trace.initial().clone(),
            final_state: trace.final_state().clone(),
            actions: trace.actions.clone(),
            observations,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.actions.len()
    }

    /// Observation for state index `i` in `0..=n`. Endpoints are complete.
    pub fn observed(&self, i: usize) -> &State {
        if i == 0 {
            &self.initial
        } else if i == self.num_steps() {
            &self.final_state
        } else {
            &self.observations[i - 1]
        }
    }

    /// Whether every observation is a subset of the matching true state.
    pub fn is_observation_of(&self, trace: &PlanTrace) -> bool {
        self.actions == trace.actions
            && &self.initial == trace.initial()
            && &self.final_state == trace.final_state()
            && self.observations.iter().enumerate().all(|(i, o)| o.is_subset(&trace.states[i + 1]))
    }
}

/// One of 0, 20, 40, 60, 80, 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ObservationPct(u32);

impl ObservationPct {
    pub const ALL: [ObservationPct; 6] = [
        ObservationPct(0),
        ObservationPct(20),
        ObservationPct(40),
        ObservationPct(60),
        ObservationPct(80),
        ObservationPct(100),
    ];

    pub fn new(pct: u32) -> Result<Self, TraceError> {
        if pct <= 100 && pct.is_multiple_of(20) {
            Ok(ObservationPct(pct))
        } else {
            Err(TraceError::BadPercentage(pct))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Observed count for a state of `len` true propositions, rounding half up.
    pub fn kept(self, len: usize) -> usize {
        (self.0 as usize * len + 50) / 100
    }
}

impl TryFrom<u32> for ObservationPct {
    type Error = TraceError;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        ObservationPct::new(v)
    }
}

impl From<ObservationPct> for u32 {
    fn from(p: ObservationPct) -> u32 {
        p.0
    }
}

impl fmt::Display for ObservationPct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.0)
    }
}

/// Draws `count` pairwise-distinct instances, each solvable by the
/// reference planner within the default budget.
pub fn gen_instances(template: &DomainTemplate, count: usize, seed: u64) -> Result<Vec<Instance>, TraceError> {
    if count == 0 {
        return Err(TraceError::ZeroCount);
    }
    let domain = template.build();
    let max_attempts = 20 * count + 100;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for attempt in 0..max_attempts {
        let mut rng = derived_rng(seed, STREAM_INSTANCES, attempt as u64);
        let inst = template.random_instance(&domain, &mut rng);
        if seen.contains(&inst) {
            continue;
        }
        seen.insert(inst.clone());
        if oracle_plan(&domain, &inst, DEFAULT_ORACLE_BUDGET, SearchStrategy::Auto).is_ok() {
            out.push(inst);
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(TraceError::GenerationExhausted { requested: count, found: out.len(), attempts: max_attempts })
}

/// Plans every instance with the reference planner and records the traces.
pub fn gen_traces(domain: &GroundDomain, instances: &[Instance], budget: usize) -> Result<Vec<PlanTrace>, TraceError> {
    instances
        .par_iter()
        .enumerate()
        .map(|(index, inst)| {
            let plan = oracle_plan(domain, inst, budget, SearchStrategy::Auto)
                .map_err(|source| TraceError::Planning { index, source })?;
            PlanTrace::from_plan(domain, &inst.initial, &plan)
        })
        .collect()
}

/// Keeps `round_half_up(pct * |s_i|)` propositions of every intermediate
/// state, sampled uniformly without replacement. Endpoints stay complete.
pub fn mask_trace(trace: &PlanTrace, pct: ObservationPct, seed: u64) -> PartialTrace {
    let mut rng = derived_rng(seed, STREAM_MASK, 0);
    let n = trace.num_steps();
    let observations = (1..n)
        .map(|i| {
            let members: Vec<_> = trace.states[i].iter().collect();
            let keep = pct.kept(members.len());
            sample(&mut rng, members.len(), keep).into_iter().map(|j| members[j]).collect()
        })
        .collect();
    PartialTrace {
        initial: trace.initial().clone(),
        final_state: trace.final_state().clone(),
        actions: trace.actions.clone(),
        observations,
    }
}

/// Masks a list of traces, trace `i` using a seed derived from `(seed, i)`.
pub fn mask_traces(traces: &[PlanTrace], pct: ObservationPct, seed: u64) -> Vec<PartialTrace> {
    traces
        .par_iter()
        .enumerate()
        .map(|(i, t)| mask_trace(t, pct, crate::rng::derive_seed(seed, STREAM_MASK, i as u64)))
        .collect()
}

/// Generated ground truth for one domain: disjoint train and test instances
/// with their fully observed reference traces.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub domain: GroundDomain,
    pub train_instances: Vec<Instance>,
    pub train_traces: Vec<PlanTrace>,
    pub test_instances: Vec<Instance>,
    pub test_traces: Vec<PlanTrace>,
}

/// Training input at one observation level plus the held-out test data.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<PartialTrace>,
    pub test: Vec<PlanTrace>,
    pub test_instances: Vec<Instance>,
}

impl Dataset {
    pub fn generate(
        template: &DomainTemplate,
        train_count: usize,
        test_count: usize,
        seed: u64,
        budget: usize,
    ) -> Result<Self, TraceError> {
        let domain = template.build();
        let mut instances = gen_instances(template, train_count + test_count, seed)?;
        let test_instances = instances.split_off(train_count);
        let train_instances = instances;
        let train_traces = gen_traces(&domain, &train_instances, budget)?;
        let test_traces = gen_traces(&domain, &test_instances, budget)?;
        Ok(Dataset { domain, train_instances, train_traces, test_instances, test_traces })
    }

    pub fn split(&self, pct: ObservationPct, mask_seed: u64) -> DatasetSplit {
        DatasetSplit {
            train: mask_traces(&self.train_traces, pct, mask_seed),
            test: self.test_traces.clone(),
            test_instances: self.test_instances.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strips::tests::mini_ferry;
    use proptest::prelude::*;

    fn ferry22() -> DomainTemplate {
        DomainTemplate::Ferry { cars: 2, locations: 2 }
    }

    #[test]
    fn gen_instances_distinct_solvable_deterministic() {
        let insts = gen_instances(&ferry22(), 5, 7).unwrap();
        assert_eq!(insts.len(), 5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(insts[i], insts[j]);
            }
        }
        let d = ferry22().build();
        for inst in &insts {
            assert!(oracle_plan(&d, inst, DEFAULT_ORACLE_BUDGET, SearchStrategy::Auto).is_ok());
        }
        assert_eq!(insts, gen_instances(&ferry22(), 5, 7).unwrap());
        assert_eq!(gen_instances(&ferry22(), 1, 7).unwrap().len(), 1);
        assert_eq!(gen_instances(&ferry22(), 0, 7), Err(TraceError::ZeroCount));
    }

    #[test]
    fn exhaustion_is_reported() {
        // ferry 1x2 has 2 * 2 * 2 = 8 distinct instances
        let t = DomainTemplate::Ferry { cars: 1, locations: 2 };
        assert!(matches!(gen_instances(&t, 9, 1), Err(TraceError::GenerationExhausted { found: 8, .. })));
    }

    #[test]
    fn traces_chain_and_reach_goal() {
        let t = DomainTemplate::Ferry { cars: 3, locations: 3 };
        let d = t.build();
        let insts = gen_instances(&t, 100, 2).unwrap();
        let traces = gen_traces(&d, &insts, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!(traces.len(), 100);
        for (tr, inst) in traces.iter().zip(&insts) {
            assert!(tr.is_consistent(&d));
            assert!(d.validate_plan(inst, &tr.actions).is_ok());
            assert!(inst.goal_satisfied(tr.final_state()));
        }
    }

    #[test]
    fn satisfied_instance_gives_empty_trace() {
        let d = mini_ferry();
        let s: State = ["at(c1,l1)", "at-ferry(l1)", "empty-ferry"].iter().map(|n| d.prop_id(n).unwrap()).collect();
        let inst = Instance::new(s.clone(), State::from([d.prop_id("at(c1,l1)").unwrap()])).unwrap();
        let traces = gen_traces(&d, &[inst], 100).unwrap();
        assert_eq!(traces[0].states, vec![s]);
        assert!(traces[0].actions.is_empty());
    }

    fn sample_trace() -> PlanTrace {
        let t = DomainTemplate::Ferry { cars: 3, locations: 3 };
        let d = t.build();
        let insts = gen_instances(&t, 20, 4).unwrap();
        let traces = gen_traces(&d, &insts, DEFAULT_ORACLE_BUDGET).unwrap();
        traces.into_iter().max_by_key(|t| t.num_steps()).unwrap()
    }

    #[test]
    fn mask_extremes() {
        let tr = sample_trace();
        assert!(tr.num_steps() >= 3);
        let full = mask_trace(&tr, ObservationPct::new(100).unwrap(), 1);
        assert_eq!(full, PartialTrace::fully_observed(&tr));
        let none = mask_trace(&tr, ObservationPct::new(0).unwrap(), 1);
        assert!(none.observations.iter().all(|o| o.is_empty()));
        assert_eq!(&none.initial, tr.initial());
        assert_eq!(&none.final_state, tr.final_state());
    }

    #[test]
    fn mask_counts_round_half_up() {
        let forty = ObservationPct::new(40).unwrap();
        assert_eq!(forty.kept(10), 4);
        assert_eq!(ObservationPct::new(20).unwrap().kept(5), 1);
        assert_eq!(ObservationPct::new(20).unwrap().kept(3), 1); // 0.6
        assert_eq!(ObservationPct::new(60).unwrap().kept(5), 3);
        assert_eq!(ObservationPct::new(40).unwrap().kept(5), 2);
        assert_eq!(ObservationPct::new(20).unwrap().kept(13), 3); // 2.6
        // a 10-proposition intermediate state
        let states: Vec<State> = vec![(0..3).collect(), (0..10).collect(), (0..10).collect()];
        let tr = PlanTrace { states, actions: vec![0, 1] };
        let masked = mask_trace(&tr, forty, 9);
        assert_eq!(masked.observations[0].len(), 4);
        assert!(ObservationPct::new(50).is_err());
    }

    #[test]
    fn short_traces_are_kept() {
        let tr = PlanTrace { states: vec![State::from([0]), State::from([1])], actions: vec![3] };
        let m = mask_trace(&tr, ObservationPct::new(40).unwrap(), 0);
        assert!(m.observations.is_empty());
        assert_eq!(m.num_steps(), 1);
    }

    #[test]
    fn split_is_disjoint_and_masked() {
        let ds = Dataset::generate(&DomainTemplate::Ferry { cars: 3, locations: 3 }, 30, 10, 5, DEFAULT_ORACLE_BUDGET)
            .unwrap();
        for t in &ds.test_instances {
            assert!(!ds.train_instances.contains(t));
        }
        let split = ds.split(ObservationPct::new(60).unwrap(), 3);
        assert_eq!(split.train.len(), 30);
        for (p, full) in split.train.iter().zip(&ds.train_traces) {
            assert!(p.is_observation_of(full));
        }
        let again = ds.split(ObservationPct::new(60).unwrap(), 3);
        assert_eq!(split.train, again.train);
    }

    proptest! {
        #[test]
        fn masked_observations_are_subsets(seed in 0u64..1000, pct_idx in 0usize..6) {
            let tr = sample_trace();
            let pct = ObservationPct::ALL[pct_idx];
            let m = mask_trace(&tr, pct, seed);
            prop_assert!(m.is_observation_of(&tr));
            for (i, o) in m.observations.iter().enumerate() {
                prop_assert_eq!(o.len(), pct.kept(tr.states[i + 1].len()));
            }
            prop_assert_eq!(&m, &mask_trace(&tr, pct, seed));
        }
    }
}
