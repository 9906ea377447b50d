//! Ground STRIPS semantics: states, applicability, transition and plan
//! validation, plus the reference planner used to generate and check data.

mod oracle;
mod parse;

pub use oracle::{additive_heuristic, oracle_plan, OracleError, SearchStrategy, DEFAULT_ORACLE_BUDGET};
pub use parse::{parse_domain, parse_instance, write_domain, write_instance, InstanceRecord, ParseError};
pub(crate) use parse::{resolve_props, tokens};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub type PropId = usize;
pub type ActionId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StripsError {
    #[error("action {action} is not applicable: missing {missing:?}")]
    InapplicableAction { action: ActionId, missing: Vec<PropId> },
    #[error("unknown action id {0}")]
    UnknownAction(ActionId),
    #[error("proposition id {0} is outside the domain")]
    UnknownProposition(PropId),
    #[error("duplicate proposition name `{0}`")]
    DuplicateProposition(String),
    #[error("duplicate action name `{0}`")]
    DuplicateAction(String),
    #[error("action `{0}` both adds and deletes `{1}`")]
    ConflictingEffects(String, String),
    #[error("instance goal is empty")]
    EmptyGoal,
}

/// A set of true propositions. Everything absent is false.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(BTreeSet<PropId>);

impl State {
    pub fn new() -> Self {
        State(BTreeSet::new())
    }

    pub fn contains(&self, p: PropId) -> bool {
        self.0.contains(&p)
    }

    pub fn insert(&mut self, p: PropId) -> bool {
        self.0.insert(p)
    }

    pub fn remove(&mut self, p: PropId) -> bool {
        self.0.remove(&p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = PropId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &State) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection(&self, other: &State) -> State {
        State(self.0.intersection(&other.0).copied().collect())
    }

    pub fn max_id(&self) -> Option<PropId> {
        self.0.iter().next_back().copied()
    }

    /// Edge attributes: 1.0 for members, 0.0 otherwise.
    pub fn to_attrs(&self, num_props: usize) -> Vec<f64> {
        let mut attrs = vec![0.0; num_props];
        for p in self.iter() {
            attrs[p] = 1.0;
        }
        attrs
    }

    pub fn to_bools(&self, num_props: usize) -> Vec<bool> {
        let mut bits = vec![false; num_props];
        for p in self.iter() {
            bits[p] = true;
        }
        bits
    }

    pub fn from_bools(bits: &[bool]) -> State {
        bits.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

impl FromIterator<PropId> for State {
    fn from_iter<I: IntoIterator<Item = PropId>>(iter: I) -> Self {
        State(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[PropId; N]> for State {
    fn from(ids: [PropId; N]) -> Self {
        ids.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub name: String,
    pub precondition: State,
    pub add_effects: State,
    pub del_effects: State,
}

impl GroundAction {
    pub fn new(name: impl Into<String>, pre: State, add: State, del: State) -> Self {
        GroundAction {
            name: name.into(),
            precondition: pre,
            add_effects: add,
            del_effects: del,
        }
    }
}

/// A fully ground domain: the hidden ground truth the learner tries to recover.
#[derive(Debug, Clone)]
pub struct GroundDomain {
    name: String,
    propositions: Vec<String>,
    actions: Vec<GroundAction>,
    prop_index: HashMap<String, PropId>,
    action_index: HashMap<String, ActionId>,
}

impl PartialEq for GroundDomain {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.propositions == other.propositions
            && self.actions == other.actions
    }
}

impl GroundDomain {
    pub fn new(
        name: impl Into<String>,
        propositions: Vec<String>,
        actions: Vec<GroundAction>,
    ) -> Result<Self, StripsError> {
        let mut prop_index = HashMap::with_capacity(propositions.len());
        for (id, p) in propositions.iter().enumerate() {
            if prop_index.insert(p.clone(), id).is_some() {
                return Err(StripsError::DuplicateProposition(p.clone()));
            }
        }
        let mut action_index = HashMap::with_capacity(actions.len());
        for (id, a) in actions.iter().enumerate() {
            if action_index.insert(a.name.clone(), id).is_some() {
                return Err(StripsError::DuplicateAction(a.name.clone()));
            }
            for set in [&a.precondition, &a.add_effects, &a.del_effects] {
                if let Some(max) = set.max_id() {
                    if max >= propositions.len() {
                        return Err(StripsError::UnknownProposition(max));
                    }
                }
            }
            if let Some(p) = a.add_effects.intersection(&a.del_effects).iter().next() {
                return Err(StripsError::ConflictingEffects(
                    a.name.clone(),
                    propositions[p].clone(),
                ));
            }
        }
        Ok(GroundDomain {
            name: name.into(),
            propositions,
            actions,
            prop_index,
            action_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_props(&self) -> usize {
        self.propositions.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn propositions(&self) -> &[String] {
        &self.propositions
    }

    pub fn actions(&self) -> &[GroundAction] {
        &self.actions
    }

    pub fn action(&self, id: ActionId) -> Result<&GroundAction, StripsError> {
        self.actions.get(id).ok_or(StripsError::UnknownAction(id))
    }

    pub fn prop_name(&self, id: PropId) -> &str {
        &self.propositions[id]
    }

    pub fn action_name(&self, id: ActionId) -> &str {
        &self.actions[id].name
    }

    pub fn prop_id(&self, name: &str) -> Option<PropId> {
        self.prop_index.get(name).copied()
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.action_index.get(name).copied()
    }

    /// Names of the members of `s`, in id order.
    pub fn state_names(&self, s: &State) -> Vec<&str> {
        s.iter().map(|p| self.prop_name(p)).collect()
    }

    /// Hex SHA-256 over the canonical domain file text.
    pub fn fingerprint(&self) -> String {
        let text = write_domain(self);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn is_applicable(&self, s: &State, a: ActionId) -> bool {
        self.actions
            .get(a)
            .is_some_and(|act| act.precondition.is_subset(s))
    }

    /// All actions whose precondition holds in `s`, ascending by id.
    pub fn applicable(&self, s: &State) -> Vec<ActionId> {
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.precondition.is_subset(s))
            .map(|(id, _)| id)
            .collect()
    }

    /// `(s \ del) ∪ add`; deletes first, so a proposition both required and
    /// added survives.
    pub fn apply(&self, s: &State, a: ActionId) -> Result<State, StripsError> {
        let act = self.action(a)?;
        if !act.precondition.is_subset(s) {
            let missing = act.precondition.iter().filter(|p| !s.contains(*p)).collect();
            return Err(StripsError::InapplicableAction { action: a, missing });
        }
        Ok(self.apply_unchecked(s, act))
    }

    fn apply_unchecked(&self, s: &State, act: &GroundAction) -> State {
        let mut next = s.clone();
        for p in act.del_effects.iter() {
            next.remove(p);
        }
        for p in act.add_effects.iter() {
            next.insert(p);
        }
        next
    }

    /// Checks a plan step by step. On success returns the final state.
    pub fn validate_plan(&self, inst: &Instance, plan: &[ActionId]) -> Result<State, PlanFailure> {
        let mut s = inst.initial.clone();
        for (step, &a) in plan.iter().enumerate() {
            s = match self.apply(&s, a) {
                Ok(next) => next,
                Err(StripsError::UnknownAction(_)) => {
                    return Err(PlanFailure::UnknownAction { step, action: a })
                }
                Err(StripsError::InapplicableAction { missing, .. }) => {
                    return Err(PlanFailure::Inapplicable { step, action: a, missing })
                }
                Err(e) => unreachable!("apply returned {e}"),
            };
        }
        if inst.goal_satisfied(&s) {
            Ok(s)
        } else {
            let missing = inst.goal.iter().filter(|p| !s.contains(*p)).collect();
            Err(PlanFailure::GoalNotReached { missing })
        }
    }

    pub fn check_state(&self, s: &State) -> Result<(), StripsError> {
        match s.max_id() {
            Some(p) if p >= self.num_props() => Err(StripsError::UnknownProposition(p)),
            _ => Ok(()),
        }
    }
}

/// Why a plan does not solve an instance.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanFailure {
    #[error("step {step}: action {action} is not applicable (missing {missing:?})")]
    Inapplicable { step: usize, action: ActionId, missing: Vec<PropId> },
    #[error("step {step}: unknown action id {action}")]
    UnknownAction { step: usize, action: ActionId },
    #[error("final state misses goal propositions {missing:?}")]
    GoalNotReached { missing: Vec<PropId> },
}

impl PlanFailure {
    /// Index of the failing step, `None` when every step applied but the
    /// goal was not reached.
    pub fn step(&self) -> Option<usize> {
        match self {
            PlanFailure::Inapplicable { step, .. } | PlanFailure::UnknownAction { step, .. } => Some(*step),
            PlanFailure::GoalNotReached { .. } => None,
        }
    }
}

/// A planning instance. The goal is a condition: any state containing all
/// goal propositions is a goal state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub initial: State,
    pub goal: State,
}

impl Instance {
    pub fn new(initial: State, goal: State) -> Result<Self, StripsError> {
        if goal.is_empty() {
            return Err(StripsError::EmptyGoal);
        }
        Ok(Instance { initial, goal })
    }

    pub fn goal_satisfied(&self, s: &State) -> bool {
        self.goal.is_subset(s)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}
