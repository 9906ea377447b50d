//! Forward search over a learned transition model. At each state the
//! `top_k` highest-ranked applicable actions are candidates, and those not
//! yet tried from that state are expanded in confidence order; dead ends pop the history stack and
//! drop the last action from the plan. Each goal target gets a fresh search.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::LearnedDomainModel;
use crate::learner::LearnerError;
use crate::selector::SelectorNet;
use crate::strips::{ActionId, Instance, State};

pub const DEFAULT_PLAN_BUDGET: usize = 10_000;

/// What the planner needs from a learned domain model.
pub trait PlanningModel {
    fn num_props(&self) -> usize;
    fn applicable(&self, s: &State) -> Vec<ActionId>;
    fn successor(&self, s: &State, a: ActionId) -> Result<State, LearnerError>;
    fn vector(&self, s: &State) -> Vec<f64>;
}

/// Ranks actions for moving from one state vector towards another.
pub trait ActionSelector {
    /// Up to `k_top` actions, most confident first.
    fn recommend(&self, from: &[f64], goal: &[f64], k_top: usize) -> Result<Vec<(ActionId, f64)>, LearnerError>;
}

impl PlanningModel for LearnedDomainModel {
    fn num_props(&self) -> usize {
        LearnedDomainModel::num_props(self)
    }

    fn applicable(&self, s: &State) -> Vec<ActionId> {
        self.learned_applicable(s)
    }

    fn successor(&self, s: &State, a: ActionId) -> Result<State, LearnerError> {
        LearnedDomainModel::successor(self, s, a)
    }

    fn vector(&self, s: &State) -> Vec<f64> {
        self.bridge_state(s)
    }
}

impl ActionSelector for SelectorNet {
    fn recommend(&self, from: &[f64], goal: &[f64], k_top: usize) -> Result<Vec<(ActionId, f64)>, LearnerError> {
        SelectorNet::recommend(self, from, goal, k_top)
    }
}

/// How a goal condition becomes a full state for the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalMode {
    /// The final state of a recorded trace, when one is supplied.
    Recorded,
    /// Goal propositions true, everything else false.
    Canonical,
    /// The initial state with the goal propositions added.
    OverlayInitial,
}

impl fmt::Display for GoalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GoalMode::Recorded => "recorded",
            GoalMode::Canonical => "canonical",
            GoalMode::OverlayInitial => "overlay-initial",
        })
    }
}

impl std::str::FromStr for GoalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "recorded" => Ok(GoalMode::Recorded),
            "canonical" => Ok(GoalMode::Canonical),
            "overlay-initial" => Ok(GoalMode::OverlayInitial),
            _ => Err(format!("unknown goal mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub top_k: usize,
    pub budget: usize,
    /// Goal targets tried in order; duplicates are skipped.
    pub goal_modes: Vec<GoalMode>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            top_k: 3,
            budget: DEFAULT_PLAN_BUDGET,
            goal_modes: vec![GoalMode::Recorded, GoalMode::Canonical, GoalMode::OverlayInitial],
        }
    }
}

/// The distinct goal states for `inst`, in the order of `modes`.
pub fn goal_targets(inst: &Instance, recorded: Option<&State>, modes: &[GoalMode]) -> Vec<State> {
    let mut out: Vec<State> = Vec::new();
    for mode in modes {
        let target = match mode {
            GoalMode::Recorded => match recorded {
                Some(s) => s.clone(),
                None => continue,
            },
            GoalMode::Canonical => inst.goal.clone(),
            GoalMode::OverlayInitial => inst.initial.iter().chain(inst.goal.iter()).collect(),
        };
        if !out.contains(&target) {
            out.push(target);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Plan(Vec<ActionId>),
    Fail,
    BudgetExceeded,
}

impl Outcome {
    pub fn plan(&self) -> Option<&[ActionId]> {
        match self {
            Outcome::Plan(p) => Some(p),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Plan(_) => "plan",
            Outcome::Fail => "fail",
            Outcome::BudgetExceeded => "budget-exceeded",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanStats {
    pub expansions: usize,
    pub backtracks: usize,
    pub goal_attempts: usize,
}

/// Search trace, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanEvent {
    GoalTarget(usize),
    Expand { state: State, action: ActionId },
    /// Popped the history; the plan now has `plan_len` actions.
    Backtrack { plan_len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub outcome: Outcome,
    pub stats: PlanStats,
    pub events: Vec<PlanEvent>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("top_k must be positive")]
    ZeroTopK,
    #[error("instance mentions proposition {0}, outside the model's {1} propositions")]
    PropOutOfRange(usize, usize),
    #[error(transparent)]
    Model(#[from] LearnerError),
}

/// Plans for `inst`. `recorded` is an optional full goal state used by
/// [`GoalMode::Recorded`].
pub fn plan<M: PlanningModel + ?Sized, S: ActionSelector + ?Sized>(
    model: &M,
    selector: &S,
    inst: &Instance,
    recorded: Option<&State>,
    cfg: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    if cfg.top_k == 0 {
        return Err(PlanError::ZeroTopK);
    }
    let p = model.num_props();
    for s in [&inst.initial, &inst.goal] {
        if let Some(m) = s.max_id().filter(|&m| m >= p) {
            return Err(PlanError::PropOutOfRange(m, p));
        }
    }
    let mut stats = PlanStats::default();
    let mut events = Vec::new();
    let done = |outcome, stats, events| Ok(PlanResult { outcome, stats, events });
    if inst.goal_satisfied(&inst.initial) {
        return done(Outcome::Plan(Vec::new()), stats, events);
    }
    for (gi, target) in goal_targets(inst, recorded, &cfg.goal_modes).iter().enumerate() {
        stats.goal_attempts += 1;
        events.push(PlanEvent::GoalTarget(gi));
        let goal_vector = model.vector(target);
        let mut visited: BTreeSet<(State, ActionId)> = BTreeSet::new();
        let mut history: Vec<(State, Vec<ActionId>)> = Vec::new();
        let mut s = inst.initial.clone();
        let mut plan: Vec<ActionId> = Vec::new();
        loop {
            let applicable = model.applicable(&s);
            let candidate = selector
                .recommend(&model.vector(&s), &goal_vector, usize::MAX)?
                .into_iter()
                .map(|(a, _)| a)
                .filter(|a| applicable.contains(a))
                .take(cfg.top_k)
                .find(|a| !visited.contains(&(s.clone(), *a)));
            match candidate {
                Some(a) => {
                    if stats.expansions == cfg.budget {
                        return done(Outcome::BudgetExceeded, stats, events);
                    }
                    stats.expansions += 1;
                    events.push(PlanEvent::Expand { state: s.clone(), action: a });
                    visited.insert((s.clone(), a));
                    let next = model.successor(&s, a)?;
                    history.push((std::mem::replace(&mut s, next), plan.clone()));
                    plan.push(a);
                    if inst.goal_satisfied(&s) {
                        return done(Outcome::Plan(plan), stats, events);
                    }
                }
                None => match history.pop() {
                    Some((prev, prefix)) => {
                        stats.backtracks += 1;
                        s = prev;
                        plan = prefix;
                        events.push(PlanEvent::Backtrack { plan_len: plan.len() });
                    }
                    None => break,
                },
            }
        }
    }
    done(Outcome::Fail, stats, events)
}

/// Decoded states visited by applying `plan` from `initial` under the
/// model, starting with `initial`.
pub fn simulate<M: PlanningModel + ?Sized>(model: &M, initial: &State, plan: &[ActionId]) -> Result<Vec<State>, LearnerError> {
    let mut states = vec![initial.clone()];
    for &a in plan {
        let next = model.successor(states.last().unwrap(), a)?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests;
