use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use thiserror::Error;

use super::{ActionId, GroundDomain, Instance, State};

pub const DEFAULT_ORACLE_BUDGET: usize = 200_000;

/// Domains with at most this many propositions are solved breadth-first.
const TINY_DOMAIN_PROPS: usize = 10;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum OracleError {
    #[error("goal is unreachable from the initial state")]
    Unsolvable,
    #[error("node budget of {0} expansions exceeded")]
    BudgetExceeded(usize),
    #[error("budget must be positive")]
    ZeroBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// Breadth-first on tiny domains, greedy best-first with h_add otherwise.
    #[default]
    Auto,
    BreadthFirst,
    GreedyBestFirst,
}

/// Additive delete-relaxation estimate of the cost to reach `goal` from `s`.
/// `None` when some goal proposition is unreachable even under relaxation.
pub fn additive_heuristic(domain: &GroundDomain, s: &State, goal: &State) -> Option<u64> {
    let mut cost = vec![u64::MAX; domain.num_props()];
    for p in s.iter() {
        cost[p] = 0;
    }
    loop {
        let mut changed = false;
        for a in domain.actions() {
            let mut pre_cost: u64 = 0;
            let mut reachable = true;
            for p in a.precondition.iter() {
                if cost[p] == u64::MAX {
                    reachable = false;
                    break;
                }
                pre_cost = pre_cost.saturating_add(cost[p]);
            }
            if !reachable {
                continue;
            }
            let via = pre_cost.saturating_add(1);
            for p in a.add_effects.iter() {
                if via < cost[p] {
                    cost[p] = via;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    goal.iter().try_fold(0u64, |acc, p| {
        (cost[p] != u64::MAX).then(|| acc.saturating_add(cost[p]))
    })
}

/// Reference planner. Deterministic: successors are generated in ascending
/// action id and ties keep generation order.
pub fn oracle_plan(
    domain: &GroundDomain,
    inst: &Instance,
    budget: usize,
    strategy: SearchStrategy,
) -> Result<Vec<ActionId>, OracleError> {
    if budget == 0 {
        return Err(OracleError::ZeroBudget);
    }
    if inst.goal_satisfied(&inst.initial) {
        return Ok(Vec::new());
    }
    match strategy {
        SearchStrategy::BreadthFirst => breadth_first(domain, inst, budget),
        SearchStrategy::GreedyBestFirst => greedy_best_first(domain, inst, budget),
        SearchStrategy::Auto if domain.num_props() <= TINY_DOMAIN_PROPS => {
            breadth_first(domain, inst, budget)
        }
        SearchStrategy::Auto => greedy_best_first(domain, inst, budget),
    }
}

fn extract_plan(parents: &HashMap<State, Option<(State, ActionId)>>, mut s: State) -> Vec<ActionId> {
    let mut plan = Vec::new();
    while let Some(Some((prev, a))) = parents.get(&s) {
        plan.push(*a);
        s = prev.clone();
    }
    plan.reverse();
    plan
}

fn breadth_first(domain: &GroundDomain, inst: &Instance, budget: usize) -> Result<Vec<ActionId>, OracleError> {
    let mut parents: HashMap<State, Option<(State, ActionId)>> = HashMap::new();
    parents.insert(inst.initial.clone(), None);
    let mut queue = VecDeque::from([inst.initial.clone()]);
    let mut expansions = 0;
    while let Some(s) = queue.pop_front() {
        if expansions == budget {
            return Err(OracleError::BudgetExceeded(budget));
        }
        expansions += 1;
        for a in domain.applicable(&s) {
            let next = domain.apply(&s, a).expect("applicable action");
            if parents.contains_key(&next) {
                continue;
            }
            parents.insert(next.clone(), Some((s.clone(), a)));
            if inst.goal_satisfied(&next) {
                return Ok(extract_plan(&parents, next));
            }
            queue.push_back(next);
        }
    }
    Err(OracleError::Unsolvable)
}

fn greedy_best_first(domain: &GroundDomain, inst: &Instance, budget: usize) -> Result<Vec<ActionId>, OracleError> {
    let Some(h0) = additive_heuristic(domain, &inst.initial, &inst.goal) else {
        return Err(OracleError::Unsolvable);
    };
    let mut parents: HashMap<State, Option<(State, ActionId)>> = HashMap::new();
    parents.insert(inst.initial.clone(), None);
    let mut open = BinaryHeap::new();
    let mut counter: u64 = 0;
    let mut nodes = vec![inst.initial.clone()];
    open.push(Reverse((h0, counter, 0usize)));
    let mut expansions = 0;
    while let Some(Reverse((_, _, idx))) = open.pop() {
        if expansions == budget {
            return Err(OracleError::BudgetExceeded(budget));
        }
        expansions += 1;
        let s = nodes[idx].clone();
        if inst.goal_satisfied(&s) {
            return Ok(extract_plan(&parents, s));
        }
        for a in domain.applicable(&s) {
            let next = domain.apply(&s, a).expect("applicable action");
            if parents.contains_key(&next) {
                continue;
            }
            parents.insert(next.clone(), Some((s.clone(), a)));
            // dead ends under relaxation stay dead in the real problem
            if let Some(h) = additive_heuristic(domain, &next, &inst.goal) {
                counter += 1;
                nodes.push(next);
                open.push(Reverse((h, counter, nodes.len() - 1)));
            }
        }
    }
    Err(OracleError::Unsolvable)
}
