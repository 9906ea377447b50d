use super::*;
use crate::domains::DomainTemplate;
use crate::strips::{oracle_plan, GroundAction, GroundDomain, SearchStrategy, DEFAULT_ORACLE_BUDGET};
use crate::traces::gen_instances;

/// The true domain, with a state's indicator vector as its "embedding".
struct Exact<'a>(&'a GroundDomain);

impl PlanningModel for Exact<'_> {
    fn num_props(&self) -> usize {
        self.0.num_props()
    }

    fn applicable(&self, s: &State) -> Vec<ActionId> {
        self.0.applicable(s)
    }

    fn successor(&self, s: &State, a: ActionId) -> Result<State, LearnerError> {
        Ok(self.0.apply(s, a).expect("planner only applies applicable actions"))
    }

    fn vector(&self, s: &State) -> Vec<f64> {
        s.to_attrs(self.0.num_props())
    }
}

/// A selector that decodes the indicator vectors and ranks with a closure.
struct Ranked<F>(F);

impl<F: Fn(&State, &State) -> Vec<ActionId>> ActionSelector for Ranked<F> {
    fn recommend(&self, from: &[f64], goal: &[f64], k_top: usize) -> Result<Vec<(ActionId, f64)>, LearnerError> {
        let dec = |v: &[f64]| v.iter().enumerate().filter(|(_, x)| **x > 0.5).map(|(i, _)| i).collect::<State>();
        let n = (self.0)(&dec(from), &dec(goal)).len() as f64;
        Ok((self.0)(&dec(from), &dec(goal)).into_iter().take(k_top).enumerate().map(|(i, a)| (a, 1.0 - i as f64 / n)).collect())
    }
}

fn fixed(order: Vec<ActionId>) -> Ranked<impl Fn(&State, &State) -> Vec<ActionId>> {
    Ranked(move |_: &State, _: &State| order.clone())
}

fn domain(props: &[&str], actions: &[(&str, &[usize], &[usize], &[usize])]) -> GroundDomain {
    let acts = actions
        .iter()
        .map(|(n, pre, add, del)| {
            GroundAction::new(*n, pre.iter().copied().collect(), add.iter().copied().collect(), del.iter().copied().collect())
        })
        .collect();
    GroundDomain::new("test", props.iter().map(|p| p.to_string()).collect(), acts).unwrap()
}

/// start --trap--> dead (no exits); start --go--> goal.
fn trap_domain() -> GroundDomain {
    domain(&["start", "dead", "goal"], &[("trap", &[0], &[1], &[0]), ("go", &[0], &[2], &[0])])
}

/// p and q toggle into each other; r is unreachable.
fn cycle_domain() -> GroundDomain {
    domain(&["p", "q", "r"], &[("to-q", &[0], &[1], &[0]), ("to-p", &[1], &[0], &[1])])
}

fn cfg() -> PlannerConfig {
    PlannerConfig::default()
}

fn inst(initial: &[usize], goal: &[usize]) -> Instance {
    Instance::new(initial.iter().copied().collect(), goal.iter().copied().collect()).unwrap()
}

#[test]
fn satisfied_initial_state_gives_empty_plan() {
    let d = trap_domain();
    let r = plan(&Exact(&d), &fixed(vec![0, 1]), &inst(&[0, 2], &[2]), None, &cfg()).unwrap();
    assert_eq!(r.outcome, Outcome::Plan(vec![]));
    assert_eq!(r.stats, PlanStats::default());
}

#[test]
fn backtracks_out_of_a_misleading_first_choice() {
    let d = trap_domain();
    let r = plan(&Exact(&d), &fixed(vec![0, 1]), &inst(&[0], &[2]), None, &cfg()).unwrap();
    assert_eq!(r.outcome, Outcome::Plan(vec![1]));
    assert_eq!(r.stats.backtracks, 1);
    assert_eq!(r.stats.expansions, 2);
    assert_eq!(
        r.events,
        vec![
            PlanEvent::GoalTarget(0),
            PlanEvent::Expand { state: State::from([0]), action: 0 },
            PlanEvent::Backtrack { plan_len: 0 },
            PlanEvent::Expand { state: State::from([0]), action: 1 },
        ]
    );
}

#[test]
fn only_top_k_recommendations_are_considered() {
    let d = trap_domain();
    let narrow = PlannerConfig { top_k: 1, ..cfg() };
    let r = plan(&Exact(&d), &fixed(vec![0, 1]), &inst(&[0], &[2]), None, &narrow).unwrap();
    assert_eq!(r.outcome, Outcome::Fail);
}

/// Splits the event log into goal attempts.
fn attempts(events: &[PlanEvent]) -> Vec<&[PlanEvent]> {
    let starts: Vec<usize> = events.iter().enumerate().filter(|(_, e)| matches!(e, PlanEvent::GoalTarget(_))).map(|(i, _)| i).collect();
    starts.iter().enumerate().map(|(k, &s)| &events[s..*starts.get(k + 1).unwrap_or(&events.len())]).collect()
}

#[test]
fn visited_pairs_are_never_expanded_twice_and_history_is_lifo() {
    let d = cycle_domain();
    let r = plan(&Exact(&d), &fixed(vec![0, 1]), &inst(&[0], &[2]), None, &cfg()).unwrap();
    assert_eq!(r.outcome, Outcome::Fail);
    for attempt in attempts(&r.events) {
        let mut seen = BTreeSet::new();
        let mut len = 0usize;
        for e in attempt {
            match e {
                PlanEvent::Expand { state, action } => {
                    assert!(seen.insert((state.clone(), *action)), "re-expanded {state} {action}");
                    len += 1;
                }
                PlanEvent::Backtrack { plan_len } => {
                    assert_eq!(*plan_len + 1, len);
                    len = *plan_len;
                }
                PlanEvent::GoalTarget(_) => {}
            }
        }
        assert_eq!(len, 0, "attempt ends with an empty history");
    }
}

#[test]
fn every_goal_target_is_tried_before_failing() {
    let d = cycle_domain();
    let recorded = State::from([1, 2]);
    let r = plan(&Exact(&d), &fixed(vec![0, 1]), &inst(&[0], &[2]), Some(&recorded), &cfg()).unwrap();
    assert_eq!(r.outcome, Outcome::Fail);
    assert_eq!(r.stats.goal_attempts, 3);
    let targets: Vec<_> = r.events.iter().filter(|e| matches!(e, PlanEvent::GoalTarget(_))).collect();
    assert_eq!(targets, vec![&PlanEvent::GoalTarget(0), &PlanEvent::GoalTarget(1), &PlanEvent::GoalTarget(2)]);
    // the same search state is revisited in each attempt
    let first = attempts(&r.events)[0][1..].to_vec();
    assert_eq!(attempts(&r.events)[1][1..].to_vec(), first);
}

#[test]
fn goal_targets_follow_mode_order_and_skip_duplicates() {
    let i = inst(&[0], &[2]);
    let rec = State::from([2]);
    let all = [GoalMode::Recorded, GoalMode::Canonical, GoalMode::OverlayInitial];
    assert_eq!(goal_targets(&i, Some(&rec), &all), vec![State::from([2]), State::from([0, 2])]);
    assert_eq!(goal_targets(&i, None, &all), vec![State::from([2]), State::from([0, 2])]);
    assert_eq!(goal_targets(&i, None, &[GoalMode::Recorded]), Vec::<State>::new());
    assert_eq!(goal_targets(&i, None, &[GoalMode::OverlayInitial]), vec![State::from([0, 2])]);
}

#[test]
fn budget_exhaustion_is_reported() {
    let names: Vec<String> = (0..40).map(|i| format!("p{i}")).collect();
    let acts: Vec<GroundAction> =
        (0..39).map(|i| GroundAction::new(format!("step{i}"), State::from([i]), State::from([i + 1]), State::from([i]))).collect();
    let mut names = names;
    names.push("never".into());
    let d = GroundDomain::new("chain", names, acts).unwrap();
    let order: Vec<ActionId> = (0..39).collect();
    let ranked = Ranked(move |s: &State, _: &State| {
        let mut o = order.clone();
        o.sort_by_key(|&a| !s.contains(a));
        o
    });
    let r = plan(&Exact(&d), &ranked, &inst(&[0], &[40]), None, &PlannerConfig { budget: 10, ..cfg() }).unwrap();
    assert_eq!(r.outcome, Outcome::BudgetExceeded);
    assert_eq!(r.stats.expansions, 10);
    let r = plan(&Exact(&d), &ranked, &inst(&[0], &[39]), None, &PlannerConfig { budget: 39, ..cfg() }).unwrap();
    assert_eq!(r.outcome.plan().map(<[_]>::len), Some(39));
}

#[test]
fn argument_errors() {
    let d = trap_domain();
    assert!(matches!(
        plan(&Exact(&d), &fixed(vec![0]), &inst(&[0], &[2]), None, &PlannerConfig { top_k: 0, ..cfg() }),
        Err(PlanError::ZeroTopK)
    ));
    assert!(matches!(plan(&Exact(&d), &fixed(vec![0]), &inst(&[0], &[7]), None, &cfg()), Err(PlanError::PropOutOfRange(7, 3))));
}

#[test]
fn simulate_lengths() {
    let d = trap_domain();
    let s0 = State::from([0]);
    assert_eq!(simulate(&Exact(&d), &s0, &[]).unwrap(), vec![s0.clone()]);
    assert_eq!(simulate(&Exact(&d), &s0, &[1]).unwrap(), vec![s0, State::from([2])]);
}

#[test]
fn exact_model_with_oracle_selector_solves_mini_instances() {
    let t = DomainTemplate::Ferry { cars: 2, locations: 2 };
    let d = t.build();
    let oracle = Ranked(|s: &State, goal: &State| {
        let first = Instance::new(s.clone(), goal.clone())
            .ok()
            .and_then(|i| oracle_plan(&d, &i, DEFAULT_ORACLE_BUDGET, SearchStrategy::BreadthFirst).ok())
            .and_then(|p| p.first().copied());
        let mut order: Vec<ActionId> = first.into_iter().collect();
        order.extend((0..d.num_actions()).filter(|a| Some(*a) != first));
        order
    });
    for i in gen_instances(&t, 25, 11).unwrap() {
        let r = plan(&Exact(&d), &oracle, &i, None, &cfg()).unwrap();
        let p = r.outcome.plan().expect("solved");
        assert!(d.validate_plan(&i, p).is_ok());
        assert!(p.len() <= r.stats.expansions);
        assert!(i.goal_satisfied(simulate(&Exact(&d), &i.initial, p).unwrap().last().unwrap()));
        let optimal = oracle_plan(&d, &i, DEFAULT_ORACLE_BUDGET, SearchStrategy::BreadthFirst).unwrap();
        assert_eq!(p.len(), optimal.len());
    }
}
