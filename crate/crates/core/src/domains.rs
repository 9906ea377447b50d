//! Parameterized mini-domains: ferry, logistics and blocks families, each
//! with a random instance generator.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strips::{GroundAction, GroundDomain, Instance, State};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid domain template `{input}`: {reason}")]
pub struct TemplateError {
    input: String,
    reason: String,
}

/// A domain family plus its size parameters, written as e.g.
/// `ferry:cars=3,locations=3`, `logistics:cities=2,packages=2`, `blocks:blocks=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DomainTemplate {
    Ferry { cars: usize, locations: usize },
    Logistics { cities: usize, packages: usize },
    Blocks { blocks: usize },
}

struct Builder {
    props: Vec<String>,
    actions: Vec<GroundAction>,
}

impl Builder {
    fn new() -> Self {
        Builder { props: Vec::new(), actions: Vec::new() }
    }

    fn prop(&mut self, name: String) {
        self.props.push(name);
    }

    fn id(&self, name: &str) -> usize {
        self.props
            .iter()
            .position(|p| p == name)
            .unwrap_or_else(|| panic!("undeclared proposition {name}"))
    }

    fn set(&self, names: &[String]) -> State {
        names.iter().map(|n| self.id(n)).collect()
    }

    fn action(&mut self, name: String, pre: &[String], add: &[String], del: &[String]) {
        let a = GroundAction::new(name, self.set(pre), self.set(add), self.set(del));
        self.actions.push(a);
    }

    fn finish(self, name: &str) -> GroundDomain {
        GroundDomain::new(name, self.props, self.actions).expect("generated domain is well formed")
    }
}

impl DomainTemplate {
    pub fn family(&self) -> &'static str {
        match self {
            DomainTemplate::Ferry { .. } => "ferry",
            DomainTemplate::Logistics { .. } => "logistics",
            DomainTemplate::Blocks { .. } => "blocks",
        }
    }

    pub fn build(&self) -> GroundDomain {
        match *self {
            DomainTemplate::Ferry { cars, locations } => build_ferry(cars, locations),
            DomainTemplate::Logistics { cities, packages } => build_logistics(cities, packages),
            DomainTemplate::Blocks { blocks } => build_blocks(blocks),
        }
    }

    /// Draws one random instance of this family over `domain`, which must be
    /// `self.build()`. The goal may already hold in the initial state.
    pub fn random_instance<R: Rng>(&self, domain: &GroundDomain, rng: &mut R) -> Instance {
        let ids = |names: Vec<String>| -> State {
            names.iter().map(|n| domain.prop_id(n).expect("template proposition")).collect()
        };
        let (init, goal) = match *self {
            DomainTemplate::Ferry { cars, locations } => {
                let mut init = vec![format!("at-ferry(l{})", rng.gen_range(1..=locations)), "empty-ferry".into()];
                let mut goal = Vec::new();
                for c in 1..=cars {
                    init.push(format!("at(c{c},l{})", rng.gen_range(1..=locations)));
                    goal.push(format!("at(c{c},l{})", rng.gen_range(1..=locations)));
                }
                (init, goal)
            }
            DomainTemplate::Logistics { cities, packages } => {
                let mut init = Vec::new();
                for c in 1..=cities {
                    init.push(format!("at(t{c},{})", city_loc(c, rng.gen_bool(0.5))));
                }
                init.push(format!("at(plane,{})", city_loc(rng.gen_range(1..=cities), true)));
                let mut goal = Vec::new();
                for p in 1..=packages {
                    let from = city_loc(rng.gen_range(1..=cities), rng.gen_bool(0.5));
                    let to = city_loc(rng.gen_range(1..=cities), rng.gen_bool(0.5));
                    init.push(format!("at(p{p},{from})"));
                    goal.push(format!("at(p{p},{to})"));
                }
                (init, goal)
            }
            DomainTemplate::Blocks { blocks } => {
                let init = towers_facts(&random_towers(blocks, rng), true);
                let goal = towers_facts(&random_towers(blocks, rng), false);
                (init, goal)
            }
        };
        Instance::new(ids(init), ids(goal)).expect("template goals are nonempty")
    }
}

fn build_ferry(cars: usize, locations: usize) -> GroundDomain {
    let mut b = Builder::new();
    for l in 1..=locations {
        b.prop(format!("at-ferry(l{l})"));
    }
    b.prop("empty-ferry".into());
    for c in 1..=cars {
        for l in 1..=locations {
            b.prop(format!("at(c{c},l{l})"));
        }
        b.prop(format!("on(c{c})"));
    }
    for from in 1..=locations {
        for to in 1..=locations {
            if from != to {
                b.action(
                    format!("sail(l{from},l{to})"),
                    &[format!("at-ferry(l{from})")],
                    &[format!("at-ferry(l{to})")],
                    &[format!("at-ferry(l{from})")],
                );
            }
        }
    }
    for c in 1..=cars {
        for l in 1..=locations {
            let at = format!("at(c{c},l{l})");
            let ferry = format!("at-ferry(l{l})");
            let on = format!("on(c{c})");
            let empty = "empty-ferry".to_string();
            b.action(
                format!("board(c{c},l{l})"),
                &[at.clone(), ferry.clone(), empty.clone()],
                &[on.clone()],
                &[at.clone(), empty.clone()],
            );
            b.action(format!("debark(c{c},l{l})"), &[on.clone(), ferry], &[at, empty], &[on]);
        }
    }
    b.finish(&format!("ferry-c{cars}-l{locations}"))
}

/// City `c` has an airport `a{c}` and a post office `o{c}`.
fn city_loc(c: usize, airport: bool) -> String {
    if airport {
        format!("a{c}")
    } else {
        format!("o{c}")
    }
}

fn build_logistics(cities: usize, packages: usize) -> GroundDomain {
    let mut b = Builder::new();
    let locs: Vec<(usize, String)> = (1..=cities)
        .flat_map(|c| [(c, city_loc(c, true)), (c, city_loc(c, false))])
        .collect();
    for c in 1..=cities {
        for air in [true, false] {
            b.prop(format!("at(t{c},{})", city_loc(c, air)));
        }
    }
    for c in 1..=cities {
        b.prop(format!("at(plane,{})", city_loc(c, true)));
    }
    for p in 1..=packages {
        for (_, l) in &locs {
            b.prop(format!("at(p{p},{l})"));
        }
        for c in 1..=cities {
            b.prop(format!("in(p{p},t{c})"));
        }
        b.prop(format!("in(p{p},plane)"));
    }

    for c in 1..=cities {
        for (from, to) in [(true, false), (false, true)] {
            let (from, to) = (city_loc(c, from), city_loc(c, to));
            b.action(
                format!("drive(t{c},{from},{to})"),
                &[format!("at(t{c},{from})")],
                &[format!("at(t{c},{to})")],
                &[format!("at(t{c},{from})")],
            );
        }
    }
    for from in 1..=cities {
        for to in 1..=cities {
            if from != to {
                let (from, to) = (city_loc(from, true), city_loc(to, true));
                b.action(
                    format!("fly(plane,{from},{to})"),
                    &[format!("at(plane,{from})")],
                    &[format!("at(plane,{to})")],
                    &[format!("at(plane,{from})")],
                );
            }
        }
    }
    for p in 1..=packages {
        for (c, l) in &locs {
            let at_p = format!("at(p{p},{l})");
            let at_t = format!("at(t{c},{l})");
            let in_t = format!("in(p{p},t{c})");
            b.action(format!("load-truck(p{p},t{c},{l})"), &[at_p.clone(), at_t.clone()], &[in_t.clone()], &[at_p.clone()]);
            b.action(format!("unload-truck(p{p},t{c},{l})"), &[in_t.clone(), at_t], &[at_p], &[in_t]);
        }
        for c in 1..=cities {
            let a = city_loc(c, true);
            let at_p = format!("at(p{p},{a})");
            let at_plane = format!("at(plane,{a})");
            let in_plane = format!("in(p{p},plane)");
            b.action(
                format!("load-plane(p{p},{a})"),
                &[at_p.clone(), at_plane.clone()],
                &[in_plane.clone()],
                &[at_p.clone()],
            );
            b.action(format!("unload-plane(p{p},{a})"), &[in_plane.clone(), at_plane], &[at_p], &[in_plane]);
        }
    }
    b.finish(&format!("logistics-c{cities}-p{packages}"))
}

fn build_blocks(blocks: usize) -> GroundDomain {
    let mut b = Builder::new();
    b.prop("handempty".into());
    for x in 1..=blocks {
        b.prop(format!("ontable(b{x})"));
        b.prop(format!("clear(b{x})"));
        b.prop(format!("holding(b{x})"));
    }
    for x in 1..=blocks {
        for y in 1..=blocks {
            if x != y {
                b.prop(format!("on(b{x},b{y})"));
            }
        }
    }
    let he = "handempty".to_string();
    for x in 1..=blocks {
        let (ontable, clear, holding) = (format!("ontable(b{x})"), format!("clear(b{x})"), format!("holding(b{x})"));
        b.action(
            format!("pickup(b{x})"),
            &[ontable.clone(), clear.clone(), he.clone()],
            &[holding.clone()],
            &[ontable.clone(), clear.clone(), he.clone()],
        );
        b.action(
            format!("putdown(b{x})"),
            &[holding.clone()],
            &[ontable, clear, he.clone()],
            &[holding],
        );
    }
    for x in 1..=blocks {
        for y in 1..=blocks {
            if x == y {
                continue;
            }
            let on = format!("on(b{x},b{y})");
            let (cx, cy) = (format!("clear(b{x})"), format!("clear(b{y})"));
            let hx = format!("holding(b{x})");
            b.action(
                format!("stack(b{x},b{y})"),
                &[hx.clone(), cy.clone()],
                &[on.clone(), cx.clone(), he.clone()],
                &[hx.clone(), cy.clone()],
            );
            b.action(
                format!("unstack(b{x},b{y})"),
                &[on.clone(), cx.clone(), he.clone()],
                &[hx, cy],
                &[on, cx, he.clone()],
            );
        }
    }
    b.finish(&format!("blocks-b{blocks}"))
}

/// Random partition of a random permutation of blocks into towers,
/// each listed bottom to top.
fn random_towers<R: Rng>(blocks: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (1..=blocks).collect();
    order.shuffle(rng);
    let mut towers: Vec<Vec<usize>> = Vec::new();
    for x in order {
        match towers.last_mut() {
            Some(t) if rng.gen_bool(0.5) => t.push(x),
            _ => towers.push(vec![x]),
        }
    }
    towers
}

/// `with_state` adds clear/handempty so the facts form a complete state;
/// otherwise only the on/ontable relations (a goal condition).
fn towers_facts(towers: &[Vec<usize>], with_state: bool) -> Vec<String> {
    let mut facts = Vec::new();
    if with_state {
        facts.push("handempty".into());
    }
    for t in towers {
        facts.push(format!("ontable(b{})", t[0]));
        for w in t.windows(2) {
            facts.push(format!("on(b{},b{})", w[1], w[0]));
        }
        if with_state {
            facts.push(format!("clear(b{})", t[t.len() - 1]));
        }
    }
    facts
}

impl fmt::Display for DomainTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainTemplate::Ferry { cars, locations } => write!(f, "ferry:cars={cars},locations={locations}"),
            DomainTemplate::Logistics { cities, packages } => {
                write!(f, "logistics:cities={cities},packages={packages}")
            }
            DomainTemplate::Blocks { blocks } => write!(f, "blocks:blocks={blocks}"),
        }
    }
}

impl FromStr for DomainTemplate {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| TemplateError { input: s.to_string(), reason: reason.to_string() };
        let (family, params) = s.split_once(':').unwrap_or((s, ""));
        let mut values = std::collections::BTreeMap::new();
        for kv in params.split(',').filter(|kv| !kv.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let v: usize = v.trim().parse().map_err(|_| err("size must be a positive integer"))?;
            if v == 0 {
                return Err(err("size must be a positive integer"));
            }
            values.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str, default: usize| values.remove(key).unwrap_or(default);
        let template = match family.trim() {
            "ferry" => DomainTemplate::Ferry { cars: take("cars", 3), locations: take("locations", 3) },
            "logistics" => DomainTemplate::Logistics { cities: take("cities", 2), packages: take("packages", 2) },
            "blocks" => DomainTemplate::Blocks { blocks: take("blocks", 3) },
            _ => return Err(err("unknown family (expected ferry, logistics or blocks)")),
        };
        if let Some(k) = values.keys().next() {
            return Err(err(&format!("unknown parameter `{k}`")));
        }
        match template {
            DomainTemplate::Ferry { locations: 1, .. } => Err(err("ferry needs at least 2 locations")),
            DomainTemplate::Logistics { cities: 1, .. } => Err(err("logistics needs at least 2 cities")),
            t => Ok(t),
        }
    }
}

impl TryFrom<String> for DomainTemplate {
    type Error = TemplateError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DomainTemplate> for String {
    fn from(t: DomainTemplate) -> String {
        t.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strips::{oracle_plan, SearchStrategy, DEFAULT_ORACLE_BUDGET};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes() {
        let ferry = DomainTemplate::Ferry { cars: 3, locations: 3 }.build();
        assert_eq!((ferry.num_props(), ferry.num_actions()), (16, 24));
        let log = DomainTemplate::Logistics { cities: 2, packages: 2 }.build();
        assert_eq!((log.num_props(), log.num_actions()), (20, 30));
        let bw = DomainTemplate::Blocks { blocks: 3 }.build();
        assert_eq!((bw.num_props(), bw.num_actions()), (16, 18));
    }

    #[test]
    fn template_strings_round_trip() {
        for t in [
            DomainTemplate::Ferry { cars: 2, locations: 4 },
            DomainTemplate::Logistics { cities: 3, packages: 1 },
            DomainTemplate::Blocks { blocks: 5 },
        ] {
            assert_eq!(t.to_string().parse::<DomainTemplate>().unwrap(), t);
        }
        assert_eq!("ferry".parse::<DomainTemplate>().unwrap(), DomainTemplate::Ferry { cars: 3, locations: 3 });
        assert!("ferry:wheels=2".parse::<DomainTemplate>().is_err());
        assert!("ferry:cars=0".parse::<DomainTemplate>().is_err());
        assert!("rovers".parse::<DomainTemplate>().is_err());
    }

    #[test]
    fn random_instances_are_solvable_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [
            DomainTemplate::Ferry { cars: 3, locations: 3 },
            DomainTemplate::Logistics { cities: 2, packages: 2 },
            DomainTemplate::Blocks { blocks: 4 },
        ] {
            let d = t.build();
            for _ in 0..15 {
                let inst = t.random_instance(&d, &mut rng);
                let plan = oracle_plan(&d, &inst, DEFAULT_ORACLE_BUDGET, SearchStrategy::Auto)
                    .unwrap_or_else(|e| panic!("{t}: {e}"));
                assert!(d.validate_plan(&inst, &plan).is_ok());
            }
        }
    }
}
