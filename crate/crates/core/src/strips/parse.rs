//! Line-oriented text formats for ground domains and instances.
//!
//! Domain file:
//!
//! ```text
//! # comment
//! domain ferry
//! prop at(c1,l1) at(c1,l2) empty-ferry
//! action board(c1,l1)
//! pre at(c1,l1) at-ferry(l1) empty-ferry
//! add on(c1)
//! del at(c1,l1) empty-ferry
//! ```
//!
//! Every name is a single whitespace-free token. `prop` lines may repeat;
//! `pre`/`add`/`del` attach to the most recent `action` and may be omitted.
//! Propositions must be declared before they are referenced.
//!
//! Instance file: one or more records.
//!
//! ```text
//! instance
//! init at(c1,l1) at-ferry(l1) empty-ferry
//! goal at(c1,l2)
//! goal-state at(c1,l2) at-ferry(l2) empty-ferry
//! ```
//!
//! `goal-state` is optional and records a full goal state when one is known.

use std::fmt::Write as _;

use thiserror::Error;

use super::{GroundAction, GroundDomain, Instance, State};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }
}

/// Whitespace-separated tokens with their 1-based columns.
pub(crate) fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(byte, tok)| (line[..byte].chars().count() + 1, tok))
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("");
        (!line.trim().is_empty()).then_some((i + 1, line))
    })
}

pub(crate) fn resolve_props(
    domain: &GroundDomain,
    line: usize,
    toks: &[(usize, &str)],
) -> Result<State, ParseError> {
    toks.iter()
        .map(|&(col, name)| {
            domain
                .prop_id(name)
                .ok_or_else(|| ParseError::new(line, col, format!("unknown proposition `{name}`")))
        })
        .collect()
}

struct PendingAction {
    name: String,
    line: usize,
    pre: State,
    add: State,
    del: State,
}

pub fn parse_domain(text: &str) -> Result<GroundDomain, ParseError> {
    let mut name: Option<String> = None;
    let mut props: Vec<String> = Vec::new();
    let mut prop_ids = std::collections::HashMap::new();
    let mut actions: Vec<PendingAction> = Vec::new();

    for (line_no, line) in content_lines(text) {
        let toks = tokens(line);
        let (kw_col, keyword) = toks[0];
        let args = &toks[1..];
        match keyword {
            "domain" => {
                if name.is_some() {
                    return Err(ParseError::new(line_no, kw_col, "duplicate `domain` line"));
                }
                match args {
                    [(_, n)] => name = Some(n.to_string()),
                    _ => return Err(ParseError::new(line_no, kw_col, "`domain` takes exactly one name")),
                }
            }
            "prop" => {
                if !actions.is_empty() {
                    return Err(ParseError::new(line_no, kw_col, "`prop` after the first `action`"));
                }
                for &(col, p) in args {
                    if prop_ids.insert(p.to_string(), props.len()).is_some() {
                        return Err(ParseError::new(line_no, col, format!("duplicate proposition `{p}`")));
                    }
                    props.push(p.to_string());
                }
            }
            "action" => match args {
                [(col, n)] => {
                    if actions.iter().any(|a| a.name == *n) {
                        return Err(ParseError::new(line_no, *col, format!("duplicate action `{n}`")));
                    }
                    actions.push(PendingAction {
                        name: n.to_string(),
                        line: line_no,
                        pre: State::new(),
                        add: State::new(),
                        del: State::new(),
                    });
                }
                _ => return Err(ParseError::new(line_no, kw_col, "`action` takes exactly one name")),
            },
            "pre" | "add" | "del" => {
                let Some(current) = actions.last_mut() else {
                    return Err(ParseError::new(line_no, kw_col, format!("`{keyword}` before any `action`")));
                };
                let mut set = State::new();
                for &(col, p) in args {
                    let id = prop_ids
                        .get(p)
                        .ok_or_else(|| ParseError::new(line_no, col, format!("unknown proposition `{p}`")))?;
                    set.insert(*id);
                }
                let slot = match keyword {
                    "pre" => &mut current.pre,
                    "add" => &mut current.add,
                    _ => &mut current.del,
                };
                slot.0.extend(set.0);
            }
            other => {
                return Err(ParseError::new(line_no, kw_col, format!("unknown keyword `{other}`")));
            }
        }
    }

    let name = name.ok_or_else(|| ParseError::new(1, 1, "missing `domain` line"))?;
    let mut built = Vec::with_capacity(actions.len());
    for a in actions {
        if let Some(p) = a.add.intersection(&a.del).iter().next() {
            return Err(ParseError::new(
                a.line,
                1,
                format!("action `{}` both adds and deletes `{}`", a.name, props[p]),
            ));
        }
        built.push(GroundAction::new(a.name, a.pre, a.add, a.del));
    }
    GroundDomain::new(name, props, built).map_err(|e| ParseError::new(1, 1, e.to_string()))
}

fn join_names(domain: &GroundDomain, s: &State) -> String {
    domain.state_names(s).join(" ")
}

/// Canonical text for `domain`; `parse_domain` reads it back unchanged.
pub fn write_domain(domain: &GroundDomain) -> String {
    let mut out = String::new();
    writeln!(out, "domain {}", domain.name()).unwrap();
    for chunk in domain.propositions().chunks(8) {
        writeln!(out, "prop {}", chunk.join(" ")).unwrap();
    }
    for a in domain.actions() {
        writeln!(out, "action {}", a.name).unwrap();
        for (kw, set) in [("pre", &a.precondition), ("add", &a.add_effects), ("del", &a.del_effects)] {
            if !set.is_empty() {
                writeln!(out, "{kw} {}", join_names(domain, set)).unwrap();
            }
        }
    }
    out
}

/// An instance plus the full goal state, when one was recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRecord {
    pub instance: Instance,
    pub goal_state: Option<State>,
}

pub fn parse_instance(domain: &GroundDomain, text: &str) -> Result<Vec<InstanceRecord>, ParseError> {
    struct Partial {
        line: usize,
        init: Option<State>,
        goal: Option<(usize, State)>,
        goal_state: Option<State>,
    }
    fn finish(p: Partial) -> Result<InstanceRecord, ParseError> {
        let init = p.init.ok_or_else(|| ParseError::new(p.line, 1, "instance without `init`"))?;
        let (goal_line, goal) = p.goal.ok_or_else(|| ParseError::new(p.line, 1, "instance without `goal`"))?;
        let instance = Instance::new(init, goal).map_err(|e| ParseError::new(goal_line, 1, e.to_string()))?;
        Ok(InstanceRecord { instance, goal_state: p.goal_state })
    }

    let mut records = Vec::new();
    let mut current: Option<Partial> = None;
    for (line_no, line) in content_lines(text) {
        let toks = tokens(line);
        let (kw_col, keyword) = toks[0];
        let args = &toks[1..];
        if keyword == "instance" {
            if let Some(p) = current.take() {
                records.push(finish(p)?);
            }
            current = Some(Partial { line: line_no, init: None, goal: None, goal_state: None });
            continue;
        }
        let Some(p) = current.as_mut() else {
            return Err(ParseError::new(line_no, kw_col, "expected `instance`"));
        };
        let set = resolve_props(domain, line_no, args);
        match keyword {
            "init" if p.init.is_none() => p.init = Some(set?),
            "goal" if p.goal.is_none() => p.goal = Some((line_no, set?)),
            "goal-state" if p.goal_state.is_none() => p.goal_state = Some(set?),
            "init" | "goal" | "goal-state" => {
                return Err(ParseError::new(line_no, kw_col, format!("duplicate `{keyword}`")))
            }
            other => return Err(ParseError::new(line_no, kw_col, format!("unknown keyword `{other}`"))),
        }
    }
    if let Some(p) = current.take() {
        records.push(finish(p)?);
    }
    Ok(records)
}

pub fn write_instance(domain: &GroundDomain, records: &[InstanceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "instance").unwrap();
        writeln!(out, "init {}", join_names(domain, &r.instance.initial)).unwrap();
        writeln!(out, "goal {}", join_names(domain, &r.instance.goal)).unwrap();
        if let Some(gs) = &r.goal_state {
            writeln!(out, "goal-state {}", join_names(domain, gs)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::DomainTemplate;

    const TOY: &str = "\
# a toy domain
domain toy
prop p q
prop r
action go   # trailing comment
pre p
add q r
del p
action back
pre q
add p
";

    #[test]
    fn parses_toy_domain() {
        let d = parse_domain(TOY).unwrap();
        assert_eq!(d.name(), "toy");
        assert_eq!(d.propositions(), ["p", "q", "r"]);
        assert_eq!(d.num_actions(), 2);
        let go = &d.actions()[0];
        assert_eq!(go.precondition, State::from([0]));
        assert_eq!(go.add_effects, State::from([1, 2]));
        assert_eq!(go.del_effects, State::from([0]));
        assert!(d.actions()[1].del_effects.is_empty());
    }

    #[test]
    fn canonical_text_round_trips() {
        for template in [
            DomainTemplate::Ferry { cars: 3, locations: 3 },
            DomainTemplate::Logistics { cities: 2, packages: 2 },
            DomainTemplate::Blocks { blocks: 3 },
        ] {
            let d = template.build();
            let text = write_domain(&d);
            let back = parse_domain(&text).unwrap();
            assert_eq!(back, d);
            assert_eq!(write_domain(&back), text);
        }
    }

    #[test]
    fn unknown_proposition_reports_position() {
        let text = "domain t\nprop p\naction a\npre p zz\n";
        let err = parse_domain(text).unwrap_err();
        assert_eq!((err.line, err.column), (4, 7));
        assert!(err.message.contains("`zz`"));
    }

    #[test]
    fn structural_errors() {
        assert!(parse_domain("prop p\n").unwrap_err().message.contains("missing `domain`"));
        assert_eq!(parse_domain("domain t\npre p\n").unwrap_err().line, 2);
        assert_eq!(parse_domain("domain t\nprop p p\n").unwrap_err().column, 8);
        assert!(parse_domain("domain t\nfoo\n").unwrap_err().message.contains("unknown keyword"));
        let conflict = "domain t\nprop p\naction x\nadd p\ndel p\n";
        assert_eq!(parse_domain(conflict).unwrap_err().line, 3);
    }

    #[test]
    fn instance_records_round_trip() {
        let d = parse_domain(TOY).unwrap();
        let text = "instance\ninit p\ngoal r\ninstance\ninit q\ngoal p\ngoal-state p r\n";
        let recs = parse_instance(&d, text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].instance.goal, State::from([2]));
        assert_eq!(recs[1].goal_state, Some(State::from([0, 2])));
        assert_eq!(write_instance(&d, &recs), text);
    }

    #[test]
    fn instance_errors() {
        let d = parse_domain(TOY).unwrap();
        assert!(parse_instance(&d, "init p\n").unwrap_err().message.contains("expected `instance`"));
        assert!(parse_instance(&d, "instance\ninit p\n").unwrap_err().message.contains("without `goal`"));
        let e = parse_instance(&d, "instance\ninit p\ngoal nope\n").unwrap_err();
        assert_eq!((e.line, e.column), (3, 6));
        assert!(parse_instance(&d, "instance\ninit p\ngoal\n").unwrap_err().message.contains("goal is empty"));
    }
}
