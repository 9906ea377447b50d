//! Trace files.
//!
//! UTF-8, one record per line after a `psgplan-traces 1` header. A record
//! has four tab-separated fields:
//!
//! ```text
//! <initial state>\t<final state>\t<actions>\t<observations>
//! ```
//!
//! States and action lists are space-separated names. The observation field
//! holds exactly `n - 1` groups separated by `|` (so it is empty when
//! `n <= 1`; with `n == 2` an empty field is one empty group). Blank lines
//! and lines starting with `#` are ignored.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use super::PartialTrace;
use crate::strips::{tokens, GroundDomain, ParseError, State};

pub const TRACE_HEADER: &str = "psgplan-traces 1";

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Parse(#[from] ParseError),
}

fn names(domain: &GroundDomain, s: &State) -> String {
    domain.state_names(s).join(" ")
}

pub fn write_traces<W: Write>(domain: &GroundDomain, traces: &[PartialTrace], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for t in traces {
        let actions: Vec<&str> = t.actions.iter().map(|&a| domain.action_name(a)).collect();
        let obs: Vec<String> = t.observations.iter().map(|o| names(domain, o)).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            names(domain, &t.initial),
            names(domain, &t.final_state),
            actions.join(" "),
            obs.join("|")
        )?;
    }
    Ok(())
}

pub fn write_traces_file(domain: &GroundDomain, traces: &[PartialTrace], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_traces(domain, traces, &mut buf)?;
    fs::write(path, buf)
}

pub fn read_traces_file(domain: &GroundDomain, path: &Path) -> Result<Vec<PartialTrace>, TraceIoError> {
    let file = fs::File::open(path)?;
    read_traces(domain, io::BufReader::new(file))
}

/// A field of a record line with its starting character column.
struct Field<'a> {
    text: &'a str,
    column: usize,
}

impl Field<'_> {
    fn tokens(&self) -> Vec<(usize, &str)> {
        tokens(self.text).into_iter().map(|(c, t)| (c + self.column - 1, t)).collect()
    }

    fn state(&self, domain: &GroundDomain, line: usize) -> Result<State, ParseError> {
        crate::strips::resolve_props(domain, line, &self.tokens())
    }
}

fn split_fields(line: &str, sep: char) -> Vec<Field<'_>> {
    let mut fields = Vec::new();
    let mut column = 1;
    for part in line.split(sep) {
        fields.push(Field { text: part, column });
        column += part.chars().count() + 1;
    }
    fields
}

pub fn read_traces<R: BufRead>(domain: &GroundDomain, input: R) -> Result<Vec<PartialTrace>, TraceIoError> {
    let mut lines = input.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).transpose()?;
    if header.as_deref().map(str::trim_end) != Some(TRACE_HEADER) {
        return Err(ParseError::new(1, 1, format!("expected header `{TRACE_HEADER}`")).into());
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(&line, '\t');
        if fields.len() != 4 {
            return Err(ParseError::new(line_no, 1, format!("expected 4 tab-separated fields, found {}", fields.len())).into());
        }
        let initial = fields[0].state(domain, line_no)?;
        let final_state = fields[1].state(domain, line_no)?;
        let actions = fields[2]
            .tokens()
            .into_iter()
            .map(|(col, name)| {
                domain
                    .action_id(name)
                    .ok_or_else(|| ParseError::new(line_no, col, format!("unknown action `{name}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let expected = actions.len().saturating_sub(1);
        let obs_field = &fields[3];
        let observations = if expected == 0 {
            if !obs_field.text.trim().is_empty() {
                return Err(ParseError::new(line_no, obs_field.column, "observations given for a trace without intermediate states").into());
            }
            Vec::new()
        } else {
            let groups = split_fields(obs_field.text, '|');
            if groups.len() != expected {
                return Err(ParseError::new(
                    line_no,
                    obs_field.column,
                    format!("expected {expected} observation groups, found {}", groups.len()),
                )
                .into());
            }
            groups
                .iter()
                .map(|g| Field { text: g.text, column: g.column + obs_field.column - 1 }.state(domain, line_no))
                .collect::<Result<Vec<_>, _>>()?
        };
        let trace = PartialTrace::new(initial, final_state, actions, observations)
            .map_err(|e| ParseError::new(line_no, 1, e.to_string()))?;
        out.push(trace);
    }
    Ok(out)
}
