//! Text checkpoints.
//!
//! ```text
//! psgplan-checkpoint 1
//! meta <key> <value>
//! tensor <name> <d1>x<d2>...
//! <values, whitespace separated>
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::ParamSet;

pub const CHECKPOINT_HEADER: &str = "psgplan-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("checkpoint line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("missing metadata `{0}`")]
    MissingMeta(String),
    #[error("metadata `{key}` is `{found}`, expected `{expected}`")]
    MetaMismatch { key: String, expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(char::is_whitespace) && !value.contains('\n'));
        self.meta.insert(key.to_string(), value);
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| CheckpointError::MissingMeta(key.to_string()))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let v = self.meta(key)?;
        v.parse().map_err(|_| CheckpointError::MetaMismatch {
            key: key.to_string(),
            expected: std::any::type_name::<T>().to_string(),
            found: v.to_string(),
        })
    }

    pub fn expect_meta(&self, key: &str, expected: &str) -> Result<(), CheckpointError> {
        let found = self.meta(key)?;
        if found != expected {
            return Err(CheckpointError::MetaMismatch { key: key.into(), expected: expected.into(), found: found.into() });
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// A tensor's data, checked against the expected shape.
    pub fn fetch(&self, name: &str, shape: Vec<usize>) -> Result<Vec<f64>, CheckpointError> {
        let t = self.tensor(name).ok_or_else(|| CheckpointError::MissingTensor(name.into()))?;
        if t.shape != shape {
            return Err(CheckpointError::ShapeMismatch { name: name.into(), expected: shape, found: t.shape.clone() });
        }
        Ok(t.data.clone())
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        self.tensors.push(Tensor { name: name.into(), shape, data });
    }

    /// Stores every tensor of `params` under `prefix.`.
    pub fn push_params<P: ParamSet>(&mut self, prefix: &str, params: &P) {
        for t in params.tensors() {
            self.push(format!("{prefix}.{}", t.name), t.shape, t.data.to_vec());
        }
    }

    /// Overwrites `params` with the tensors stored under `prefix.`.
    pub fn load_params<P: ParamSet>(&self, prefix: &str, params: &mut P) -> Result<(), CheckpointError> {
        let layout: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|t| (format!("{prefix}.{}", t.name), t.shape)).collect();
        let mut sources = Vec::with_capacity(layout.len());
        for (name, shape) in &layout {
            let t = self.tensor(name).ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            if &t.shape != shape {
                return Err(CheckpointError::ShapeMismatch { name: name.clone(), expected: shape.clone(), found: t.shape.clone() });
            }
            sources.push(&t.data);
        }
        for (dst, src) in params.tensors_mut().into_iter().zip(sources) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_HEADER}").unwrap();
        for (k, v) in &self.meta {
            writeln!(s, "meta {k} {v}").unwrap();
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            writeln!(s, "tensor {} {}", t.name, dims.join("x")).unwrap();
            for chunk in t.data.chunks(8) {
                let vals: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
                writeln!(s, "{}", vals.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let bad = |line: usize, message: String| CheckpointError::Malformed { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h.trim_end() == CHECKPOINT_HEADER => {}
            _ => return Err(bad(1, format!("expected header `{CHECKPOINT_HEADER}`"))),
        }
        let mut ckpt = Checkpoint::new();
        let mut pending: Option<(usize, Tensor, usize)> = None;
        for (no, line) in lines {
            if let Some((_, t, want)) = pending.as_mut() {
                if t.data.len() < *want {
                    for tok in line.split_whitespace() {
                        let v: f64 = tok.parse().map_err(|_| bad(no, format!("bad number `{tok}`")))?;
                        t.data.push(v);
                    }
                    if t.data.len() > *want {
                        return Err(bad(no, format!("too many values for tensor `{}`", t.name)));
                    }
                    continue;
                }
            }
            if let Some((_, t, _)) = pending.take() {
                ckpt.tensors.push(t);
            }
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split_whitespace();
                let (Some(name), Some(dims), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad(no, "expected `tensor <name> <dims>`".into()));
                };
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>().map_err(|_| bad(no, format!("bad dimension `{d}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let want = shape.iter().product();
                pending = Some((no, Tensor { name: name.to_string(), shape, data: Vec::with_capacity(want) }, want));
            } else {
                return Err(bad(no, format!("unexpected line `{line}`")));
            }
        }
        if let Some((no, t, want)) = pending {
            if t.data.len() != want {
                return Err(bad(no, format!("tensor `{}` has {} values, expected {want}", t.name, t.data.len())));
            }
            ckpt.tensors.push(t);
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
