// SPDX-License-Identifier: Apache-2.0

//! Harness files: which programs to compare, where the shared symbolic inputs
//! live in each, named output locations, and input assumptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{parse_constraint, ConstraintError};
use crate::expr::{ExprId, ExprPool};
use crate::ir::{parse_program, ParseError, Program, MEM_SIZE};

pub const DEFAULT_LOOP_BOUND: u32 = 64;
pub const DEFAULT_CONCRETIONS: usize = 3;
/// Annotation values are compared and reported as 64-bit words.
pub const MAX_ANNOTATION_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Mem {
        mem: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        len: Option<u64>,
    },
    Reg {
        reg: String,
    },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Mem { mem, len: Some(n) } => write!(f, "mem[{mem}..{}]", mem + n),
            Location::Mem { mem, len: None } => write!(f, "mem[{mem}]"),
            Location::Reg { reg } => write!(f, "%{reg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NamePart {
    Index(i64),
    Field(String),
}

/// Dotted rendering of an annotation name: `["date", "second"]` is
/// `date.second`, `["out", 0]` is `out[0]`.
pub fn display_name(parts: &[NamePart]) -> String {
    let mut out = String::new();
    for p in parts {
        match p {
            NamePart::Field(s) => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(s);
            }
            NamePart::Index(i) => out.push_str(&format!("[{i}]")),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolDecl {
    pub name: String,
    pub width: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placements {
    #[serde(default)]
    pub left: BTreeMap<String, Location>,
    #[serde(default)]
    pub right: BTreeMap<String, Location>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSpec {
    pub name: Vec<NamePart>,
    pub left: Location,
    pub right: Location,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSpec {
    /// Annotation display names to compare; absent means all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<String>>,
    #[serde(default = "yes")]
    pub status: bool,
    #[serde(default = "yes")]
    pub io: bool,
}

impl Default for DiffSpec {
    fn default() -> Self {
        DiffSpec {
            annotations: None,
            status: true,
            io: true,
        }
    }
}

/// The harness document as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSpec {
    pub left: String,
    pub right: String,
    #[serde(default)]
    pub symbols: Vec<SymbolDecl>,
    #[serde(default)]
    pub placements: Placements,
    #[serde(default)]
    pub annotations: Vec<AnnotationSpec>,
    #[serde(default)]
    pub assumptions: Vec<String>,
    #[serde(default)]
    pub assertions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_bound: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concretions: Option<usize>,
    #[serde(default)]
    pub diff: DiffSpec,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed harness: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Program { path: String, source: ParseError },
    #[error("assumption `{text}`: {source}")]
    Assumption { text: String, source: ConstraintError },
    #[error("assertion `{text}`: {source}")]
    Assertion { text: String, source: ConstraintError },
    #[error("{0}")]
    Invalid(String),
}

impl HarnessSpec {
    pub fn load(path: &Path) -> Result<HarnessSpec, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A resolved annotation with equal byte lengths on both sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub name: Vec<NamePart>,
    pub display: String,
    pub bytes: u64,
    pub left: Location,
    pub right: Location,
}

impl Annotation {
    pub fn location(&self, side: Side) -> &Location {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn width(&self) -> u32 {
        (self.bytes * 8) as u32
    }
}

/// A symbol's home in one program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// Little-endian bytes starting at `addr`; the symbol is zero-extended to
    /// `len` bytes.
    Mem { addr: u64, len: u64 },
    Reg(String),
}

/// A validated harness with both programs parsed and all expressions built.
#[derive(Debug, Clone)]
pub struct Harness {
    pub spec: HarnessSpec,
    pub left: Program,
    pub right: Program,
    pub symbols: Vec<(String, u32)>,
    pub symbol_exprs: BTreeMap<String, ExprId>,
    pub placements_left: BTreeMap<String, Placement>,
    pub placements_right: BTreeMap<String, Placement>,
    pub annotations: Vec<Annotation>,
    pub assumptions: Vec<ExprId>,
    pub loop_bound: u32,
    pub concretions: usize,
    pub diff_annotations: Vec<usize>,
}

impl Harness {
    pub fn program(&self, side: Side) -> &Program {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn placements(&self, side: Side) -> &BTreeMap<String, Placement> {
        match side {
            Side::Left => &self.placements_left,
            Side::Right => &self.placements_right,
        }
    }

    pub fn annotation(&self, display: &str) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.display == display)
    }

    /// Reads a harness file; program paths are relative to its directory.
    pub fn load(path: &Path, pool: &ExprPool) -> Result<Harness, HarnessError> {
        let spec = HarnessSpec::load(path)?;
        Harness::from_spec(spec, path.parent().unwrap_or(Path::new(".")), pool)
    }

    /// Compiles `spec`, reading its programs relative to `dir`.
    pub fn from_spec(spec: HarnessSpec, dir: &Path, pool: &ExprPool) -> Result<Harness, HarnessError> {
        let read = |p: &str| {
            let full = dir.join(p);
            std::fs::read_to_string(&full).map_err(|source| HarnessError::Io { path: full, source })
        };
        let left = read(&spec.left)?;
        let right = read(&spec.right)?;
        Harness::compile(spec, &left, &right, pool)
    }

    /// Builds a harness from its document and the two program texts.
    pub fn compile(spec: HarnessSpec, left_src: &str, right_src: &str, pool: &ExprPool) -> Result<Harness, HarnessError> {
        let parse = |path: &str, src: &str| {
            parse_program(src).map_err(|source| HarnessError::Program {
                path: path.to_string(),
                source,
            })
        };
        let left = parse(&spec.left, left_src)?;
        let right = parse(&spec.right, right_src)?;
        let invalid = |m: String| Err(HarnessError::Invalid(m));

        let mut symbols = Vec::new();
        let mut symbol_exprs = BTreeMap::new();
        for s in &spec.symbols {
            if !(1..=64).contains(&s.width) {
                return invalid(format!("symbol {} has width {}; widths are 1 to 64", s.name, s.width));
            }
            if symbol_exprs.contains_key(&s.name) {
                return invalid(format!("symbol {} declared twice", s.name));
            }
            let e = pool
                .var(&s.name, s.width)
                .map_err(|e| HarnessError::Invalid(format!("symbol {}: {e}", s.name)))?;
            symbols.push((s.name.clone(), s.width));
            symbol_exprs.insert(s.name.clone(), e);
        }

        let place = |side: &str, p: &Program, given: &BTreeMap<String, Location>| -> Result<BTreeMap<String, Placement>, HarnessError> {
            let mut out = BTreeMap::new();
            let mut used: Vec<(u64, u64, String)> = Vec::new();
            let mut used_regs = BTreeSet::new();
            for (name, loc) in given {
                let Some(width) = spec.symbols.iter().find(|s| &s.name == name).map(|s| s.width) else {
                    return Err(HarnessError::Invalid(format!("{side} placement names undeclared symbol {name}")));
                };
                let placement = match loc {
                    Location::Mem { mem, len } => {
                        let len = len.unwrap_or(width.div_ceil(8) as u64);
                        if len * 8 < width as u64 || len == 0 {
                            return Err(HarnessError::Invalid(format!("{side} placement of {name}: {len} bytes cannot hold {width} bits")));
                        }
                        if mem + len > MEM_SIZE {
                            return Err(HarnessError::Invalid(format!("{side} placement of {name} lies outside memory")));
                        }
                        if let Some((_, _, other)) = used.iter().find(|(a, l, _)| *mem < a + l && *a < mem + len) {
                            return Err(HarnessError::Invalid(format!("{side} placements of {other} and {name} overlap")));
                        }
                        used.push((*mem, len, name.clone()));
                        Placement::Mem { addr: *mem, len }
                    }
                    Location::Reg { reg } => {
                        let Some(rw) = p.register_width(reg) else {
                            return Err(HarnessError::Invalid(format!("{side} placement of {name}: no register {reg}")));
                        };
                        if rw < width {
                            return Err(HarnessError::Invalid(format!("{side} placement of {name}: register {reg} has {rw} bits, symbol has {width}")));
                        }
                        if !used_regs.insert(reg.clone()) {
                            return Err(HarnessError::Invalid(format!("{side} placements share register {reg}")));
                        }
                        Placement::Reg(reg.clone())
                    }
                };
                out.insert(name.clone(), placement);
            }
            for s in &spec.symbols {
                if !out.contains_key(&s.name) {
                    return Err(HarnessError::Invalid(format!("symbol {} has no {side} placement", s.name)));
                }
            }
            Ok(out)
        };
        let placements_left = place("left", &left, &spec.placements.left)?;
        let placements_right = place("right", &right, &spec.placements.right)?;

        let mut annotations: Vec<Annotation> = Vec::new();
        for a in &spec.annotations {
            let display = display_name(&a.name);
            if display.is_empty() {
                return invalid("annotation with an empty name".into());
            }
            if annotations.iter().any(|b| b.display == display) {
                return invalid(format!("annotation {display} declared twice"));
            }
            let size = |side: &str, p: &Program, loc: &Location| -> Result<u64, HarnessError> {
                match loc {
                    Location::Mem { mem, len } => {
                        let len = len.unwrap_or(1);
                        if len == 0 || mem + len > MEM_SIZE {
                            return Err(HarnessError::Invalid(format!("{side} location of annotation {display} lies outside memory")));
                        }
                        Ok(len)
                    }
                    Location::Reg { reg } => p
                        .register_width(reg)
                        .map(|w| w.div_ceil(8) as u64)
                        .ok_or_else(|| HarnessError::Invalid(format!("annotation {display}: no {side} register {reg}"))),
                }
            };
            let lb = size("left", &left, &a.left)?;
            let rb = size("right", &right, &a.right)?;
            if lb != rb {
                return invalid(format!("annotation {display} covers {lb} bytes on the left and {rb} on the right"));
            }
            if lb > MAX_ANNOTATION_BYTES {
                return invalid(format!("annotation {display} covers {lb} bytes; at most {MAX_ANNOTATION_BYTES} are supported"));
            }
            let norm = |loc: &Location| match loc {
                Location::Mem { mem, .. } => Location::Mem { mem: *mem, len: Some(lb) },
                other => other.clone(),
            };
            annotations.push(Annotation {
                name: a.name.clone(),
                display,
                bytes: lb,
                left: norm(&a.left),
                right: norm(&a.right),
            });
        }

        let resolve = |n: &str| symbol_exprs.get(n).copied();
        let mut assumptions = Vec::new();
        for text in &spec.assumptions {
            let e = parse_constraint(pool, text, resolve).map_err(|source| HarnessError::Assumption {
                text: text.clone(),
                source,
            })?;
            assumptions.push(e);
        }

        // assertions are rebuilt per state; check names and widths once here
        let scratch = ExprPool::new();
        let probe = |n: &str| {
            if let Some(&(_, w)) = symbols.iter().find(|(s, _)| s == n) {
                return scratch.var(n, w).ok();
            }
            annotation_ref(&annotations, n).and_then(|(_, w)| scratch.var(n, w).ok())
        };
        for text in &spec.assertions {
            parse_constraint(&scratch, text, probe).map_err(|source| HarnessError::Assertion {
                text: text.clone(),
                source,
            })?;
        }

        let diff_annotations = match &spec.diff.annotations {
            None => (0..annotations.len()).collect(),
            Some(names) => {
                let mut idx = Vec::new();
                for n in names {
                    match annotations.iter().position(|a| &a.display == n) {
                        Some(i) => idx.push(i),
                        None => return invalid(format!("diff names unknown annotation {n}")),
                    }
                }
                idx
            }
        };

        let loop_bound = spec.loop_bound.unwrap_or(DEFAULT_LOOP_BOUND);
        if loop_bound == 0 {
            return invalid("loop_bound must be at least 1".into());
        }
        let concretions = spec.concretions.unwrap_or(DEFAULT_CONCRETIONS);
        Ok(Harness {
            spec,
            left,
            right,
            symbols,
            symbol_exprs,
            placements_left,
            placements_right,
            annotations,
            assumptions,
            loop_bound,
            concretions,
            diff_annotations,
        })
    }
}

/// Resolves an assertion name: an annotation's display name, or
/// `display[i]` for byte `i` of a memory annotation. Returns the annotation
/// index, optional byte, and the value width.
pub fn annotation_ref(annotations: &[Annotation], name: &str) -> Option<((usize, Option<u64>), u32)> {
    if let Some(i) = annotations.iter().position(|a| a.display == name) {
        return Some(((i, None), annotations[i].width()));
    }
    let (base, rest) = name.rsplit_once('[')?;
    let byte: u64 = rest.strip_suffix(']')?.parse().ok()?;
    let i = annotations.iter().position(|a| a.display == base)?;
    (byte < annotations[i].bytes).then_some(((i, Some(byte)), 8))
}
