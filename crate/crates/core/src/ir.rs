// SPDX-License-Identifier: Apache-2.0

//! The register IR: program representation, text format, validation, and the
//! concrete reference interpreter.
//!
//! ```text
//! program demo
//! mode trap
//! reg a:8
//! reg b:8
//!     load.8 a, [0]
//!     add b, a, 1
//! done:
//!     halt
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{fold_binary, mask, BinOp};

pub const MEM_SIZE: u64 = 65536;
pub const REGISTER_WIDTHS: [u32; 4] = [1, 8, 16, 32];
pub const ACCESS_WIDTHS: [u32; 3] = [8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Wrap,
    Trap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Udiv,
    Urem,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
}

impl ArithOp {
    pub const ALL: [ArithOp; 11] = [
        ArithOp::Add,
        ArithOp::Sub,
        ArithOp::Mul,
        ArithOp::Udiv,
        ArithOp::Urem,
        ArithOp::And,
        ArithOp::Or,
        ArithOp::Xor,
        ArithOp::Shl,
        ArithOp::Lshr,
        ArithOp::Ashr,
    ];

    pub fn mnemonic(self) -> &'static str {
        self.bin_op().name()
    }

    pub fn bin_op(self) -> BinOp {
        match self {
            ArithOp::Add => BinOp::Add,
            ArithOp::Sub => BinOp::Sub,
            ArithOp::Mul => BinOp::Mul,
            ArithOp::Udiv => BinOp::Udiv,
            ArithOp::Urem => BinOp::Urem,
            ArithOp::And => BinOp::And,
            ArithOp::Or => BinOp::Or,
            ArithOp::Xor => BinOp::Xor,
            ArithOp::Shl => BinOp::Shl,
            ArithOp::Lshr => BinOp::Lshr,
            ArithOp::Ashr => BinOp::Ashr,
        }
    }

    /// Operations that trap on unsigned overflow in trap mode.
    pub fn can_overflow(self) -> bool {
        matches!(self, ArithOp::Add | ArithOp::Sub | ArithOp::Mul)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ult,
    Slt,
}

impl CmpOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpOp::Eq => "cmp_eq",
            CmpOp::Ult => "cmp_ult",
            CmpOp::Slt => "cmp_slt",
        }
    }

    pub fn bin_op(self) -> BinOp {
        match self {
            CmpOp::Eq => BinOp::Eq,
            CmpOp::Ult => BinOp::Ult,
            CmpOp::Slt => BinOp::Slt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Reg(String),
    Imm(i64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub name: String,
    pub index: usize,
}

/// A memory operand `[base + offset]`; `base` absent means an absolute address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub base: Option<String>,
    pub offset: i64,
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.base, self.offset) {
            (None, off) => write!(f, "[{off}]"),
            (Some(b), 0) => write!(f, "[{b}]"),
            (Some(b), off) if off < 0 => write!(f, "[{b} - {}]", off.unsigned_abs()),
            (Some(b), off) => write!(f, "[{b} + {off}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instr {
    Const { dst: String, imm: i64 },
    Arith { kind: ArithOp, dst: String, a: String, b: Operand },
    Not { dst: String, a: String },
    Cmp { kind: CmpOp, dst: String, a: String, b: Operand },
    Select { dst: String, cond: String, a: String, b: String },
    Br { cond: String, then_to: Label, else_to: Option<Label> },
    Jmp { target: Label },
    Load { width: u32, dst: String, addr: Address },
    Store { width: u32, addr: Address, src: String },
    Observe { src: String },
    Assume { src: String },
    Assert { src: String },
    Halt,
}

impl Instr {
    /// Registers read by this instruction.
    pub fn reads(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        fn op(o: &Operand) -> Option<&str> {
            match o {
                Operand::Reg(r) => Some(r.as_str()),
                Operand::Imm(_) => None,
            }
        }
        match self {
            Instr::Const { .. } | Instr::Jmp { .. } | Instr::Halt => {}
            Instr::Arith { a, b, .. } | Instr::Cmp { a, b, .. } => {
                out.push(a);
                out.extend(op(b));
            }
            Instr::Not { a, .. } => out.push(a),
            Instr::Select { cond, a, b, .. } => out.extend([cond.as_str(), a, b]),
            Instr::Br { cond, .. } => out.push(cond),
            Instr::Load { addr, .. } => out.extend(addr.base.as_deref()),
            Instr::Store { addr, src, .. } => {
                out.extend(addr.base.as_deref());
                out.push(src);
            }
            Instr::Observe { src } | Instr::Assume { src } | Instr::Assert { src } => out.push(src),
        }
        out
    }

    /// The register written, if any.
    pub fn writes(&self) -> Option<&str> {
        match self {
            Instr::Const { dst, .. }
            | Instr::Arith { dst, .. }
            | Instr::Not { dst, .. }
            | Instr::Cmp { dst, .. }
            | Instr::Select { dst, .. }
            | Instr::Load { dst, .. } => Some(dst),
            _ => None,
        }
    }

    pub fn targets(&self) -> Vec<&Label> {
        match self {
            Instr::Br { then_to, else_to, .. } => std::iter::once(then_to).chain(else_to.iter()).collect(),
            Instr::Jmp { target } => vec![target],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Const { dst, imm } => write!(f, "const {dst}, {imm}"),
            Instr::Arith { kind, dst, a, b } => write!(f, "{} {dst}, {a}, {b}", kind.mnemonic()),
            Instr::Not { dst, a } => write!(f, "not {dst}, {a}"),
            Instr::Cmp { kind, dst, a, b } => write!(f, "{} {dst}, {a}, {b}", kind.mnemonic()),
            Instr::Select { dst, cond, a, b } => write!(f, "select {dst}, {cond}, {a}, {b}"),
            Instr::Br { cond, then_to, else_to } => match else_to {
                Some(e) => write!(f, "br {cond}, {}, {}", then_to.name, e.name),
                None => write!(f, "br {cond}, {}", then_to.name),
            },
            Instr::Jmp { target } => write!(f, "jmp {}", target.name),
            Instr::Load { width, dst, addr } => write!(f, "load.{width} {dst}, {addr}"),
            Instr::Store { width, addr, src } => write!(f, "store.{width} {addr}, {src}"),
            Instr::Observe { src } => write!(f, "observe {src}"),
            Instr::Assume { src } => write!(f, "assume {src}"),
            Instr::Assert { src } => write!(f, "assert {src}"),
            Instr::Halt => write!(f, "halt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub mode: Mode,
    pub registers: Vec<(String, u32)>,
    pub instructions: Vec<Instr>,
    pub labels: BTreeMap<String, usize>,
}

impl Program {
    pub fn register_width(&self, name: &str) -> Option<u32> {
        self.registers.iter().find(|(n, _)| n == name).map(|(_, w)| *w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Instruction index, or `None` for program-level problems.
    pub instr: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.instr {
            Some(i) => write!(f, "instruction {i}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub diagnostics: Vec<Diagnostic>,
    /// Indices of branch/jump instructions targeting themselves or an
    /// earlier instruction.
    pub back_edges: BTreeSet<usize>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Checks every program invariant and reports loop back-edges.
pub fn validate(p: &Program) -> Validation {
    let mut v = Validation::default();
    let mut diag = |instr: Option<usize>, message: String| v.diagnostics.push(Diagnostic { instr, message });
    let mut widths: HashMap<&str, u32> = HashMap::new();
    for (name, w) in &p.registers {
        if !REGISTER_WIDTHS.contains(w) {
            diag(None, format!("register {name} has width {w}; allowed widths are 1, 8, 16, 32"));
        }
        if widths.insert(name, *w).is_some() {
            diag(None, format!("register {name} declared twice"));
        }
    }
    for (name, &idx) in &p.labels {
        if idx > p.instructions.len() {
            diag(None, format!("label {name} points past the end of the program"));
        }
    }
    for (i, ins) in p.instructions.iter().enumerate() {
        let here = Some(i);
        let mut known = true;
        for r in ins.reads().into_iter().chain(ins.writes()) {
            if !widths.contains_key(r) {
                diag(here, format!("undeclared register {r}"));
                known = false;
            }
        }
        for l in ins.targets() {
            match p.labels.get(&l.name) {
                None => diag(here, format!("undefined label {}", l.name)),
                Some(&idx) if idx != l.index => diag(here, format!("label {} resolves to {idx}, not {}", l.name, l.index)),
                Some(_) => {}
            }
        }
        if !known {
            continue;
        }
        let w = |r: &str| widths[r];
        let same = |what: &str, regs: &[&str]| -> Option<String> {
            let first = w(regs[0]);
            regs.iter()
                .find(|r| w(r) != first)
                .map(|r| format!("width mismatch in {what}: {} is {first} bits, {r} is {} bits", regs[0], w(r)))
        };
        let problem = match ins {
            Instr::Arith { kind, dst, a, b } => match b {
                Operand::Reg(b) => same(kind.mnemonic(), &[dst, a, b]),
                Operand::Imm(_) => same(kind.mnemonic(), &[dst, a]),
            },
            Instr::Not { dst, a } => same("not", &[dst, a]),
            Instr::Cmp { kind, a, b: Operand::Reg(b), .. } => same(kind.mnemonic(), &[a, b]),
            Instr::Select { dst, a, b, .. } => same("select", &[dst, a, b]),
            Instr::Load { width, dst, .. } => {
                if !ACCESS_WIDTHS.contains(width) {
                    Some(format!("load width {width}; allowed widths are 8, 16, 32"))
                } else if w(dst) < *width {
                    Some(format!("load.{width} into {dst} of {} bits", w(dst)))
                } else {
                    None
                }
            }
            Instr::Store { width, src, .. } => {
                if !ACCESS_WIDTHS.contains(width) {
                    Some(format!("store width {width}; allowed widths are 8, 16, 32"))
                } else if w(src) < *width {
                    Some(format!("store.{width} from {src} of {} bits", w(src)))
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(m) = problem {
            diag(here, m);
        }
        for l in ins.targets() {
            if l.index <= i {
                v.back_edges.insert(i);
            }
        }
    }
    v
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let mag = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16).ok()?
    } else {
        body.replace('_', "").parse::<u64>().ok()?
    };
    if neg {
        Some((mag as i64).wrapping_neg())
    } else {
        Some(mag as i64)
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Splits operands on top-level commas, keeping bracketed addresses whole.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0;
    for c in s.chars() {
        match c {
            '[' => {
                depth += 1;
                cur.push(c);
            }
            ']' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

struct LineParser<'a> {
    line: usize,
    labels: &'a BTreeMap<String, usize>,
}

impl LineParser<'_> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            message: message.into(),
        }
    }

    fn reg(&self, tok: &str) -> Result<String, ParseError> {
        if is_ident(tok) {
            Ok(tok.to_string())
        } else {
            Err(self.err(format!("expected a register, found `{tok}`")))
        }
    }

    fn operand(&self, tok: &str) -> Result<Operand, ParseError> {
        if let Some(v) = parse_int(tok) {
            Ok(Operand::Imm(v))
        } else {
            self.reg(tok).map(Operand::Reg)
        }
    }

    fn imm(&self, tok: &str) -> Result<i64, ParseError> {
        parse_int(tok).ok_or_else(|| self.err(format!("expected an integer, found `{tok}`")))
    }

    fn label(&self, tok: &str) -> Result<Label, ParseError> {
        match self.labels.get(tok) {
            Some(&index) => Ok(Label {
                name: tok.to_string(),
                index,
            }),
            None => Err(self.err(format!("undefined label {tok}"))),
        }
    }

    fn address(&self, tok: &str) -> Result<Address, ParseError> {
        let inner = tok
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| self.err(format!("expected a memory operand `[reg + offset]`, found `{tok}`")))?
            .trim();
        if let Some(v) = parse_int(inner) {
            return Ok(Address {
                base: None,
                offset: v,
            });
        }
        let (base, offset) = if let Some(pos) = inner.find(['+', '-']) {
            let (b, rest) = inner.split_at(pos);
            let sign = if rest.starts_with('-') { -1 } else { 1 };
            let off = self.imm(rest[1..].trim())?;
            (b.trim(), off.wrapping_mul(sign))
        } else {
            (inner, 0)
        };
        Ok(Address {
            base: Some(self.reg(base)?),
            offset,
        })
    }

    fn width_suffix(&self, mnemonic: &str, base: &str) -> Result<u32, ParseError> {
        let w = mnemonic
            .strip_prefix(base)
            .and_then(|s| s.strip_prefix('.'))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("expected `{base}.<width>`, found `{mnemonic}`")))?;
        Ok(w)
    }

    fn instr(&self, mnemonic: &str, ops: &[String]) -> Result<Instr, ParseError> {
        let arity = |n: usize| -> Result<(), ParseError> {
            if ops.len() == n {
                Ok(())
            } else {
                Err(self.err(format!("{mnemonic} takes {n} operands, found {}", ops.len())))
            }
        };
        if let Some(kind) = ArithOp::ALL.iter().find(|k| k.mnemonic() == mnemonic) {
            arity(3)?;
            return Ok(Instr::Arith {
                kind: *kind,
                dst: self.reg(&ops[0])?,
                a: self.reg(&ops[1])?,
                b: self.operand(&ops[2])?,
            });
        }
        if let Some(kind) = [CmpOp::Eq, CmpOp::Ult, CmpOp::Slt].into_iter().find(|k| k.mnemonic() == mnemonic) {
            arity(3)?;
            return Ok(Instr::Cmp {
                kind,
                dst: self.reg(&ops[0])?,
                a: self.reg(&ops[1])?,
                b: self.operand(&ops[2])?,
            });
        }
        if mnemonic.starts_with("load") {
            arity(2)?;
            return Ok(Instr::Load {
                width: self.width_suffix(mnemonic, "load")?,
                dst: self.reg(&ops[0])?,
                addr: self.address(&ops[1])?,
            });
        }
        if mnemonic.starts_with("store") {
            arity(2)?;
            return Ok(Instr::Store {
                width: self.width_suffix(mnemonic, "store")?,
                addr: self.address(&ops[0])?,
                src: self.reg(&ops[1])?,
            });
        }
        Ok(match mnemonic {
            "const" => {
                arity(2)?;
                Instr::Const {
                    dst: self.reg(&ops[0])?,
                    imm: self.imm(&ops[1])?,
                }
            }
            "not" => {
                arity(2)?;
                Instr::Not {
                    dst: self.reg(&ops[0])?,
                    a: self.reg(&ops[1])?,
                }
            }
            "select" => {
                arity(4)?;
                Instr::Select {
                    dst: self.reg(&ops[0])?,
                    cond: self.reg(&ops[1])?,
                    a: self.reg(&ops[2])?,
                    b: self.reg(&ops[3])?,
                }
            }
            "br" => {
                if ops.len() != 2 && ops.len() != 3 {
                    return Err(self.err(format!("br takes 2 or 3 operands, found {}", ops.len())));
                }
                Instr::Br {
                    cond: self.reg(&ops[0])?,
                    then_to: self.label(&ops[1])?,
                    else_to: ops.get(2).map(|l| self.label(l)).transpose()?,
                }
            }
            "jmp" => {
                arity(1)?;
                Instr::Jmp {
                    target: self.label(&ops[0])?,
                }
            }
            "observe" | "assume" | "assert" => {
                arity(1)?;
                let src = self.reg(&ops[0])?;
                match mnemonic {
                    "observe" => Instr::Observe { src },
                    "assume" => Instr::Assume { src },
                    _ => Instr::Assert { src },
                }
            }
            "halt" => {
                arity(0)?;
                Instr::Halt
            }
            other => return Err(self.err(format!("unknown instruction `{other}`"))),
        })
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(';') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim()
}

/// Parses IR text. The result satisfies every invariant checked by
/// [`validate`]; violations are reported with their source line.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    // first pass: labels and instruction lines
    let mut labels = BTreeMap::new();
    let mut body: Vec<(usize, &str)> = Vec::new();
    let mut headers: Vec<(usize, &str)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut line = strip_comment(raw);
        while let Some(colon) = line.find(':') {
            let name = line[..colon].trim();
            if !is_ident(name) || name.contains(' ') {
                break;
            }
            if line.starts_with("reg ") {
                break;
            }
            if labels.insert(name.to_string(), body.len()).is_some() {
                return Err(ParseError {
                    line: line_no,
                    message: format!("label {name} defined twice"),
                });
            }
            line = line[colon + 1..].trim();
        }
        if line.is_empty() {
            continue;
        }
        let head = line.split_whitespace().next().unwrap_or("");
        if matches!(head, "program" | "mode" | "reg") {
            if !body.is_empty() {
                return Err(ParseError {
                    line: line_no,
                    message: format!("`{head}` must precede the first instruction"),
                });
            }
            headers.push((line_no, line));
        } else {
            body.push((line_no, line));
        }
    }

    let mut name = "main".to_string();
    let mut mode = Mode::Wrap;
    let mut registers = Vec::new();
    for (line_no, line) in headers {
        let err = |message: String| ParseError { line: line_no, message };
        let mut words = line.split_whitespace();
        let head = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        match head {
            "program" => {
                if rest.len() != 1 || !is_ident(rest[0]) {
                    return Err(err("expected `program <name>`".into()));
                }
                name = rest[0].to_string();
            }
            "mode" => {
                mode = match rest.as_slice() {
                    ["wrap"] => Mode::Wrap,
                    ["trap"] => Mode::Trap,
                    _ => return Err(err("expected `mode wrap` or `mode trap`".into())),
                }
            }
            _ => {
                for decl in rest.join(" ").split(',') {
                    let decl = decl.trim();
                    let (r, w) = decl
                        .split_once(':')
                        .ok_or_else(|| err(format!("expected `reg <name>:<width>`, found `{decl}`")))?;
                    let (r, w) = (r.trim(), w.trim());
                    if !is_ident(r) {
                        return Err(err(format!("bad register name `{r}`")));
                    }
                    let w: u32 = w.parse().map_err(|_| err(format!("bad register width `{w}`")))?;
                    registers.push((r.to_string(), w));
                }
            }
        }
    }

    let mut instructions = Vec::new();
    let mut lines = Vec::new();
    for (line_no, line) in body {
        let (mnemonic, rest) = match line.find(char::is_whitespace) {
            Some(i) => (&line[..i], line[i..].trim()),
            None => (line, ""),
        };
        let ops = split_operands(rest);
        let parser = LineParser {
            line: line_no,
            labels: &labels,
        };
        instructions.push(parser.instr(mnemonic, &ops)?);
        lines.push(line_no);
    }
    let p = Program {
        name,
        mode,
        registers,
        instructions,
        labels,
    };
    if let Some(d) = validate(&p).diagnostics.into_iter().next() {
        let line = d.instr.map(|i| lines[i]).unwrap_or(1);
        return Err(ParseError { line, message: d.message });
    }
    Ok(p)
}

/// Canonical text of a program; `parse_program` inverts it.
pub fn print_program(p: &Program) -> String {
    let mut out = format!("program {}\n", p.name);
    out.push_str(match p.mode {
        Mode::Wrap => "mode wrap\n",
        Mode::Trap => "mode trap\n",
    });
    for (r, w) in &p.registers {
        out.push_str(&format!("reg {r}:{w}\n"));
    }
    let mut at: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (name, &idx) in &p.labels {
        at.entry(idx).or_default().push(name);
    }
    for i in 0..=p.instructions.len() {
        for l in at.get(&i).into_iter().flatten() {
            out.push_str(&format!("{l}:\n"));
        }
        if let Some(ins) = p.instructions.get(i) {
            out.push_str(&format!("    {ins}\n"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConcreteStatus {
    Finished,
    TrapOverflow,
    DivByZero,
    OutOfBoundsMem,
    AssertFailed,
    /// An `assume` saw zero; the input lies outside the analysed space.
    AssumeViolated,
    LoopBoundExceeded,
}

/// Initial machine contents: bytes at addresses and register values. Anything
/// not given starts at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteInput {
    pub mem: BTreeMap<u64, u8>,
    pub regs: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteOutcome {
    pub status: ConcreteStatus,
    /// Nonzero bytes of memory at termination.
    pub final_memory: BTreeMap<u64, u8>,
    pub final_registers: BTreeMap<String, u64>,
    pub io_events: Vec<u64>,
    pub instr_trace: Vec<usize>,
}

impl ConcreteOutcome {
    /// Little-endian value of `len` bytes at `addr`.
    pub fn read_mem(&self, addr: u64, len: u64) -> u64 {
        (0..len).fold(0u64, |acc, k| {
            acc | (*self.final_memory.get(&(addr + k)).unwrap_or(&0) as u64) << (8 * k)
        })
    }
}

/// Runs `p` on `input`, stopping an instruction's `bound + 1`th visit with
/// `LoopBoundExceeded`.
pub fn interpret(p: &Program, input: &ConcreteInput, bound: u32) -> ConcreteOutcome {
    let widths: HashMap<&str, u32> = p.registers.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    let mut regs: HashMap<&str, u64> = p
        .registers
        .iter()
        .map(|(n, w)| (n.as_str(), input.regs.get(n).copied().unwrap_or(0) & mask(*w)))
        .collect();
    let mut mem = vec![0u8; MEM_SIZE as usize];
    for (&a, &b) in &input.mem {
        if a < MEM_SIZE {
            mem[a as usize] = b;
        }
    }
    let mut visits = vec![0u32; p.instructions.len()];
    let mut io = Vec::new();
    let mut trace = Vec::new();
    let mut pc = 0usize;

    let status = loop {
        let Some(ins) = p.instructions.get(pc) else {
            break ConcreteStatus::Finished;
        };
        visits[pc] += 1;
        if visits[pc] > bound {
            break ConcreteStatus::LoopBoundExceeded;
        }
        trace.push(pc);
        let val = |r: &str, regs: &HashMap<&str, u64>| regs[r];
        let opnd = |o: &Operand, w: u32, regs: &HashMap<&str, u64>| match o {
            Operand::Reg(r) => regs[r.as_str()],
            Operand::Imm(v) => (*v as u64) & mask(w),
        };
        let address = |a: &Address, width: u32, regs: &HashMap<&str, u64>| -> Option<u64> {
            let base = a.base.as_deref().map(|b| regs[b] as i128).unwrap_or(0);
            let at = base + a.offset as i128;
            let len = (width / 8) as i128;
            if at < 0 || at + len > MEM_SIZE as i128 {
                None
            } else {
                Some(at as u64)
            }
        };
        let mut next = pc + 1;
        match ins {
            Instr::Const { dst, imm } => {
                let w = widths[dst.as_str()];
                regs.insert(dst, (*imm as u64) & mask(w));
            }
            Instr::Arith { kind, dst, a, b } => {
                let w = widths[a.as_str()];
                let x = val(a, &regs);
                let y = opnd(b, w, &regs);
                if matches!(kind, ArithOp::Udiv | ArithOp::Urem) && y == 0 {
                    break ConcreteStatus::DivByZero;
                }
                if p.mode == Mode::Trap && kind.can_overflow() {
                    let exact: u128 = match kind {
                        ArithOp::Add => x as u128 + y as u128,
                        ArithOp::Sub => (x as u128).wrapping_sub(y as u128),
                        _ => x as u128 * y as u128,
                    };
                    if exact > mask(w) as u128 {
                        break ConcreteStatus::TrapOverflow;
                    }
                }
                regs.insert(dst, fold_binary(kind.bin_op(), w, x, y));
            }
            Instr::Not { dst, a } => {
                let w = widths[a.as_str()];
                regs.insert(dst, !val(a, &regs) & mask(w));
            }
            Instr::Cmp { kind, dst, a, b } => {
                let w = widths[a.as_str()];
                let r = fold_binary(kind.bin_op(), w, val(a, &regs), opnd(b, w, &regs));
                regs.insert(dst, r);
            }
            Instr::Select { dst, cond, a, b } => {
                let v = if val(cond, &regs) != 0 { val(a, &regs) } else { val(b, &regs) };
                regs.insert(dst, v);
            }
            Instr::Br { cond, then_to, else_to } => {
                if val(cond, &regs) != 0 {
                    next = then_to.index;
                } else if let Some(e) = else_to {
                    next = e.index;
                }
            }
            Instr::Jmp { target } => next = target.index,
            Instr::Load { width, dst, addr } => {
                let Some(at) = address(addr, *width, &regs) else {
                    break ConcreteStatus::OutOfBoundsMem;
                };
                let v = (0..(*width / 8) as u64).fold(0u64, |acc, k| acc | (mem[(at + k) as usize] as u64) << (8 * k));
                regs.insert(dst, v);
            }
            Instr::Store { width, addr, src } => {
                let Some(at) = address(addr, *width, &regs) else {
                    break ConcreteStatus::OutOfBoundsMem;
                };
                let v = val(src, &regs);
                for k in 0..(*width / 8) as u64 {
                    mem[(at + k) as usize] = (v >> (8 * k)) as u8;
                }
            }
            Instr::Observe { src } => io.push(val(src, &regs)),
            Instr::Assume { src } => {
                if val(src, &regs) == 0 {
                    break ConcreteStatus::AssumeViolated;
                }
            }
            Instr::Assert { src } => {
                if val(src, &regs) == 0 {
                    break ConcreteStatus::AssertFailed;
                }
            }
            Instr::Halt => break ConcreteStatus::Finished,
        }
        pc = next;
    };

    ConcreteOutcome {
        status,
        final_memory: mem
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(a, &b)| (a as u64, b))
            .collect(),
        final_registers: p
            .registers
            .iter()
            .map(|(n, _)| (n.clone(), regs[n.as_str()]))
            .collect(),
        io_events: io,
        instr_trace: trace,
    }
}
