// SPDX-License-Identifier: Apache-2.0

//! Hash-consed fixed-width bitvector expressions.
//!
//! Every expression lives in an [`ExprPool`] and is referred to by an
//! [`ExprId`]. Structurally identical nodes always receive the same id, so id
//! equality is structural equality. The pool is shared between the two sides
//! of a comparison, which is what makes clause sets from different programs
//! directly comparable by id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Widest bitvector the pool accepts.
pub const MAX_WIDTH: u32 = 64;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExprId(pub u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ExprId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Interned variable name.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
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
    Eq,
    Ult,
    Slt,
    Concat,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Udiv => "udiv",
            BinOp::Urem => "urem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Lshr => "lshr",
            BinOp::Ashr => "ashr",
            BinOp::Eq => "eq",
            BinOp::Ult => "ult",
            BinOp::Slt => "slt",
            BinOp::Concat => "concat",
        }
    }

    pub fn is_predicate(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ult | BinOp::Slt)
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Eq
        )
    }

    pub const ALL: [BinOp; 15] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Udiv,
        BinOp::Urem,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Lshr,
        BinOp::Ashr,
        BinOp::Eq,
        BinOp::Ult,
        BinOp::Slt,
        BinOp::Concat,
    ];
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const { width: u32, value: u64 },
    Var { sym: SymId, width: u32 },
    Not(ExprId),
    Bin(BinOp, ExprId, ExprId),
    Ite(ExprId, ExprId, ExprId),
    Zext(ExprId, u32),
    Sext(ExprId, u32),
    Extract { hi: u32, lo: u32, arg: ExprId },
}

impl Node {
    pub fn children(&self) -> impl Iterator<Item = ExprId> {
        let (a, b, c) = match *self {
            Node::Const { .. } | Node::Var { .. } => (None, None, None),
            Node::Not(a) | Node::Zext(a, _) | Node::Sext(a, _) | Node::Extract { arg: a, .. } => {
                (Some(a), None, None)
            }
            Node::Bin(_, a, b) => (Some(a), Some(b), None),
            Node::Ite(c, t, e) => (Some(c), Some(t), Some(e)),
        };
        a.into_iter().chain(b).chain(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("width {0} is outside 1..={MAX_WIDTH}")]
    BadWidth(u32),
    #[error("operand widths differ in {op}: {left} vs {right}")]
    WidthMismatch {
        op: &'static str,
        left: u32,
        right: u32,
    },
    #[error("ite condition must have width 1, found {0}")]
    IteCondition(u32),
    #[error("extract [{hi}:{lo}] out of range for width {width}")]
    BadExtract { hi: u32, lo: u32, width: u32 },
    #[error("extension from width {from} to {to} does not widen")]
    BadExtension { from: u32, to: u32 },
    #[error("variable `{name}` already declared with width {existing}, requested {requested}")]
    VarWidth {
        name: String,
        existing: u32,
        requested: u32,
    },
    #[error("no value for variable `{0}`")]
    Unbound(String),
}

/// A concrete value for every variable of interest.
pub type Assignment = BTreeMap<String, u64>;

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn sign_extend(value: u64, width: u32) -> i64 {
    if width >= 64 {
        value as i64
    } else {
        let shift = 64 - width;
        ((value << shift) as i64) >> shift
    }
}

#[derive(Default)]
struct PoolInner {
    nodes: Vec<(Node, u32)>,
    index: HashMap<Node, ExprId>,
    names: Vec<(String, u32)>,
    name_index: HashMap<String, SymId>,
    simplified: HashMap<ExprId, ExprId>,
}

impl PoolInner {
    fn intern(&mut self, node: Node, width: u32) -> ExprId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push((node, width));
        self.index.insert(node, id);
        id
    }
}

/// Session-wide hash-cons table. Insert-or-get is linearizable; reads run
/// concurrently.
#[derive(Default)]
pub struct ExprPool {
    inner: RwLock<PoolInner>,
}

impl fmt::Debug for ExprPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExprPool").field("len", &self.len()).finish()
    }
}

/// Read-locked view of the pool for traversal-heavy work.
pub struct PoolView<'a> {
    guard: parking_lot::RwLockReadGuard<'a, PoolInner>,
}

impl PoolView<'_> {
    pub fn node(&self, id: ExprId) -> Node {
        self.guard.nodes[id.index()].0
    }

    pub fn width(&self, id: ExprId) -> u32 {
        self.guard.nodes[id.index()].1
    }

    pub fn sym_name(&self, sym: SymId) -> &str {
        &self.guard.names[sym.0 as usize].0
    }
}

impl ExprPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.read().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view(&self) -> PoolView<'_> {
        PoolView {
            guard: self.inner.read(),
        }
    }

    pub fn node(&self, id: ExprId) -> Node {
        self.inner.read().nodes[id.index()].0
    }

    pub fn width(&self, id: ExprId) -> u32 {
        self.inner.read().nodes[id.index()].1
    }

    pub fn sym_name(&self, sym: SymId) -> String {
        self.inner.read().names[sym.0 as usize].0.clone()
    }

    pub fn const_value(&self, id: ExprId) -> Option<u64> {
        match self.node(id) {
            Node::Const { value, .. } => Some(value),
            _ => None,
        }
    }

    /// Validates width rules and interns `node`.
    pub fn build(&self, node: Node) -> Result<ExprId, ExprError> {
        let width = self.check(&node)?;
        let node = match node {
            Node::Const { width, value } => Node::Const {
                width,
                value: value & mask(width),
            },
            other => other,
        };
        Ok(self.inner.write().intern(node, width))
    }

    fn check(&self, node: &Node) -> Result<u32, ExprError> {
        let ok_width = |w: u32| {
            if (1..=MAX_WIDTH).contains(&w) {
                Ok(w)
            } else {
                Err(ExprError::BadWidth(w))
            }
        };
        match *node {
            Node::Const { width, .. } | Node::Var { width, .. } => ok_width(width),
            Node::Not(a) => Ok(self.width(a)),
            Node::Bin(op, a, b) => {
                let (wa, wb) = (self.width(a), self.width(b));
                match op {
                    BinOp::Concat => ok_width(wa + wb),
                    _ if wa != wb => Err(ExprError::WidthMismatch {
                        op: op.name(),
                        left: wa,
                        right: wb,
                    }),
                    _ if op.is_predicate() => Ok(1),
                    _ => Ok(wa),
                }
            }
            Node::Ite(c, t, e) => {
                let wc = self.width(c);
                if wc != 1 {
                    return Err(ExprError::IteCondition(wc));
                }
                let (wt, we) = (self.width(t), self.width(e));
                if wt != we {
                    return Err(ExprError::WidthMismatch {
                        op: "ite",
                        left: wt,
                        right: we,
                    });
                }
                Ok(wt)
            }
            Node::Zext(a, w) | Node::Sext(a, w) => {
                let from = self.width(a);
                ok_width(w)?;
                if w < from {
                    return Err(ExprError::BadExtension { from, to: w });
                }
                Ok(w)
            }
            Node::Extract { hi, lo, arg } => {
                let width = self.width(arg);
                if lo > hi || hi >= width {
                    return Err(ExprError::BadExtract { hi, lo, width });
                }
                Ok(hi - lo + 1)
            }
        }
    }

    pub fn constant(&self, width: u32, value: u64) -> ExprId {
        assert!((1..=MAX_WIDTH).contains(&width), "constant width {width}");
        self.inner.write().intern(
            Node::Const {
                width,
                value: value & mask(width),
            },
            width,
        )
    }

    pub fn true_(&self) -> ExprId {
        self.constant(1, 1)
    }

    pub fn false_(&self) -> ExprId {
        self.constant(1, 0)
    }

    /// A variable. A name is bound to a single width for the pool's lifetime.
    pub fn var(&self, name: &str, width: u32) -> Result<ExprId, ExprError> {
        if !(1..=MAX_WIDTH).contains(&width) {
            return Err(ExprError::BadWidth(width));
        }
        let mut inner = self.inner.write();
        let sym = match inner.name_index.get(name) {
            Some(&sym) => {
                let existing = inner.names[sym.0 as usize].1;
                if existing != width {
                    return Err(ExprError::VarWidth {
                        name: name.to_string(),
                        existing,
                        requested: width,
                    });
                }
                sym
            }
            None => {
                let sym = SymId(inner.names.len() as u32);
                inner.names.push((name.to_string(), width));
                inner.name_index.insert(name.to_string(), sym);
                sym
            }
        };
        Ok(inner.intern(Node::Var { sym, width }, width))
    }

    pub fn binary(&self, op: BinOp, a: ExprId, b: ExprId) -> Result<ExprId, ExprError> {
        self.build(Node::Bin(op, a, b))
    }

    pub fn not(&self, a: ExprId) -> ExprId {
        let w = self.width(a);
        self.inner.write().intern(Node::Not(a), w)
    }

    pub fn ite(&self, c: ExprId, t: ExprId, e: ExprId) -> Result<ExprId, ExprError> {
        self.build(Node::Ite(c, t, e))
    }

    pub fn zext(&self, a: ExprId, width: u32) -> Result<ExprId, ExprError> {
        self.build(Node::Zext(a, width))
    }

    pub fn sext(&self, a: ExprId, width: u32) -> Result<ExprId, ExprError> {
        self.build(Node::Sext(a, width))
    }

    pub fn extract(&self, hi: u32, lo: u32, arg: ExprId) -> Result<ExprId, ExprError> {
        self.build(Node::Extract { hi, lo, arg })
    }

    pub fn concat(&self, hi: ExprId, lo: ExprId) -> Result<ExprId, ExprError> {
        self.binary(BinOp::Concat, hi, lo)
    }

    // Simplifying constructors used by the executor and the solver front end.
    // They only ever build well-typed nodes from already-checked operands, so
    // width errors are programming errors.

    pub fn mk(&self, node: Node) -> ExprId {
        let raw = self
            .build(node)
            .unwrap_or_else(|e| panic!("ill-typed internal node {node:?}: {e}"));
        self.simplify(raw)
    }

    pub fn mk_bin(&self, op: BinOp, a: ExprId, b: ExprId) -> ExprId {
        self.mk(Node::Bin(op, a, b))
    }

    pub fn mk_not(&self, a: ExprId) -> ExprId {
        self.mk(Node::Not(a))
    }

    pub fn mk_eq(&self, a: ExprId, b: ExprId) -> ExprId {
        self.mk_bin(BinOp::Eq, a, b)
    }

    pub fn mk_ne(&self, a: ExprId, b: ExprId) -> ExprId {
        let eq = self.mk_eq(a, b);
        self.mk_not(eq)
    }

    pub fn mk_and_all(&self, items: impl IntoIterator<Item = ExprId>) -> ExprId {
        let mut acc = self.true_();
        for item in items {
            acc = self.mk_bin(BinOp::And, acc, item);
        }
        acc
    }

    pub fn mk_or_all(&self, items: impl IntoIterator<Item = ExprId>) -> ExprId {
        let mut acc = self.false_();
        for item in items {
            acc = self.mk_bin(BinOp::Or, acc, item);
        }
        acc
    }

    pub fn mk_zext(&self, a: ExprId, width: u32) -> ExprId {
        self.mk(Node::Zext(a, width))
    }

    pub fn mk_extract(&self, hi: u32, lo: u32, arg: ExprId) -> ExprId {
        self.mk(Node::Extract { hi, lo, arg })
    }

    pub fn mk_concat(&self, hi: ExprId, lo: ExprId) -> ExprId {
        self.mk_bin(BinOp::Concat, hi, lo)
    }

    /// Local bottom-up rewriting; see [`crate::simplify`].
    pub fn simplify(&self, e: ExprId) -> ExprId {
        if let Some(&s) = self.inner.read().simplified.get(&e) {
            return s;
        }
        let s = crate::simplify::simplify_node(self, e);
        let mut inner = self.inner.write();
        inner.simplified.insert(e, s);
        inner.simplified.insert(s, s);
        s
    }

    pub(crate) fn intern_checked(&self, node: Node, width: u32) -> ExprId {
        self.inner.write().intern(node, width)
    }

    /// Concrete evaluation with fixed-width two's-complement semantics.
    /// Division by zero follows the SMT-LIB convention: `udiv x 0` is all ones
    /// and `urem x 0` is `x`.
    pub fn eval(&self, e: ExprId, a: &Assignment) -> Result<u64, ExprError> {
        let view = self.view();
        let mut memo = HashMap::new();
        eval_in(&view, e, a, &mut memo)
    }

    /// Evaluation where unbound variables read as zero.
    pub fn eval_total(&self, e: ExprId, a: &Assignment) -> u64 {
        let view = self.view();
        let mut memo = HashMap::new();
        let mut filled = a.clone();
        for (name, _) in free_vars_in(&view, e) {
            filled.entry(name).or_insert(0);
        }
        eval_in(&view, e, &filled, &mut memo).expect("all variables filled")
    }

    /// Exact set of `(name, width)` variable leaves.
    pub fn free_vars(&self, e: ExprId) -> BTreeSet<(String, u32)> {
        free_vars_in(&self.view(), e)
    }

    pub fn free_vars_all(&self, es: impl IntoIterator<Item = ExprId>) -> BTreeSet<(String, u32)> {
        let view = self.view();
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for e in es {
            collect_vars(&view, e, &mut seen, &mut out);
        }
        out
    }

    /// Canonical prefix rendering, e.g. `(add (var num_0 8) (const 8 1))`.
    pub fn render(&self, e: ExprId) -> String {
        let view = self.view();
        let mut out = String::new();
        render_in(&view, e, &mut out, usize::MAX);
        out
    }

    /// Like [`render`](Self::render) but gives up past `limit` bytes.
    pub fn render_bounded(&self, e: ExprId, limit: usize) -> Option<String> {
        let view = self.view();
        let mut out = String::new();
        if render_in(&view, e, &mut out, limit) {
            Some(out)
        } else {
            None
        }
    }

    /// One level of the DAG with children written as ids, e.g. `(add #3 #7)`.
    pub fn render_shallow(&self, e: ExprId) -> String {
        self.render_shallow_with(e, |c| c)
    }

    /// Like [`ExprPool::render_shallow`], writing each child as `f(child)`.
    pub fn render_shallow_with(&self, e: ExprId, f: impl Fn(ExprId) -> ExprId) -> String {
        let view = self.view();
        match view.node(e) {
            Node::Const { width, value } => format!("(const {width} {value})"),
            Node::Var { sym, width } => format!("(var {} {width})", view.sym_name(sym)),
            Node::Not(a) => format!("(not {})", f(a)),
            Node::Bin(op, a, b) => format!("({} {} {})", op.name(), f(a), f(b)),
            Node::Ite(c, t, e) => format!("(ite {} {} {})", f(c), f(t), f(e)),
            Node::Zext(a, w) => format!("(zext {w} {})", f(a)),
            Node::Sext(a, w) => format!("(sext {w} {})", f(a)),
            Node::Extract { hi, lo, arg } => format!("(extract {hi} {lo} {})", f(arg)),
        }
    }

    /// All ids reachable from `roots`, in ascending order.
    pub fn reachable(&self, roots: impl IntoIterator<Item = ExprId>) -> BTreeSet<ExprId> {
        let view = self.view();
        let mut seen = BTreeSet::new();
        let mut stack: Vec<ExprId> = roots.into_iter().collect();
        while let Some(e) = stack.pop() {
            if seen.insert(e) {
                stack.extend(view.node(e).children());
            }
        }
        seen
    }
}

fn collect_vars(
    view: &PoolView<'_>,
    e: ExprId,
    seen: &mut BTreeSet<ExprId>,
    out: &mut BTreeSet<(String, u32)>,
) {
    let mut stack = vec![e];
    while let Some(e) = stack.pop() {
        if !seen.insert(e) {
            continue;
        }
        match view.node(e) {
            Node::Var { sym, width } => {
                out.insert((view.sym_name(sym).to_string(), width));
            }
            node => stack.extend(node.children()),
        }
    }
}

fn free_vars_in(view: &PoolView<'_>, e: ExprId) -> BTreeSet<(String, u32)> {
    let mut out = BTreeSet::new();
    collect_vars(view, e, &mut BTreeSet::new(), &mut out);
    out
}

fn render_in(view: &PoolView<'_>, e: ExprId, out: &mut String, limit: usize) -> bool {
    use std::fmt::Write;
    if out.len() > limit {
        return false;
    }
    match view.node(e) {
        Node::Const { width, value } => {
            let _ = write!(out, "(const {width} {value})");
            true
        }
        Node::Var { sym, width } => {
            let _ = write!(out, "(var {} {width})", view.sym_name(sym));
            true
        }
        node => {
            out.push('(');
            match node {
                Node::Not(_) => out.push_str("not"),
                Node::Bin(op, _, _) => out.push_str(op.name()),
                Node::Ite(..) => out.push_str("ite"),
                Node::Zext(_, w) => {
                    let _ = write!(out, "zext {w}");
                }
                Node::Sext(_, w) => {
                    let _ = write!(out, "sext {w}");
                }
                Node::Extract { hi, lo, .. } => {
                    let _ = write!(out, "extract {hi} {lo}");
                }
                Node::Const { .. } | Node::Var { .. } => unreachable!(),
            }
            for child in node.children() {
                out.push(' ');
                if !render_in(view, child, out, limit) {
                    return false;
                }
            }
            out.push(')');
            out.len() <= limit
        }
    }
}

fn eval_in(
    view: &PoolView<'_>,
    e: ExprId,
    a: &Assignment,
    memo: &mut HashMap<ExprId, u64>,
) -> Result<u64, ExprError> {
    if let Some(&v) = memo.get(&e) {
        return Ok(v);
    }
    let width = view.width(e);
    let value = match view.node(e) {
        Node::Const { value, .. } => value,
        Node::Var { sym, width } => {
            let name = view.sym_name(sym);
            a.get(name)
                .map(|v| v & mask(width))
                .ok_or_else(|| ExprError::Unbound(name.to_string()))?
        }
        Node::Not(x) => !eval_in(view, x, a, memo)? & mask(width),
        Node::Bin(op, x, y) => {
            let wx = view.width(x);
            let wy = view.width(y);
            let vx = eval_in(view, x, a, memo)?;
            let vy = eval_in(view, y, a, memo)?;
            if op == BinOp::Concat {
                (vx << wy) | vy
            } else {
                fold_binary(op, wx, vx, vy)
            }
        }
        Node::Ite(c, t, f) => {
            if eval_in(view, c, a, memo)? != 0 {
                eval_in(view, t, a, memo)?
            } else {
                eval_in(view, f, a, memo)?
            }
        }
        Node::Zext(x, _) => eval_in(view, x, a, memo)?,
        Node::Sext(x, w) => {
            let wx = view.width(x);
            (sign_extend(eval_in(view, x, a, memo)?, wx) as u64) & mask(w)
        }
        Node::Extract { hi, lo, arg } => (eval_in(view, arg, a, memo)? >> lo) & mask(hi - lo + 1),
    };
    memo.insert(e, value);
    Ok(value)
}

/// Concrete semantics of a non-concat binary operator over `width`-bit
/// operands. Predicates return 0 or 1.
pub fn fold_binary(op: BinOp, width: u32, x: u64, y: u64) -> u64 {
    let m = mask(width);
    match op {
        BinOp::Add => x.wrapping_add(y) & m,
        BinOp::Sub => x.wrapping_sub(y) & m,
        BinOp::Mul => x.wrapping_mul(y) & m,
        BinOp::Udiv => {
            if y == 0 {
                m
            } else {
                x / y
            }
        }
        BinOp::Urem => {
            if y == 0 {
                x
            } else {
                x % y
            }
        }
        BinOp::And => x & y,
        BinOp::Or => x | y,
        BinOp::Xor => x ^ y,
        BinOp::Shl => {
            if y >= width as u64 {
                0
            } else {
                (x << y) & m
            }
        }
        BinOp::Lshr => {
            if y >= width as u64 {
                0
            } else {
                x >> y
            }
        }
        BinOp::Ashr => {
            let sx = sign_extend(x, width);
            let shift = y.min(63);
            ((sx >> shift) as u64) & m
        }
        BinOp::Eq => (x == y) as u64,
        BinOp::Ult => (x < y) as u64,
        BinOp::Slt => (sign_extend(x, width) < sign_extend(y, width)) as u64,
        BinOp::Concat => unreachable!("concat is width-dependent on both operands"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_returns_same_id() {
        let pool = ExprPool::new();
        let one = pool.constant(8, 1);
        let two = pool.constant(8, 2);
        let a = pool.binary(BinOp::Add, one, two).unwrap();
        let b = pool.binary(BinOp::Add, one, two).unwrap();
        assert_eq!(a, b);
        let c = pool.binary(BinOp::Add, two, one).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn eq_with_mismatched_widths_is_rejected() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        let y = pool.var("y", 16).unwrap();
        assert!(matches!(
            pool.binary(BinOp::Eq, x, y),
            Err(ExprError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn var_width_is_fixed_per_name() {
        let pool = ExprPool::new();
        let n = pool.var("num_0", 8).unwrap();
        assert_eq!(pool.width(n), 8);
        assert_eq!(pool.var("num_0", 8).unwrap(), n);
        assert!(pool.var("num_0", 16).is_err());
    }

    #[test]
    fn extract_bounds() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        assert!(pool.extract(8, 0, x).is_err());
        assert!(pool.extract(2, 3, x).is_err());
        let e = pool.extract(5, 2, x).unwrap();
        assert_eq!(pool.width(e), 4);
    }

    #[test]
    fn eval_examples() {
        let pool = ExprPool::new();
        let c255 = pool.constant(8, 255);
        let c0 = pool.constant(8, 0);
        let slt = pool.binary(BinOp::Slt, c255, c0).unwrap();
        assert_eq!(pool.eval(slt, &Assignment::new()).unwrap(), 1);

        let x = pool.var("x", 8).unwrap();
        let y = pool.var("y", 8).unwrap();
        let sum = pool.binary(BinOp::Add, x, y).unwrap();
        let env: Assignment = [("x".to_string(), 200), ("y".to_string(), 100)].into();
        assert_eq!(pool.eval(sum, &env).unwrap(), 44);

        let abcd = pool.constant(16, 0xABCD);
        let lo = pool.extract(7, 0, abcd).unwrap();
        assert_eq!(pool.eval(lo, &Assignment::new()).unwrap(), 0xCD);
    }

    #[test]
    fn eval_reports_unbound_variable() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        assert_eq!(
            pool.eval(x, &Assignment::new()),
            Err(ExprError::Unbound("x".into()))
        );
    }

    #[test]
    fn division_by_zero_is_total() {
        assert_eq!(fold_binary(BinOp::Udiv, 8, 7, 0), 0xff);
        assert_eq!(fold_binary(BinOp::Urem, 8, 7, 0), 7);
    }

    #[test]
    fn free_vars_examples() {
        let pool = ExprPool::new();
        let five = pool.constant(8, 5);
        assert!(pool.free_vars(five).is_empty());
        let x = pool.var("x", 8).unwrap();
        let y = pool.var("y", 8).unwrap();
        let xy = pool.binary(BinOp::Mul, x, y).unwrap();
        let e = pool.binary(BinOp::Add, x, xy).unwrap();
        let expect: BTreeSet<_> = [("x".to_string(), 8), ("y".to_string(), 8)].into();
        assert_eq!(pool.free_vars(e), expect);

        let xx = pool.binary(BinOp::Eq, x, x).unwrap();
        let zero = pool.constant(8, 0);
        let ite = pool.ite(xx, zero, y).unwrap();
        assert_eq!(pool.free_vars(ite), expect);
    }

    #[test]
    fn rendering_is_prefix() {
        let pool = ExprPool::new();
        let n = pool.var("num_0", 8).unwrap();
        let one = pool.constant(8, 1);
        let e = pool.binary(BinOp::Add, n, one).unwrap();
        assert_eq!(pool.render(e), "(add (var num_0 8) (const 8 1))");
        assert_eq!(pool.render_shallow(e), format!("(add {n} {one})"));
        assert_eq!(pool.render_bounded(e, 5), None);
    }
}
