// SPDX-License-Identifier: Apache-2.0

//! Symbolic execution of one program under a harness.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::harness::{annotation_ref, Annotation, Harness, Location, Placement, Side};
use crate::constraint::parse_constraint;
use crate::expr::{Assignment, ExprId, ExprPool, Node};
use crate::ir::{
    interpret, Address, ArithOp, ConcreteInput, ConcreteOutcome, ConcreteStatus, Instr, Mode, Operand, Program,
    MEM_SIZE,
};
use crate::solver::{ClauseSet, SolveResult, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Running,
    Finished,
    TrapOverflow,
    DivByZero,
    OutOfBoundsMem,
    SymbolicAddress,
    AssertFailed,
    AssumeUnsat,
    LoopBoundExceeded,
    /// The solver could not decide whether this path is feasible.
    SolverUnknown,
}

impl Status {
    pub fn is_error(self) -> bool {
        matches!(
            self,
            Status::TrapOverflow | Status::DivByZero | Status::OutOfBoundsMem | Status::SymbolicAddress
        )
    }

    /// Whether leaves with this status take part in pairing.
    pub fn is_pairable(self) -> bool {
        !matches!(self, Status::AssumeUnsat | Status::SolverUnknown | Status::Running)
    }

    /// The interpreter status an input on this path must produce.
    pub fn concrete(self) -> Option<ConcreteStatus> {
        Some(match self {
            Status::Finished => ConcreteStatus::Finished,
            Status::TrapOverflow => ConcreteStatus::TrapOverflow,
            Status::DivByZero => ConcreteStatus::DivByZero,
            Status::OutOfBoundsMem => ConcreteStatus::OutOfBoundsMem,
            Status::AssertFailed => ConcreteStatus::AssertFailed,
            Status::LoopBoundExceeded => ConcreteStatus::LoopBoundExceeded,
            Status::AssumeUnsat => ConcreteStatus::AssumeViolated,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    InstrExec,
    MemRead,
    MemWrite,
    RegWrite,
    Io,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub instr: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ExprId>,
}

impl Event {
    fn exec(instr: usize) -> Self {
        Event {
            kind: EventKind::InstrExec,
            instr,
            addr: None,
            width: None,
            reg: None,
            value: None,
        }
    }

    fn reg_write(instr: usize, reg: &str, value: ExprId) -> Self {
        Event {
            kind: EventKind::RegWrite,
            reg: Some(reg.to_string()),
            value: Some(value),
            ..Event::exec(instr)
        }
    }

    fn mem(kind: EventKind, instr: usize, addr: u64, width: u32, value: ExprId) -> Self {
        Event {
            kind,
            addr: Some(addr),
            width: Some(width),
            value: Some(value),
            ..Event::exec(instr)
        }
    }
}

/// One machine state during exploration.
#[derive(Debug, Clone)]
pub struct SymState {
    pub pc: usize,
    pub regs: BTreeMap<String, ExprId>,
    /// Bytes that may differ from zero.
    pub mem: BTreeMap<u64, ExprId>,
    pub constraints: ClauseSet,
    pub visits: Vec<u32>,
    pub io: Vec<ExprId>,
    pub trace: Vec<usize>,
    /// A satisfying assignment of `constraints`.
    pub model: Assignment,
    pub status: Status,
    /// Register write deferred past a split, with its instruction index.
    pending: Option<(usize, String, ExprId)>,
    asserts_done: usize,
    finishing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Constraints added on entry to this node.
    pub delta: Vec<ExprId>,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTree {
    pub side: Side,
    /// Node `i` has id `i`; ids follow a preorder walk from the root `0`.
    pub nodes: Vec<TreeNode>,
}

impl ExecTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// The full constraint set at `id`: the union of deltas on its path.
    pub fn constraints(&self, id: usize) -> ClauseSet {
        self.path(id)
            .into_iter()
            .flat_map(|n| self.nodes[n].delta.iter().copied())
            .collect()
    }
}

/// A leaf state with everything needed for pairing and diffing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminal {
    pub node: usize,
    pub status: Status,
    pub constraints: ClauseSet,
    pub regs: BTreeMap<String, ExprId>,
    pub mem: BTreeMap<u64, ExprId>,
    pub io: Vec<ExprId>,
    pub trace: Vec<usize>,
    pub model: Option<Assignment>,
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub side: Side,
    pub tree: ExecTree,
    /// One per leaf, ordered by node id.
    pub terminals: Vec<Terminal>,
}

impl Exploration {
    pub fn terminal(&self, node: usize) -> Option<&Terminal> {
        self.terminals
            .binary_search_by_key(&node, |t| t.node)
            .ok()
            .map(|i| &self.terminals[i])
    }

    /// Leaves that take part in pairing.
    pub fn pairable(&self) -> impl Iterator<Item = &Terminal> {
        self.terminals.iter().filter(|t| t.status.is_pairable())
    }

    /// Leaves whose constraints describe real inputs: all but pruned
    /// assumption markers.
    pub fn retained(&self) -> impl Iterator<Item = &Terminal> {
        self.terminals.iter().filter(|t| t.status != Status::AssumeUnsat)
    }
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub solver: Solver,
    pub workers: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            solver: Solver::default(),
            workers: 1,
        }
    }
}

enum Feasible {
    Yes(Assignment),
    No,
    Unknown,
}

enum Child {
    Continue(SymState),
    Leaf(SymState),
}

struct NodeResult {
    events: Vec<Event>,
    /// `None` when the node itself is a leaf carrying `leaf`.
    children: Vec<(Vec<ExprId>, Child)>,
    leaf: Option<SymState>,
}

struct Ctx<'a> {
    pool: &'a ExprPool,
    harness: &'a Harness,
    side: Side,
    program: &'a Program,
    widths: BTreeMap<&'a str, u32>,
    solver: &'a Solver,
}

fn with_constraint(st: &SymState, c: ExprId, model: Assignment, pool: &ExprPool) -> (SymState, Vec<ExprId>) {
    let mut next = st.clone();
    next.model = model;
    let mut delta = Vec::new();
    if pool.const_value(c) != Some(1) && next.constraints.insert(c) {
        delta.push(c);
    }
    (next, delta)
}

impl Ctx<'_> {
    /// Feasibility of `c` and of its negation, using the state's model for
    /// whichever side it already witnesses.
    fn fork(&self, st: &SymState, c: ExprId) -> (ExprId, Feasible, ExprId, Feasible) {
        let pool = self.pool;
        let not_c = pool.mk_not(c);
        let mut model = st.model.clone();
        for (name, _) in pool.free_vars(c) {
            model.entry(name).or_insert(0);
        }
        let holds = pool.eval_total(c, &model) == 1;
        let (witnessed, other) = if holds { (c, not_c) } else { (not_c, c) };
        let other_feasible = if pool.const_value(other) == Some(0) {
            Feasible::No
        } else {
            let mut q = st.constraints.clone();
            q.insert(other);
            match self.solver.is_sat(pool, &q) {
                SolveResult::Sat(m) => Feasible::Yes(m),
                SolveResult::Unsat(_) => Feasible::No,
                SolveResult::Unknown(_) => Feasible::Unknown,
            }
        };
        (witnessed, Feasible::Yes(model), other, other_feasible)
    }

    /// Splits on `c`, giving the `c`-side status `on_true` (None = keep
    /// running) and likewise for `on_false`. Children are ordered true side
    /// first.
    fn split(&self, st: &SymState, c: ExprId, on_true: Option<Status>, on_false: Option<Status>, true_pc: usize, false_pc: usize) -> Vec<(Vec<ExprId>, Child)> {
        let (a, fa, b, fb) = self.fork(st, c);
        let mut sides = [(a, fa), (b, fb)];
        if a != c {
            sides.swap(0, 1);
        }
        let mut out = Vec::new();
        for (k, (cond, feas)) in sides.into_iter().enumerate() {
            let (status, pc) = if k == 0 { (on_true, true_pc) } else { (on_false, false_pc) };
            match feas {
                Feasible::No => {}
                Feasible::Yes(model) => {
                    let (mut next, delta) = with_constraint(st, cond, model, self.pool);
                    next.pc = pc;
                    match status {
                        Some(s) => {
                            next.status = s;
                            next.pending = None;
                            out.push((delta, Child::Leaf(next)));
                        }
                        None => out.push((delta, Child::Continue(next))),
                    }
                }
                Feasible::Unknown => {
                    let mut next = st.clone();
                    next.constraints.insert(cond);
                    next.status = Status::SolverUnknown;
                    next.pending = None;
                    out.push((vec![cond], Child::Leaf(next)));
                }
            }
        }
        out
    }

    fn reg(&self, st: &SymState, r: &str) -> ExprId {
        st.regs[r]
    }

    fn operand(&self, st: &SymState, o: &Operand, width: u32) -> ExprId {
        match o {
            Operand::Reg(r) => self.reg(st, r),
            Operand::Imm(v) => self.pool.constant(width, *v as u64),
        }
    }

    fn nonzero(&self, e: ExprId) -> ExprId {
        let w = self.pool.width(e);
        if w == 1 {
            e
        } else {
            self.pool.mk_ne(e, self.pool.constant(w, 0))
        }
    }

    /// Concrete address of an access, or the status it terminates with.
    fn address(&self, st: &SymState, a: &Address, width: u32) -> Result<u64, Status> {
        let base = match &a.base {
            None => 0i128,
            Some(r) => match self.pool.const_value(self.pool.simplify(self.reg(st, r))) {
                Some(v) => v as i128,
                None => return Err(Status::SymbolicAddress),
            },
        };
        let at = base + a.offset as i128;
        if at < 0 || at + (width / 8) as i128 > MEM_SIZE as i128 {
            Err(Status::OutOfBoundsMem)
        } else {
            Ok(at as u64)
        }
    }

    fn read_bytes(&self, mem: &BTreeMap<u64, ExprId>, addr: u64, len: u64) -> ExprId {
        let zero = self.pool.constant(8, 0);
        let mut value = *mem.get(&addr).unwrap_or(&zero);
        for k in 1..len {
            let byte = *mem.get(&(addr + k)).unwrap_or(&zero);
            value = self.pool.mk_concat(byte, value);
        }
        value
    }

    fn write(&self, st: &mut SymState, events: &mut Vec<Event>, instr: usize, reg: &str, value: ExprId) {
        st.regs.insert(reg.to_string(), value);
        events.push(Event::reg_write(instr, reg, value));
    }

    fn overflow(&self, kind: ArithOp, x: ExprId, y: ExprId, w: u32) -> ExprId {
        let p = self.pool;
        let wide = if kind == ArithOp::Mul { 2 * w } else { w + 1 };
        let (xe, ye) = (p.mk_zext(x, wide), p.mk_zext(y, wide));
        let exact = p.mk_bin(kind.bin_op(), xe, ye);
        let wrapped = p.mk_zext(p.mk_bin(kind.bin_op(), x, y), wide);
        p.mk_ne(exact, wrapped)
    }

    /// Runs `st` until the current tree node ends.
    fn run_node(&self, mut st: SymState) -> NodeResult {
        let pool = self.pool;
        let mut events = Vec::new();
        if let Some((instr, reg, value)) = st.pending.take() {
            self.write(&mut st, &mut events, instr, &reg, value);
        }
        let leaf = |mut st: SymState, status: Status, events: Vec<Event>| {
            st.status = status;
            NodeResult {
                events,
                children: Vec::new(),
                leaf: Some(st),
            }
        };
        loop {
            let pc = st.pc;
            let Some(ins) = self.program.instructions.get(pc).filter(|_| !st.finishing) else {
                st.finishing = true;
                return self.finish(st, events);
            };
            st.visits[pc] += 1;
            if st.visits[pc] > self.harness.loop_bound {
                return leaf(st, Status::LoopBoundExceeded, events);
            }
            st.trace.push(pc);
            events.push(Event::exec(pc));
            st.pc = pc + 1;
            match ins {
                Instr::Const { dst, imm } => {
                    let v = pool.constant(self.widths[dst.as_str()], *imm as u64);
                    self.write(&mut st, &mut events, pc, dst, v);
                }
                Instr::Arith { kind, dst, a, b } => {
                    let w = self.widths[a.as_str()];
                    let x = self.reg(&st, a);
                    let y = self.operand(&st, b, w);
                    let result = pool.mk_bin(kind.bin_op(), x, y);
                    let hazard = match kind {
                        ArithOp::Udiv | ArithOp::Urem => Some((pool.mk_eq(y, pool.constant(w, 0)), Status::DivByZero)),
                        k if self.program.mode == Mode::Trap && k.can_overflow() => {
                            Some((self.overflow(*k, x, y, w), Status::TrapOverflow))
                        }
                        _ => None,
                    };
                    match hazard.map(|(c, s)| (c, pool.const_value(c), s)) {
                        Some((_, Some(1), status)) => return leaf(st, status, events),
                        Some((c, None, status)) => {
                            st.pending = Some((pc, dst.clone(), result));
                            let children = self.split(&st, c, Some(status), None, st.pc, st.pc);
                            return NodeResult {
                                events,
                                children,
                                leaf: None,
                            };
                        }
                        _ => self.write(&mut st, &mut events, pc, dst, result),
                    }
                }
                Instr::Not { dst, a } => {
                    let v = pool.mk_not(self.reg(&st, a));
                    self.write(&mut st, &mut events, pc, dst, v);
                }
                Instr::Cmp { kind, dst, a, b } => {
                    let w = self.widths[a.as_str()];
                    let x = self.reg(&st, a);
                    let y = self.operand(&st, b, w);
                    let bit = pool.mk_bin(kind.bin_op(), x, y);
                    let v = pool.mk_zext(bit, self.widths[dst.as_str()]);
                    self.write(&mut st, &mut events, pc, dst, v);
                }
                Instr::Select { dst, cond, a, b } => {
                    let c = self.nonzero(self.reg(&st, cond));
                    let v = pool.mk(Node::Ite(c, self.reg(&st, a), self.reg(&st, b)));
                    self.write(&mut st, &mut events, pc, dst, v);
                }
                Instr::Br { cond, then_to, else_to } => {
                    let c = self.nonzero(self.reg(&st, cond));
                    let else_pc = else_to.as_ref().map(|l| l.index).unwrap_or(pc + 1);
                    let children = match pool.const_value(c) {
                        Some(v) => {
                            st.pc = if v == 1 { then_to.index } else { else_pc };
                            vec![(Vec::new(), Child::Continue(st))]
                        }
                        None => self.split(&st, c, None, None, then_to.index, else_pc),
                    };
                    return NodeResult {
                        events,
                        children,
                        leaf: None,
                    };
                }
                Instr::Jmp { target } => {
                    st.pc = target.index;
                    return NodeResult {
                        events,
                        children: vec![(Vec::new(), Child::Continue(st))],
                        leaf: None,
                    };
                }
                Instr::Load { width, dst, addr } => match self.address(&st, addr, *width) {
                    Err(status) => return leaf(st, status, events),
                    Ok(at) => {
                        let v = self.read_bytes(&st.mem, at, (*width / 8) as u64);
                        events.push(Event::mem(EventKind::MemRead, pc, at, *width, v));
                        let v = pool.mk_zext(v, self.widths[dst.as_str()]);
                        self.write(&mut st, &mut events, pc, dst, v);
                    }
                },
                Instr::Store { width, addr, src } => match self.address(&st, addr, *width) {
                    Err(status) => return leaf(st, status, events),
                    Ok(at) => {
                        let s = self.reg(&st, src);
                        let v = pool.mk_extract(*width - 1, 0, s);
                        events.push(Event::mem(EventKind::MemWrite, pc, at, *width, v));
                        for k in 0..(*width / 8) {
                            let byte = pool.mk_extract(8 * k + 7, 8 * k, v);
                            if pool.const_value(byte) == Some(0) {
                                st.mem.remove(&(at + k as u64));
                            } else {
                                st.mem.insert(at + k as u64, byte);
                            }
                        }
                    }
                },
                Instr::Observe { src } => {
                    let v = self.reg(&st, src);
                    st.io.push(v);
                    events.push(Event {
                        kind: EventKind::Io,
                        value: Some(v),
                        ..Event::exec(pc)
                    });
                }
                Instr::Assume { src } => {
                    let c = self.nonzero(self.reg(&st, src));
                    match pool.const_value(c) {
                        Some(1) => {}
                        Some(_) => {
                            st.constraints.insert(c);
                            return NodeResult {
                                events,
                                children: vec![(vec![c], Child::Leaf(SymState { status: Status::AssumeUnsat, ..st }))],
                                leaf: None,
                            };
                        }
                        None => {
                            let mut q = st.constraints.clone();
                            q.insert(c);
                            let mut model = st.model.clone();
                            for (name, _) in pool.free_vars(c) {
                                model.entry(name).or_insert(0);
                            }
                            let outcome = if pool.eval_total(c, &model) == 1 {
                                Feasible::Yes(model)
                            } else {
                                match self.solver.is_sat(pool, &q) {
                                    SolveResult::Sat(m) => Feasible::Yes(m),
                                    SolveResult::Unsat(_) => Feasible::No,
                                    SolveResult::Unknown(_) => Feasible::Unknown,
                                }
                            };
                            let child = match outcome {
                                Feasible::Yes(m) => {
                                    let (next, delta) = with_constraint(&st, c, m, pool);
                                    (delta, Child::Continue(next))
                                }
                                Feasible::No | Feasible::Unknown => {
                                    let status = if matches!(outcome, Feasible::No) {
                                        Status::AssumeUnsat
                                    } else {
                                        Status::SolverUnknown
                                    };
                                    let mut next = st.clone();
                                    next.constraints = q;
                                    next.status = status;
                                    (vec![c], Child::Leaf(next))
                                }
                            };
                            return NodeResult {
                                events,
                                children: vec![child],
                                leaf: None,
                            };
                        }
                    }
                }
                Instr::Assert { src } => {
                    let c = self.nonzero(self.reg(&st, src));
                    match pool.const_value(c) {
                        Some(1) => {}
                        Some(_) => return leaf(st, Status::AssertFailed, events),
                        None => {
                            let children = self.split(&st, c, None, Some(Status::AssertFailed), st.pc, st.pc);
                            return NodeResult {
                                events,
                                children,
                                leaf: None,
                            };
                        }
                    }
                }
                Instr::Halt => {
                    st.finishing = true;
                    return self.finish(st, events);
                }
            }
        }
    }

    /// Checks harness assertions at a finished state.
    fn finish(&self, mut st: SymState, events: Vec<Event>) -> NodeResult {
        let assertions = &self.harness.spec.assertions;
        while st.asserts_done < assertions.len() {
            let text = &assertions[st.asserts_done];
            st.asserts_done += 1;
            let c = assertion_expr(self.pool, self.harness, self.side, text, &st.regs, &st.mem);
            match self.pool.const_value(c) {
                Some(1) => continue,
                Some(_) => {
                    st.status = Status::AssertFailed;
                    return NodeResult {
                        events,
                        children: Vec::new(),
                        leaf: Some(st),
                    };
                }
                None => {
                    let children = self.split(&st, c, None, Some(Status::AssertFailed), st.pc, st.pc);
                    return NodeResult {
                        events,
                        children,
                        leaf: None,
                    };
                }
            }
        }
        st.status = Status::Finished;
        NodeResult {
            events,
            children: Vec::new(),
            leaf: Some(st),
        }
    }
}

/// Value of an annotation location in a state: little-endian bytes, or the
/// register zero-extended to the annotation width.
pub fn resolve_location(pool: &ExprPool, regs: &BTreeMap<String, ExprId>, mem: &BTreeMap<u64, ExprId>, loc: &Location, bytes: u64) -> ExprId {
    match loc {
        Location::Mem { mem: addr, .. } => {
            let zero = pool.constant(8, 0);
            let mut value = *mem.get(addr).unwrap_or(&zero);
            for k in 1..bytes {
                value = pool.mk_concat(*mem.get(&(addr + k)).unwrap_or(&zero), value);
            }
            value
        }
        Location::Reg { reg } => {
            let v = regs[reg];
            let w = (bytes * 8) as u32;
            if pool.width(v) > w {
                pool.mk_extract(w - 1, 0, v)
            } else {
                pool.mk_zext(v, w)
            }
        }
    }
}

/// Value of annotation `a` in terminal `t` of `side`.
pub fn resolve_annotation(pool: &ExprPool, t: &Terminal, a: &Annotation, side: Side) -> ExprId {
    resolve_location(pool, &t.regs, &t.mem, a.location(side), a.bytes)
}

fn assertion_expr(pool: &ExprPool, h: &Harness, side: Side, text: &str, regs: &BTreeMap<String, ExprId>, mem: &BTreeMap<u64, ExprId>) -> ExprId {
    let resolve = |n: &str| {
        if let Some(&e) = h.symbol_exprs.get(n) {
            return Some(e);
        }
        let ((idx, byte), _) = annotation_ref(&h.annotations, n)?;
        let a = &h.annotations[idx];
        let v = resolve_location(pool, regs, mem, a.location(side), a.bytes);
        Some(match byte {
            None => v,
            Some(k) => pool.mk_extract(8 * k as u32 + 7, 8 * k as u32, v),
        })
    };
    parse_constraint(pool, text, resolve).expect("assertions are checked when the harness is compiled")
}

/// Initial state of `side`: symbols at their placements, everything else zero,
/// harness assumptions as the constraint set.
pub fn init_state(pool: &ExprPool, h: &Harness, side: Side) -> SymState {
    let p = h.program(side);
    let mut regs: BTreeMap<String, ExprId> = p.registers.iter().map(|(n, w)| (n.clone(), pool.constant(*w, 0))).collect();
    let mut mem = BTreeMap::new();
    for (name, placement) in h.placements(side) {
        let sym = h.symbol_exprs[name];
        match placement {
            Placement::Mem { addr, len } => {
                let v = pool.mk_zext(sym, (*len * 8) as u32);
                for k in 0..*len {
                    let byte = pool.mk_extract(8 * k as u32 + 7, 8 * k as u32, v);
                    if pool.const_value(byte) != Some(0) {
                        mem.insert(addr + k, byte);
                    }
                }
            }
            Placement::Reg(r) => {
                let w = p.register_width(r).expect("placement register exists");
                regs.insert(r.clone(), pool.mk_zext(sym, w));
            }
        }
    }
    SymState {
        pc: 0,
        regs,
        mem,
        constraints: h.assumptions.iter().copied().collect(),
        visits: vec![0; p.instructions.len()],
        io: Vec::new(),
        trace: Vec::new(),
        model: Assignment::new(),
        status: Status::Running,
        pending: None,
        asserts_done: 0,
        finishing: false,
    }
}

struct RawNode {
    parent: Option<usize>,
    children: Vec<usize>,
    delta: Vec<ExprId>,
    events: Vec<Event>,
    leaf: Option<SymState>,
}

/// Explores every path of `side`'s program depth-first. Node ids in the
/// result do not depend on the number of workers.
pub fn run_all(pool: &ExprPool, h: &Harness, side: Side, config: &ExecConfig) -> Exploration {
    let program = h.program(side);
    let ctx = Ctx {
        pool,
        harness: h,
        side,
        program,
        widths: program.registers.iter().map(|(n, w)| (n.as_str(), *w)).collect(),
        solver: &config.solver,
    };
    let mut root = init_state(pool, h, side);
    let mut nodes = vec![RawNode {
        parent: None,
        children: Vec::new(),
        delta: root.constraints.iter().collect(),
        events: Vec::new(),
        leaf: None,
    }];
    let mut stack: Vec<(usize, SymState)> = Vec::new();
    match config.solver.is_sat(pool, &root.constraints) {
        SolveResult::Sat(m) => {
            root.model = m;
            stack.push((0, root));
        }
        SolveResult::Unsat(_) => {
            root.status = Status::AssumeUnsat;
            nodes[0].leaf = Some(root);
        }
        SolveResult::Unknown(_) => {
            root.status = Status::SolverUnknown;
            nodes[0].leaf = Some(root);
        }
    }

    let pool_threads = (config.workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("worker pool")
    });
    while !stack.is_empty() {
        let take = if pool_threads.is_some() { config.workers * 4 } else { 1 };
        let batch: Vec<(usize, SymState)> = stack.split_off(stack.len().saturating_sub(take));
        let results: Vec<(usize, NodeResult)> = match &pool_threads {
            Some(tp) => tp.install(|| batch.into_par_iter().map(|(id, st)| (id, ctx.run_node(st))).collect()),
            None => batch.into_iter().map(|(id, st)| (id, ctx.run_node(st))).collect(),
        };
        // later batch entries sit higher on the stack; keep that order
        for (id, result) in results.into_iter().rev() {
            nodes[id].events = result.events;
            if let Some(st) = result.leaf {
                nodes[id].leaf = Some(st);
                continue;
            }
            let mut fresh = Vec::new();
            for (delta, child) in result.children {
                let cid = nodes.len();
                nodes[id].children.push(cid);
                let (leaf, running) = match child {
                    Child::Leaf(st) => (Some(st), None),
                    Child::Continue(st) => (None, Some(st)),
                };
                nodes.push(RawNode {
                    parent: Some(id),
                    children: Vec::new(),
                    delta,
                    events: Vec::new(),
                    leaf,
                });
                if let Some(st) = running {
                    fresh.push((cid, st));
                }
            }
            stack.extend(fresh.into_iter().rev());
        }
    }

    // renumber in preorder
    let mut order = Vec::with_capacity(nodes.len());
    let mut walk = vec![0usize];
    while let Some(n) = walk.pop() {
        order.push(n);
        walk.extend(nodes[n].children.iter().rev());
    }
    let mut new_id = vec![0usize; nodes.len()];
    for (i, &old) in order.iter().enumerate() {
        new_id[old] = i;
    }
    let mut tree_nodes = Vec::with_capacity(nodes.len());
    let mut terminals = Vec::new();
    let mut constraints_at: Vec<ClauseSet> = vec![ClauseSet::new(); nodes.len()];
    for (i, &old) in order.iter().enumerate() {
        let raw = &mut nodes[old];
        let parent = raw.parent.map(|p| new_id[p]);
        let mut set = parent.map(|p| constraints_at[p].clone()).unwrap_or_default();
        for &c in &raw.delta {
            set.insert(c);
        }
        let status = raw.leaf.as_ref().map(|s| s.status);
        if let Some(st) = raw.leaf.take() {
            debug_assert_eq!(set, st.constraints);
            terminals.push(Terminal {
                node: i,
                status: st.status,
                constraints: set.clone(),
                regs: st.regs,
                mem: st.mem,
                io: st.io,
                trace: st.trace,
                model: st.status.is_pairable().then_some(st.model),
            });
        }
        constraints_at[i] = set;
        tree_nodes.push(TreeNode {
            id: i,
            parent,
            children: raw.children.iter().map(|&c| new_id[c]).collect(),
            delta: std::mem::take(&mut raw.delta),
            events: std::mem::take(&mut raw.events),
            status,
        });
    }
    Exploration {
        side,
        tree: ExecTree { side, nodes: tree_nodes },
        terminals,
    }
}

/// Concrete machine input for `side` from values of the harness symbols.
pub fn concrete_input(h: &Harness, side: Side, values: &Assignment) -> ConcreteInput {
    let mut input = ConcreteInput::default();
    for (name, placement) in h.placements(side) {
        let v = values.get(name).copied().unwrap_or(0);
        match placement {
            Placement::Mem { addr, len } => {
                for k in 0..*len {
                    let byte = if k < 8 { (v >> (8 * k)) as u8 } else { 0 };
                    input.mem.insert(addr + k, byte);
                }
            }
            Placement::Reg(r) => {
                input.regs.insert(r.clone(), v);
            }
        }
    }
    input
}

/// Concrete value of an annotation location in an interpreter outcome.
pub fn concrete_location(out: &ConcreteOutcome, loc: &Location, bytes: u64) -> u64 {
    match loc {
        Location::Mem { mem, .. } => out.read_mem(*mem, bytes),
        Location::Reg { reg } => out.final_registers[reg] & crate::expr::mask((bytes * 8) as u32),
    }
}

/// Runs the interpreter on `side` for the given symbol values and applies the
/// harness assertions to a finished run.
pub fn replay(h: &Harness, side: Side, values: &Assignment) -> ConcreteOutcome {
    let mut out = interpret(h.program(side), &concrete_input(h, side, values), h.loop_bound);
    if out.status == ConcreteStatus::Finished && !h.spec.assertions.is_empty() {
        let scratch = ExprPool::new();
        let mut env = Assignment::new();
        let resolve = |n: &str| {
            if let Some(&(_, w)) = h.symbols.iter().find(|(s, _)| s == n) {
                return scratch.var(n, w).ok();
            }
            let (_, w) = annotation_ref(&h.annotations, n)?;
            scratch.var(n, w).ok()
        };
        for text in &h.spec.assertions {
            for name in crate::constraint::referenced_names(text).unwrap_or_default() {
                let value = if let Some(v) = values.get(&name).filter(|_| h.symbol_exprs.contains_key(&name)) {
                    *v
                } else if let Some(((idx, byte), _)) = annotation_ref(&h.annotations, &name) {
                    let a = &h.annotations[idx];
                    let full = concrete_location(&out, a.location(side), a.bytes);
                    match byte {
                        None => full,
                        Some(k) => (full >> (8 * k)) & 0xff,
                    }
                } else {
                    0
                };
                env.insert(name, value);
            }
            let c = parse_constraint(&scratch, text, resolve).expect("assertions are checked when the harness is compiled");
            if scratch.eval_total(c, &env) != 1 {
                out.status = ConcreteStatus::AssertFailed;
                break;
            }
        }
    }
    out
}

/// Value an interpreter run must report for `a` to agree with the symbolic
/// terminal under `values`.
pub fn concrete_annotation(out: &ConcreteOutcome, a: &Annotation, side: Side) -> u64 {
    concrete_location(out, a.location(side), a.bytes)
}
