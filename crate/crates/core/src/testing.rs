// SPDX-License-Identifier: Apache-2.0

//! Random expression generation and a brute-force satisfiability oracle,
//! shared by the property tests and the acceptance runner.

use rand::Rng;

use crate::expr::{Assignment, BinOp, ExprId, ExprPool, Node};
use crate::solver::ClauseSet;

const ARITH: [BinOp; 11] = [
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
];

const PREDICATES: [BinOp; 3] = [BinOp::Eq, BinOp::Ult, BinOp::Slt];

/// Builds random expressions over a fixed variable list. Nodes are built
/// without simplification.
pub struct ExprGen<'a, R: Rng> {
    pub pool: &'a ExprPool,
    pub rng: &'a mut R,
    pub vars: Vec<(String, u32)>,
}

impl<'a, R: Rng> ExprGen<'a, R> {
    /// Picks `1..=max_vars` variables of width `1..=max_width` whose widths
    /// sum to at most `max_bits`. Names encode the width so distinct draws
    /// never clash in a shared pool.
    pub fn new(pool: &'a ExprPool, rng: &'a mut R, max_vars: usize, max_width: u32, max_bits: u32) -> Self {
        let names = ["x", "y", "z", "u", "v", "w"];
        let vars = loop {
            let n = rng.gen_range(1..=max_vars);
            let widths: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=max_width)).collect();
            if widths.iter().sum::<u32>() <= max_bits {
                break widths
                    .into_iter()
                    .enumerate()
                    .map(|(i, w)| (format!("{}{}", names[i % names.len()], w), w))
                    .collect();
            }
        };
        ExprGen { pool, rng, vars }
    }

    fn build(&self, node: Node) -> ExprId {
        self.pool.build(node).expect("generator respects width rules")
    }

    fn leaf(&mut self, w: u32) -> ExprId {
        if self.rng.gen_ratio(7, 10) {
            let (name, vw) = self.vars[self.rng.gen_range(0..self.vars.len())].clone();
            let v = self.pool.var(&name, vw).expect("fixed variable width");
            if vw == w {
                v
            } else if vw > w {
                let lo = self.rng.gen_range(0..=vw - w);
                self.build(Node::Extract {
                    hi: lo + w - 1,
                    lo,
                    arg: v,
                })
            } else if self.rng.gen() {
                self.build(Node::Zext(v, w))
            } else {
                self.build(Node::Sext(v, w))
            }
        } else {
            let special = [0u64, 1, u64::MAX, 1 << (w - 1)];
            let value = if self.rng.gen_ratio(1, 2) {
                special[self.rng.gen_range(0..special.len())]
            } else {
                self.rng.gen()
            };
            self.pool.constant(w, value)
        }
    }

    /// A random expression of width `w`.
    pub fn expr(&mut self, w: u32, depth: u32) -> ExprId {
        if depth == 0 || self.rng.gen_ratio(1, 5) {
            return self.leaf(w);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..8) {
            0..=2 => {
                let op = ARITH[self.rng.gen_range(0..ARITH.len())];
                let a = self.expr(w, d);
                let b = self.expr(w, d);
                self.build(Node::Bin(op, a, b))
            }
            3 => {
                let a = self.expr(w, d);
                self.build(Node::Not(a))
            }
            4 => {
                let c = self.predicate(d);
                let t = self.expr(w, d);
                let e = self.expr(w, d);
                self.build(Node::Ite(c, t, e))
            }
            5 if w > 1 => {
                let k = self.rng.gen_range(1..w);
                let hi = self.expr(w - k, d);
                let lo = self.expr(k, d);
                self.build(Node::Bin(BinOp::Concat, hi, lo))
            }
            6 => {
                let wide = self.rng.gen_range(w..=(w + 8).min(64));
                let arg = self.expr(wide, d);
                let lo = self.rng.gen_range(0..=wide - w);
                self.build(Node::Extract {
                    hi: lo + w - 1,
                    lo,
                    arg,
                })
            }
            7 if w > 1 => {
                let narrow = self.rng.gen_range(1..w);
                let a = self.expr(narrow, d);
                if self.rng.gen() {
                    self.build(Node::Zext(a, w))
                } else {
                    self.build(Node::Sext(a, w))
                }
            }
            _ if w == 1 => self.predicate(d),
            _ => self.leaf(w),
        }
    }

    /// A random width-1 comparison.
    pub fn predicate(&mut self, depth: u32) -> ExprId {
        let op = PREDICATES[self.rng.gen_range(0..PREDICATES.len())];
        let w = self.rng.gen_range(1..=8);
        let a = self.expr(w, depth);
        let b = self.expr(w, depth);
        self.build(Node::Bin(op, a, b))
    }

    pub fn clause_set(&mut self, n: usize, depth: u32) -> ClauseSet {
        (0..n).map(|_| self.predicate(depth)).collect()
    }
}

/// A flattened expression DAG evaluated by straight-line interpretation.
/// Its semantics are written out independently of [`ExprPool::eval`].
pub struct Compiled {
    ops: Vec<(Node, u32)>,
    var_slots: Vec<(usize, String)>,
    roots: Vec<usize>,
}

fn m(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

fn signed(v: u64, w: u32) -> i64 {
    let shift = 64 - w;
    ((v << shift) as i64) >> shift
}

impl Compiled {
    pub fn new(pool: &ExprPool, roots: &[ExprId]) -> Self {
        let order: Vec<ExprId> = pool.reachable(roots.iter().copied()).into_iter().collect();
        let mut slot = std::collections::HashMap::new();
        let mut ops = Vec::new();
        let mut var_slots = Vec::new();
        for e in order {
            let node = pool.node(e);
            if let Node::Var { sym, .. } = node {
                var_slots.push((ops.len(), pool.sym_name(sym)));
            }
            let r = |c: ExprId| ExprId(slot[&c] as u32);
            let local = match node {
                Node::Not(a) => Node::Not(r(a)),
                Node::Bin(op, a, b) => Node::Bin(op, r(a), r(b)),
                Node::Ite(c, t, f) => Node::Ite(r(c), r(t), r(f)),
                Node::Zext(a, w) => Node::Zext(r(a), w),
                Node::Sext(a, w) => Node::Sext(r(a), w),
                Node::Extract { hi, lo, arg } => Node::Extract { hi, lo, arg: r(arg) },
                leaf => leaf,
            };
            slot.insert(e, ops.len());
            ops.push((local, pool.width(e)));
        }
        let roots = roots.iter().map(|r| slot[r]).collect();
        Compiled {
            ops,
            var_slots,
            roots,
        }
    }

    /// Values of the roots under `env`; missing variables read as 0.
    pub fn eval(&self, env: &Assignment, scratch: &mut Vec<u64>) -> Vec<u64> {
        scratch.clear();
        scratch.resize(self.ops.len(), 0);
        for (s, name) in &self.var_slots {
            scratch[*s] = env.get(name).copied().unwrap_or(0);
        }
        for i in 0..self.ops.len() {
            let (node, w) = self.ops[i];
            let get = |e: &ExprId| scratch[e.index()];
            let v = match node {
                Node::Const { value, .. } => value,
                Node::Var { .. } => scratch[i] & m(w),
                Node::Not(a) => !get(&a) & m(w),
                Node::Ite(c, t, e) => {
                    if get(&c) == 1 {
                        get(&t)
                    } else {
                        get(&e)
                    }
                }
                Node::Zext(a, _) => get(&a),
                Node::Sext(a, _) => {
                    let from = self.ops[a.index()].1;
                    (signed(get(&a), from) as u64) & m(w)
                }
                Node::Extract { lo, arg, .. } => (get(&arg) >> lo) & m(w),
                Node::Bin(op, a, b) => {
                    let (x, y) = (get(&a), get(&b));
                    let ow = self.ops[a.index()].1;
                    match op {
                        BinOp::Add => (x as u128 + y as u128) as u64 & m(w),
                        BinOp::Sub => (x as u128 + (m(w) ^ y) as u128 + 1) as u64 & m(w),
                        BinOp::Mul => ((x as u128 * y as u128) as u64) & m(w),
                        BinOp::Udiv => x.checked_div(y).unwrap_or(m(w)),
                        BinOp::Urem => x.checked_rem(y).unwrap_or(x),
                        BinOp::And => x & y,
                        BinOp::Or => x | y,
                        BinOp::Xor => x ^ y,
                        BinOp::Shl => {
                            if y < w as u64 {
                                (x << y) & m(w)
                            } else {
                                0
                            }
                        }
                        BinOp::Lshr => {
                            if y < w as u64 {
                                x >> y
                            } else {
                                0
                            }
                        }
                        BinOp::Ashr => {
                            let s = signed(x, w);
                            let k = y.min(63) as u32;
                            ((s >> k) as u64) & m(w)
                        }
                        BinOp::Eq => (x == y) as u64,
                        BinOp::Ult => (x < y) as u64,
                        BinOp::Slt => (signed(x, ow) < signed(y, ow)) as u64,
                        BinOp::Concat => {
                            let lw = self.ops[b.index()].1;
                            (x << lw) | y
                        }
                    }
                }
            };
            scratch[i] = v;
        }
        self.roots.iter().map(|&r| scratch[r]).collect()
    }
}

/// Every assignment of `vars`, in lexicographic order.
pub fn all_assignments(vars: &[(String, u32)]) -> impl Iterator<Item = Assignment> + '_ {
    let total: u32 = vars.iter().map(|(_, w)| w).sum();
    assert!(total <= 32, "exhaustive enumeration over {total} bits");
    (0..1u64 << total).map(move |mut code| {
        let mut a = Assignment::new();
        for (name, w) in vars {
            a.insert(name.clone(), code & m(*w));
            code >>= w;
        }
        a
    })
}

/// First assignment of `vars` satisfying every clause, by exhaustive search.
pub fn brute_force_sat(pool: &ExprPool, clauses: &ClauseSet, vars: &[(String, u32)]) -> Option<Assignment> {
    let roots: Vec<ExprId> = clauses.iter().collect();
    let compiled = Compiled::new(pool, &roots);
    let mut scratch = Vec::new();
    all_assignments(vars).find(|a| compiled.eval(a, &mut scratch).iter().all(|&v| v == 1))
}
