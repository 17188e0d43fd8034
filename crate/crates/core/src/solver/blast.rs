// SPDX-License-Identifier: Apache-2.0

//! Tseitin bit-blasting of expressions into the CDCL clause database.
//!
//! Words are vectors of literals, least significant bit first. Gates fold
//! constants and are structurally hashed, so constant-heavy expressions (array
//! indices, fixed divisors) shrink before they reach the SAT search.

use std::collections::{BTreeMap, HashMap};

use super::cdcl::{Cdcl, Lit};
use crate::expr::{BinOp, ExprId, Node, PoolView};

#[derive(Copy, Clone, PartialEq, Eq, Hash)]
enum Gate {
    And(Lit, Lit),
    Xor(Lit, Lit),
    Mux(Lit, Lit, Lit),
}

pub struct Blaster {
    pub sat: Cdcl,
    truth: Lit,
    words: HashMap<ExprId, Vec<Lit>>,
    gates: HashMap<Gate, Lit>,
    /// Variable name -> (width, bits).
    vars: BTreeMap<String, Vec<Lit>>,
}

impl Default for Blaster {
    fn default() -> Self {
        Self::new()
    }
}

impl Blaster {
    pub fn new() -> Self {
        let mut sat = Cdcl::new();
        let t = sat.new_var();
        let truth = Lit::new(t, false);
        sat.add_clause(&[truth]);
        Blaster {
            sat,
            truth,
            words: HashMap::new(),
            gates: HashMap::new(),
            vars: BTreeMap::new(),
        }
    }

    pub fn vars(&self) -> &BTreeMap<String, Vec<Lit>> {
        &self.vars
    }

    fn constant(&self, b: bool) -> Lit {
        if b {
            self.truth
        } else {
            !self.truth
        }
    }

    fn is_const(&self, l: Lit) -> Option<bool> {
        if l == self.truth {
            Some(true)
        } else if l == !self.truth {
            Some(false)
        } else {
            None
        }
    }

    fn fresh(&mut self) -> Lit {
        Lit::new(self.sat.new_var(), false)
    }

    fn and(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(false), _) | (_, Some(false)) => return self.constant(false),
            (Some(true), _) => return b,
            (_, Some(true)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if a == !b {
            return self.constant(false);
        }
        let key = if a < b { Gate::And(a, b) } else { Gate::And(b, a) };
        if let Some(&g) = self.gates.get(&key) {
            return g;
        }
        let g = self.fresh();
        self.sat.add_clause(&[!g, a]);
        self.sat.add_clause(&[!g, b]);
        self.sat.add_clause(&[g, !a, !b]);
        self.gates.insert(key, g);
        g
    }

    fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(x), _) => return if x { !b } else { b },
            (_, Some(y)) => return if y { !a } else { a },
            _ => {}
        }
        if a == b {
            return self.constant(false);
        }
        if a == !b {
            return self.constant(true);
        }
        // normalize polarity so xor(¬a, b) shares the gate of xor(a, b)
        let flip = a.is_negated() ^ b.is_negated();
        let (a, b) = (
            Lit::new(a.var(), false),
            Lit::new(b.var(), false),
        );
        let key = if a < b { Gate::Xor(a, b) } else { Gate::Xor(b, a) };
        let g = match self.gates.get(&key) {
            Some(&g) => g,
            None => {
                let g = self.fresh();
                self.sat.add_clause(&[!g, a, b]);
                self.sat.add_clause(&[!g, !a, !b]);
                self.sat.add_clause(&[g, !a, b]);
                self.sat.add_clause(&[g, a, !b]);
                self.gates.insert(key, g);
                g
            }
        };
        if flip {
            !g
        } else {
            g
        }
    }

    /// `c ? t : e`
    fn mux(&mut self, c: Lit, t: Lit, e: Lit) -> Lit {
        match self.is_const(c) {
            Some(true) => return t,
            Some(false) => return e,
            None => {}
        }
        if t == e {
            return t;
        }
        match (self.is_const(t), self.is_const(e)) {
            (Some(true), Some(false)) => return c,
            (Some(false), Some(true)) => return !c,
            (Some(true), _) => return self.or(c, e),
            (Some(false), _) => return self.and(!c, e),
            (_, Some(true)) => return self.or(!c, t),
            (_, Some(false)) => return self.and(c, t),
            _ => {}
        }
        let key = Gate::Mux(c, t, e);
        if let Some(&g) = self.gates.get(&key) {
            return g;
        }
        let g = self.fresh();
        self.sat.add_clause(&[!c, !t, g]);
        self.sat.add_clause(&[!c, t, !g]);
        self.sat.add_clause(&[c, !e, g]);
        self.sat.add_clause(&[c, e, !g]);
        // redundant, helps propagation
        self.sat.add_clause(&[!t, !e, g]);
        self.sat.add_clause(&[t, e, !g]);
        self.gates.insert(key, g);
        g
    }

    fn full_add(&mut self, a: Lit, b: Lit, cin: Lit) -> (Lit, Lit) {
        let axb = self.xor(a, b);
        let sum = self.xor(axb, cin);
        let ab = self.and(a, b);
        let c_axb = self.and(cin, axb);
        let carry = self.or(ab, c_axb);
        (sum, carry)
    }

    fn add_words(&mut self, a: &[Lit], b: &[Lit], cin: Lit) -> (Vec<Lit>, Lit) {
        let mut carry = cin;
        let mut out = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let (s, c) = self.full_add(a[i], b[i], carry);
            out.push(s);
            carry = c;
        }
        (out, carry)
    }

    fn negate_bits(&self, a: &[Lit]) -> Vec<Lit> {
        a.iter().map(|&l| !l).collect()
    }

    fn sub_words(&mut self, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let nb = self.negate_bits(b);
        let t = self.constant(true);
        self.add_words(a, &nb, t).0
    }

    fn mul_words(&mut self, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let w = a.len();
        let f = self.constant(false);
        let mut acc = vec![f; w];
        for (i, &bi) in b.iter().enumerate() {
            if self.is_const(bi) == Some(false) {
                continue;
            }
            let mut partial = vec![f; w];
            for j in 0..w - i {
                partial[i + j] = self.and(a[j], bi);
            }
            acc = self.add_words(&acc, &partial, f).0;
        }
        acc
    }

    /// Unsigned `a < b`.
    fn ult(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let mut lt = self.constant(false);
        for i in 0..a.len() {
            // lt_i = (¬a_i ∧ b_i) ∨ (a_i ≡ b_i ∧ lt_{i-1})
            let strictly = self.and(!a[i], b[i]);
            let same = self.xor(a[i], b[i]);
            let carry = self.and(!same, lt);
            lt = self.or(strictly, carry);
        }
        lt
    }

    fn eq_words(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let mut acc = self.constant(true);
        for i in 0..a.len() {
            let d = self.xor(a[i], b[i]);
            acc = self.and(acc, !d);
        }
        acc
    }

    /// Restoring division; by-zero behaviour falls out as all-ones quotient
    /// and the dividend as remainder.
    fn divrem(&mut self, a: &[Lit], b: &[Lit]) -> (Vec<Lit>, Vec<Lit>) {
        let w = a.len();
        let f = self.constant(false);
        let mut wide_b: Vec<Lit> = b.to_vec();
        wide_b.push(f);
        let mut rem = vec![f; w + 1];
        let mut quot = vec![f; w];
        for i in (0..w).rev() {
            // rem = (rem << 1) | a_i
            let mut shifted = Vec::with_capacity(w + 1);
            shifted.push(a[i]);
            shifted.extend_from_slice(&rem[..w]);
            let below = self.ult(&shifted, &wide_b);
            let ge = !below;
            let diff = self.sub_words(&shifted, &wide_b);
            rem = (0..=w).map(|k| self.mux(ge, diff[k], shifted[k])).collect();
            quot[i] = ge;
        }
        rem.truncate(w);
        (quot, rem)
    }

    fn shift(&mut self, op: BinOp, a: &[Lit], amount: &[Lit]) -> Vec<Lit> {
        let w = a.len();
        let fill = match op {
            BinOp::Ashr => a[w - 1],
            _ => self.constant(false),
        };
        let mut cur = a.to_vec();
        let mut overflow = self.constant(false);
        for (k, &s) in amount.iter().enumerate() {
            let dist = 1u64.checked_shl(k as u32).unwrap_or(u64::MAX);
            if dist >= w as u64 {
                overflow = self.or(overflow, s);
                continue;
            }
            let dist = dist as usize;
            let moved: Vec<Lit> = (0..w)
                .map(|i| match op {
                    BinOp::Shl => {
                        if i >= dist {
                            cur[i - dist]
                        } else {
                            fill
                        }
                    }
                    _ => {
                        if i + dist < w {
                            cur[i + dist]
                        } else {
                            fill
                        }
                    }
                })
                .collect();
            cur = (0..w).map(|i| self.mux(s, moved[i], cur[i])).collect();
        }
        cur.into_iter().map(|l| self.mux(overflow, fill, l)).collect()
    }

    /// Bits of `e`, least significant first.
    pub fn blast(&mut self, view: &PoolView<'_>, e: ExprId) -> Vec<Lit> {
        if let Some(bits) = self.words.get(&e) {
            return bits.clone();
        }
        // iterative post-order so deep DAGs do not exhaust the stack
        let mut stack = vec![(e, false)];
        while let Some((id, expanded)) = stack.pop() {
            if self.words.contains_key(&id) {
                continue;
            }
            let node = view.node(id);
            if !expanded {
                stack.push((id, true));
                for child in node.children() {
                    if !self.words.contains_key(&child) {
                        stack.push((child, false));
                    }
                }
                continue;
            }
            let bits = self.blast_node(view, node);
            self.words.insert(id, bits);
        }
        self.words[&e].clone()
    }

    fn word(&self, id: ExprId) -> Vec<Lit> {
        self.words[&id].clone()
    }

    fn blast_node(&mut self, view: &PoolView<'_>, node: Node) -> Vec<Lit> {
        match node {
            Node::Const { width, value } => (0..width)
                .map(|i| self.constant(value >> i & 1 == 1))
                .collect(),
            Node::Var { sym, width } => {
                let name = view.sym_name(sym).to_string();
                if let Some(bits) = self.vars.get(&name) {
                    return bits.clone();
                }
                let bits: Vec<Lit> = (0..width).map(|_| self.fresh()).collect();
                self.vars.insert(name, bits.clone());
                bits
            }
            Node::Not(a) => self.negate_bits(&self.word(a)),
            Node::Bin(op, a, b) => {
                let (x, y) = (self.word(a), self.word(b));
                match op {
                    BinOp::Add => {
                        let f = self.constant(false);
                        self.add_words(&x, &y, f).0
                    }
                    BinOp::Sub => self.sub_words(&x, &y),
                    BinOp::Mul => self.mul_words(&x, &y),
                    BinOp::Udiv => self.divrem(&x, &y).0,
                    BinOp::Urem => self.divrem(&x, &y).1,
                    BinOp::And => (0..x.len()).map(|i| self.and(x[i], y[i])).collect(),
                    BinOp::Or => (0..x.len()).map(|i| self.or(x[i], y[i])).collect(),
                    BinOp::Xor => (0..x.len()).map(|i| self.xor(x[i], y[i])).collect(),
                    BinOp::Shl | BinOp::Lshr | BinOp::Ashr => self.shift(op, &x, &y),
                    BinOp::Eq => vec![self.eq_words(&x, &y)],
                    BinOp::Ult => vec![self.ult(&x, &y)],
                    BinOp::Slt => {
                        let n = x.len();
                        let mut xs = x.clone();
                        let mut ys = y.clone();
                        xs[n - 1] = !xs[n - 1];
                        ys[n - 1] = !ys[n - 1];
                        vec![self.ult(&xs, &ys)]
                    }
                    BinOp::Concat => {
                        let mut bits = y;
                        bits.extend(x);
                        bits
                    }
                }
            }
            Node::Ite(c, t, e) => {
                let c = self.word(c)[0];
                let (t, e) = (self.word(t), self.word(e));
                (0..t.len()).map(|i| self.mux(c, t[i], e[i])).collect()
            }
            Node::Zext(a, w) => {
                let mut bits = self.word(a);
                let f = self.constant(false);
                bits.resize(w as usize, f);
                bits
            }
            Node::Sext(a, w) => {
                let mut bits = self.word(a);
                let sign = *bits.last().unwrap();
                bits.resize(w as usize, sign);
                bits
            }
            Node::Extract { hi, lo, arg } => self.word(arg)[lo as usize..=hi as usize].to_vec(),
        }
    }

    /// Current value of a blasted word in the last model.
    pub fn model_word(&self, bits: &[Lit]) -> u64 {
        bits.iter()
            .enumerate()
            .fold(0u64, |acc, (i, &l)| acc | (self.sat.model_lit(l) as u64) << i)
    }
}
