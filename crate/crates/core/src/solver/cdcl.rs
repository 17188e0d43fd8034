// SPDX-License-Identifier: Apache-2.0

//! A conflict-driven clause-learning SAT solver with assumption support.
//!
//! Two-watched-literal propagation, first-UIP learning, VSIDS-style activity
//! ordering with phase saving, and Luby restarts. Solving under assumptions
//! reports the subset of assumptions responsible for unsatisfiability, which
//! is what unsat cores are built from.

use std::time::Instant;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, negated: bool) -> Self {
        Lit(var << 1 | negated as u32)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Value {
    True,
    False,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    Sat,
    /// The assumptions that together with the clauses are contradictory.
    Unsat(Vec<Lit>),
    Unknown,
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_conflicts: u64,
    pub deadline: Option<Instant>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_conflicts: u64::MAX,
            deadline: None,
        }
    }
}

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    activity: f64,
}

type ClauseRef = usize;

/// Binary max-heap of variables keyed by activity.
#[derive(Default)]
struct VarOrder {
    heap: Vec<u32>,
    position: Vec<Option<usize>>,
}

impl VarOrder {
    fn grow(&mut self) {
        self.position.push(None);
    }

    fn contains(&self, v: u32) -> bool {
        self.position[v as usize].is_some()
    }

    fn insert(&mut self, v: u32, activity: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.position[v as usize] = Some(i);
        self.sift_up(i, activity);
    }

    fn bumped(&mut self, v: u32, activity: &[f64]) {
        if let Some(i) = self.position[v as usize] {
            self.sift_up(i, activity);
        }
    }

    fn pop(&mut self, activity: &[f64]) -> Option<u32> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap.swap_remove(0);
        self.position[top as usize] = None;
        if !self.heap.is_empty() {
            self.position[self.heap[0] as usize] = Some(0);
            self.sift_down(0, activity);
        }
        Some(top)
    }

    fn less(a: u32, b: u32, activity: &[f64]) -> bool {
        let (x, y) = (activity[a as usize], activity[b as usize]);
        x > y || (x == y && a < b)
    }

    fn sift_up(&mut self, mut i: usize, activity: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::less(v, self.heap[parent], activity) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.position[self.heap[i] as usize] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.position[v as usize] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, activity: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && Self::less(self.heap[right], self.heap[left], activity) {
                right
            } else {
                left
            };
            if !Self::less(self.heap[child], v, activity) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.position[self.heap[i] as usize] = Some(i);
            i = child;
        }
        self.heap[i] = v;
        self.position[v as usize] = Some(i);
    }
}

pub struct Cdcl {
    clauses: Vec<Clause>,
    watches: Vec<Vec<ClauseRef>>,
    assigns: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<Option<ClauseRef>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    seen: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    order: VarOrder,
    var_inc: f64,
    clause_inc: f64,
    ok: bool,
    model: Vec<bool>,
    pub conflicts: u64,
    learnt_count: usize,
}

impl Default for Cdcl {
    fn default() -> Self {
        Self::new()
    }
}

impl Cdcl {
    pub fn new() -> Self {
        Cdcl {
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            seen: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            order: VarOrder::default(),
            var_inc: 1.0,
            clause_inc: 1.0,
            ok: true,
            model: Vec::new(),
            conflicts: 0,
            learnt_count: 0,
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.assigns.len() as u32
    }

    pub fn new_var(&mut self) -> u32 {
        let v = self.assigns.len() as u32;
        self.assigns.push(Value::Unassigned);
        self.level.push(0);
        self.reason.push(None);
        self.polarity.push(true);
        self.activity.push(0.0);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.order.grow();
        self.order.insert(v, &self.activity);
        v
    }

    /// Nudges the initial branching order and phase; used for seeded
    /// tie-breaking between otherwise equivalent searches.
    pub fn perturb(&mut self, var: u32, activity: f64, prefer_true: bool) {
        let v = var as usize;
        self.activity[v] += activity;
        self.polarity[v] = !prefer_true;
        self.order.bumped(var, &self.activity);
    }

    fn value(&self, lit: Lit) -> Value {
        lit_value(&self.assigns, lit)
    }

    /// Value of `var` in the last satisfying assignment.
    pub fn model_value(&self, var: u32) -> bool {
        self.model.get(var as usize).copied().unwrap_or(false)
    }

    pub fn model_lit(&self, lit: Lit) -> bool {
        self.model_value(lit.var()) != lit.is_negated()
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause at decision level 0. Returns false once the clause set
    /// is known to be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut clause: Vec<Lit> = lits.to_vec();
        clause.sort();
        clause.dedup();
        for w in clause.windows(2) {
            if w[0] == !w[1] {
                return true;
            }
        }
        let mut kept = Vec::with_capacity(clause.len());
        for &l in &clause {
            match self.value(l) {
                Value::True => return true,
                Value::False => {}
                Value::Unassigned => kept.push(l),
            }
        }
        match kept.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(kept[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(kept, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> ClauseRef {
        let cref = self.clauses.len();
        self.watches[(!lits[0]).index()].push(cref);
        self.watches[(!lits[1]).index()].push(cref);
        self.clauses.push(Clause {
            lits,
            learnt,
            activity: 0.0,
        });
        if learnt {
            self.learnt_count += 1;
        }
        cref
    }

    fn enqueue(&mut self, lit: Lit, reason: Option<ClauseRef>) {
        let v = lit.var() as usize;
        debug_assert_eq!(self.assigns[v], Value::Unassigned);
        self.assigns[v] = if lit.is_negated() {
            Value::False
        } else {
            Value::True
        };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    /// Unit propagation; returns a conflicting clause if one is found.
    fn propagate(&mut self) -> Option<ClauseRef> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            // clauses in this list watch ¬p, which just became false
            let mut watchers = std::mem::take(&mut self.watches[p.index()]);
            let false_lit = !p;
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < watchers.len() {
                let cref = watchers[i];
                i += 1;
                let clause = &mut self.clauses[cref].lits;
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                if lit_value(&self.assigns, first) == Value::True {
                    watchers[j] = cref;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    if lit_value(&self.assigns, clause[k]) != Value::False {
                        clause.swap(1, k);
                        self.watches[(!clause[1]).index()].push(cref);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                watchers[j] = cref;
                j += 1;
                if lit_value(&self.assigns, first) == Value::False {
                    conflict = Some(cref);
                    while i < watchers.len() {
                        watchers[j] = watchers[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Some(cref));
                }
            }
            watchers.truncate(j);
            let slot = &mut self.watches[p.index()];
            watchers.append(slot);
            *slot = watchers;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let start = self.trail_lim[level as usize];
        for idx in (start..self.trail.len()).rev() {
            let lit = self.trail[idx];
            let v = lit.var() as usize;
            self.assigns[v] = Value::Unassigned;
            self.reason[v] = None;
            self.polarity[v] = lit.is_negated();
            self.order.insert(lit.var(), &self.activity);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(level as usize);
        self.qhead = self.trail.len();
    }

    fn bump_var(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.bumped(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: ClauseRef) {
        let c = &mut self.clauses[cref];
        if !c.learnt {
            return;
        }
        c.activity += self.clause_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.clause_inc *= 1e-20;
        }
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first) and the backjump level.
    fn analyze(&mut self, mut conflict: ClauseRef) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut path_count = 0;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        loop {
            self.bump_clause(conflict);
            let lits = self.clauses[conflict].lits.clone();
            let start = if p.is_some() { 1 } else { 0 };
            for &q in &lits[start..] {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= self.decision_level() {
                        path_count += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[self.trail[index].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[index];
            p = Some(lit);
            self.seen[lit.var() as usize] = false;
            path_count -= 1;
            if path_count == 0 {
                break;
            }
            conflict = self.reason[lit.var() as usize].expect("implied literal has a reason");
        }
        learnt[0] = !p.unwrap();

        // drop literals implied by others already in the clause
        let keep: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(i, &l)| i == 0 || !self.redundant(l))
            .collect();
        for &l in &learnt {
            self.seen[l.var() as usize] = false;
        }
        let mut learnt: Vec<Lit> = learnt
            .into_iter()
            .zip(keep)
            .filter_map(|(l, k)| k.then_some(l))
            .collect();

        let backjump = if learnt.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var() as usize] > self.level[learnt[max_i].var() as usize] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            self.level[learnt[1].var() as usize]
        };
        (learnt, backjump)
    }

    /// Local minimization: a literal whose reason clause is entirely made of
    /// literals already in the learnt clause is redundant.
    fn redundant(&self, lit: Lit) -> bool {
        match self.reason[lit.var() as usize] {
            None => false,
            Some(cref) => self.clauses[cref].lits[1..].iter().all(|q| {
                let v = q.var() as usize;
                self.seen[v] || self.level[v] == 0
            }),
        }
    }

    /// Collects the assumptions that imply `¬p`, where `p` is a failed
    /// assumption.
    fn analyze_final(&mut self, p: Lit) -> Vec<Lit> {
        let mut out = vec![p];
        if self.decision_level() == 0 {
            return out;
        }
        self.seen[p.var() as usize] = true;
        let start = self.trail_lim[0];
        for idx in (start..self.trail.len()).rev() {
            let lit = self.trail[idx];
            let v = lit.var() as usize;
            if !self.seen[v] {
                continue;
            }
            match self.reason[v] {
                None => {
                    if lit != p {
                        out.push(lit);
                    }
                }
                Some(cref) => {
                    for q in self.clauses[cref].lits[1..].to_vec() {
                        if self.level[q.var() as usize] > 0 {
                            self.seen[q.var() as usize] = true;
                        }
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[p.var() as usize] = false;
        out
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.order.pop(&self.activity) {
            if self.assigns[v as usize] == Value::Unassigned {
                return Some(Lit::new(v, self.polarity[v as usize]));
            }
        }
        None
    }

    fn reduce_learnts(&mut self) {
        let mut candidates: Vec<ClauseRef> = (0..self.clauses.len())
            .filter(|&c| self.clauses[c].learnt && self.clauses[c].lits.len() > 2)
            .filter(|&c| !self.locked(c))
            .collect();
        candidates.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .partial_cmp(&self.clauses[b].activity)
                .unwrap()
        });
        let remove: std::collections::HashSet<ClauseRef> =
            candidates[..candidates.len() / 2].iter().copied().collect();
        if remove.is_empty() {
            return;
        }
        for list in &mut self.watches {
            list.retain(|c| !remove.contains(c));
        }
        for &c in &remove {
            // leave a tombstone so clause references stay valid
            self.clauses[c].lits.clear();
            self.clauses[c].learnt = false;
        }
        self.learnt_count -= remove.len();
    }

    fn locked(&self, cref: ClauseRef) -> bool {
        let first = self.clauses[cref].lits[0];
        self.value(first) == Value::True && self.reason[first.var() as usize] == Some(cref)
    }

    /// Decides the clause set under `assumptions`.
    pub fn solve(&mut self, assumptions: &[Lit], limits: Limits) -> SatOutcome {
        self.model.clear();
        if !self.ok {
            return SatOutcome::Unsat(Vec::new());
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SatOutcome::Unsat(Vec::new());
        }
        let start_conflicts = self.conflicts;
        let mut restart = 0u32;
        let mut max_learnts = (self.clauses.len() / 3).max(2000) as f64;
        loop {
            let budget = 100 * luby(restart);
            restart += 1;
            match self.search(assumptions, budget, start_conflicts, limits, &mut max_learnts) {
                Some(outcome) => {
                    self.cancel_until(0);
                    return outcome;
                }
                None => self.cancel_until(0),
            }
        }
    }

    fn search(
        &mut self,
        assumptions: &[Lit],
        budget: u64,
        start_conflicts: u64,
        limits: Limits,
        max_learnts: &mut f64,
    ) -> Option<SatOutcome> {
        let mut local_conflicts = 0u64;
        loop {
            if let Some(conflict) = self.propagate() {
                self.conflicts += 1;
                local_conflicts += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(SatOutcome::Unsat(Vec::new()));
                }
                let (learnt, backjump) = self.analyze(conflict);
                self.cancel_until(backjump);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let cref = self.attach(learnt, true);
                    self.bump_clause(cref);
                    self.enqueue(asserting, Some(cref));
                }
                self.var_inc /= 0.95;
                self.clause_inc /= 0.999;

                if self.conflicts - start_conflicts >= limits.max_conflicts {
                    return Some(SatOutcome::Unknown);
                }
                if self.conflicts.is_multiple_of(256) {
                    if let Some(deadline) = limits.deadline {
                        if Instant::now() >= deadline {
                            return Some(SatOutcome::Unknown);
                        }
                    }
                }
            } else {
                if local_conflicts >= budget {
                    return None;
                }
                if self.learnt_count as f64 >= *max_learnts {
                    self.reduce_learnts();
                    *max_learnts *= 1.1;
                }
                let mut next = None;
                while (self.decision_level() as usize) < assumptions.len() {
                    let a = assumptions[self.decision_level() as usize];
                    match self.value(a) {
                        Value::True => self.trail_lim.push(self.trail.len()),
                        Value::False => return Some(SatOutcome::Unsat(self.analyze_final(a))),
                        Value::Unassigned => {
                            next = Some(a);
                            break;
                        }
                    }
                }
                let decision = match next {
                    Some(a) => a,
                    None => match self.pick_branch() {
                        Some(l) => l,
                        None => {
                            self.model = self.assigns.iter().map(|&v| v == Value::True).collect();
                            return Some(SatOutcome::Sat);
                        }
                    },
                };
                self.trail_lim.push(self.trail.len());
                self.enqueue(decision, None);
            }
        }
    }
}

fn lit_value(assigns: &[Value], lit: Lit) -> Value {
    match assigns[lit.var() as usize] {
        Value::Unassigned => Value::Unassigned,
        Value::True if lit.is_negated() => Value::False,
        Value::False if lit.is_negated() => Value::True,
        v => v,
    }
}

fn luby(mut i: u32) -> u64 {
    // 1 1 2 1 1 2 4 1 1 2 1 1 2 4 8 ...
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i as u64 + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i as u64 {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size as u32;
    }
    1u64 << seq
}
