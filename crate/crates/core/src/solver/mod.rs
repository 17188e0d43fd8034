// SPDX-License-Identifier: Apache-2.0

//! Satisfiability of conjunctions of width-1 expressions.
//!
//! The embedded backend bit-blasts into a CDCL solver and uses each clause's
//! own literal as its selector assumption, so failed assumptions translate
//! directly into an unsat core. The external backend speaks SMT-LIB 2 to a
//! child process.

pub mod blast;
pub mod cdcl;
pub mod smtlib;

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{Assignment, ExprId, ExprPool};
use blast::Blaster;
use cdcl::{Limits, Lit, SatOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Embedded,
    /// Command line of an SMT-LIB 2 solver reading commands on stdin.
    External(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub backend: Backend,
    pub minimize_cores: bool,
    pub max_conflicts: u64,
    pub time_budget: Duration,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: Backend::Embedded,
            minimize_cores: true,
            max_conflicts: 1_000_000,
            time_budget: Duration::from_secs(30),
            seed: 0,
        }
    }
}

/// A set of width-1 expressions, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClauseSet(Vec<ExprId>);

impl ClauseSet {
    pub fn new() -> Self {
        ClauseSet(Vec::new())
    }

    pub fn from_ids(ids: impl IntoIterator<Item = ExprId>) -> Self {
        let mut v: Vec<ExprId> = ids.into_iter().collect();
        v.sort();
        v.dedup();
        ClauseSet(v)
    }

    pub fn insert(&mut self, e: ExprId) -> bool {
        match self.0.binary_search(&e) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, e);
                true
            }
        }
    }

    pub fn contains(&self, e: ExprId) -> bool {
        self.0.binary_search(&e).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ExprId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[ExprId] {
        &self.0
    }

    pub fn union(&self, other: &ClauseSet) -> ClauseSet {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        ClauseSet(out)
    }

    pub fn is_subset_of(&self, other: &ClauseSet) -> bool {
        if self.0.len() > other.0.len() {
            return false;
        }
        let mut j = 0;
        for &e in &self.0 {
            while j < other.0.len() && other.0[j] < e {
                j += 1;
            }
            if j == other.0.len() || other.0[j] != e {
                return false;
            }
            j += 1;
        }
        true
    }

    pub fn without(&self, e: ExprId) -> ClauseSet {
        ClauseSet(self.0.iter().copied().filter(|&x| x != e).collect())
    }
}

impl FromIterator<ExprId> for ClauseSet {
    fn from_iter<T: IntoIterator<Item = ExprId>>(iter: T) -> Self {
        ClauseSet::from_ids(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Sat(Assignment),
    Unsat(ClauseSet),
    Unknown(String),
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolveResult::Unsat(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equality {
    ProvedEqual,
    Differs(Assignment),
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub models: Vec<Assignment>,
    /// Set when a resource limit stopped enumeration early.
    pub partial: bool,
}

/// Outcome of one raw check, before core minimization.
enum Raw {
    Sat(Assignment),
    Unsat(ClauseSet),
    Unknown(String),
}

/// Embedded solving context for one clause set. Every clause is blasted once;
/// later checks over subsets only change the assumptions.
struct Embedded<'p> {
    pool: &'p ExprPool,
    blaster: Blaster,
    selector: HashMap<ExprId, Lit>,
    limits: Limits,
}

impl<'p> Embedded<'p> {
    fn new(pool: &'p ExprPool, clauses: &ClauseSet, config: &SolverConfig) -> Self {
        let mut blaster = Blaster::new();
        let mut selector = HashMap::new();
        {
            let view = pool.view();
            for e in clauses.iter() {
                let lit = blaster.blast(&view, e)[0];
                selector.insert(e, lit);
            }
        }
        if config.seed != 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for v in 0..blaster.sat.num_vars() {
                let bump = rng.gen::<f64>() * 1e-3;
                let phase = rng.gen::<bool>();
                blaster.sat.perturb(v, bump, phase);
            }
        }
        Embedded {
            pool,
            blaster,
            selector,
            limits: Limits {
                max_conflicts: config.max_conflicts,
                deadline: None,
            },
        }
    }

    fn check(&mut self, subset: &ClauseSet, deadline: Instant) -> Raw {
        let assumptions: Vec<Lit> = subset.iter().map(|e| self.selector[&e]).collect();
        let limits = Limits {
            deadline: Some(deadline),
            ..self.limits
        };
        match self.blaster.sat.solve(&assumptions, limits) {
            SatOutcome::Sat => {
                let mut model = Assignment::new();
                for (name, bits) in self.blaster.vars() {
                    model.insert(name.clone(), self.blaster.model_word(bits));
                }
                // variables that never reached the blaster are unconstrained
                for (name, _) in self.pool.free_vars_all(subset.iter()) {
                    model.entry(name).or_insert(0);
                }
                Raw::Sat(model)
            }
            SatOutcome::Unsat(failed) => Raw::Unsat(
                failed
                    .iter()
                    .filter_map(|l| subset.iter().find(|e| self.selector[e] == *l))
                    .collect(),
            ),
            SatOutcome::Unknown => Raw::Unknown("resource limit reached".into()),
        }
    }
}

/// A solver front end. Holds configuration only; each query builds its own
/// context, so one value can be shared across threads.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub config: SolverConfig,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Solver { config }
    }

    /// Decides `clauses`. Unsat results carry a core, minimized by deletion
    /// when enabled.
    pub fn is_sat(&self, pool: &ExprPool, clauses: &ClauseSet) -> SolveResult {
        self.is_sat_counted(pool, clauses).0
    }

    /// Like [`Solver::is_sat`], also returning the number of extra checks
    /// spent on core minimization.
    pub fn is_sat_counted(&self, pool: &ExprPool, clauses: &ClauseSet) -> (SolveResult, u64) {
        let deadline = Instant::now() + self.config.time_budget;
        for e in clauses.iter() {
            if pool.const_value(e) == Some(0) {
                let core = ClauseSet::from_ids([e]);
                return (SolveResult::Unsat(core), 0);
            }
        }
        match &self.config.backend {
            Backend::Embedded => {
                let mut ctx = Embedded::new(pool, clauses, &self.config);
                let first = ctx.check(clauses, deadline);
                self.finish(first, |subset| ctx.check(subset, deadline))
            }
            Backend::External(cmd) => {
                let run = |subset: &ClauseSet| -> Raw {
                    match smtlib::check(cmd, pool, subset, self.config.time_budget) {
                        Ok(smtlib::Answer::Sat(m)) => Raw::Sat(m),
                        Ok(smtlib::Answer::Unsat(core)) => Raw::Unsat(core),
                        Ok(smtlib::Answer::Unknown(why)) => Raw::Unknown(why),
                        Err(e) => Raw::Unknown(format!("external solver: {e}")),
                    }
                };
                let first = run(clauses);
                self.finish(first, run)
            }
        }
    }

    fn finish(&self, first: Raw, mut check: impl FnMut(&ClauseSet) -> Raw) -> (SolveResult, u64) {
        match first {
            Raw::Sat(m) => (SolveResult::Sat(m), 0),
            Raw::Unknown(why) => (SolveResult::Unknown(why), 0),
            Raw::Unsat(core) => {
                if !self.config.minimize_cores {
                    return (SolveResult::Unsat(core), 0);
                }
                let mut spent = 0;
                let mut core = core;
                let mut necessary = BTreeSet::new();
                loop {
                    let Some(e) = core.iter().find(|e| !necessary.contains(e)) else {
                        break;
                    };
                    let candidate = core.without(e);
                    spent += 1;
                    match check(&candidate) {
                        Raw::Unsat(smaller) if smaller.is_subset_of(&candidate) => core = smaller,
                        Raw::Unsat(_) => core = candidate,
                        _ => {
                            necessary.insert(e);
                        }
                    }
                }
                (SolveResult::Unsat(core), spent)
            }
        }
    }

    /// Up to `k` models pairwise distinct on `vars`.
    pub fn enumerate_models(
        &self,
        pool: &ExprPool,
        clauses: &ClauseSet,
        vars: &[(String, u32)],
        k: usize,
    ) -> Enumeration {
        let mut models = Vec::new();
        if k == 0 {
            return Enumeration {
                models,
                partial: false,
            };
        }
        match &self.config.backend {
            Backend::Embedded => {
                let deadline = Instant::now() + self.config.time_budget;
                let mut ctx = Embedded::new(pool, clauses, &self.config);
                let ids: Vec<ExprId> = vars
                    .iter()
                    .map(|(name, width)| pool.var(name, *width).expect("projection variable width"))
                    .collect();
                let projection: Vec<Vec<Lit>> = {
                    let view = pool.view();
                    ids.iter().map(|&v| ctx.blaster.blast(&view, v)).collect()
                };
                let assumptions: Vec<Lit> = clauses.iter().map(|e| ctx.selector[&e]).collect();
                while models.len() < k {
                    let limits = Limits {
                        deadline: Some(deadline),
                        ..ctx.limits
                    };
                    match ctx.blaster.sat.solve(&assumptions, limits) {
                        SatOutcome::Sat => {
                            let mut model = Assignment::new();
                            for (name, bits) in ctx.blaster.vars() {
                                model.insert(name.clone(), ctx.blaster.model_word(bits));
                            }
                            for (name, _) in pool.free_vars_all(clauses.iter()) {
                                model.entry(name).or_insert(0);
                            }
                            let block: Vec<Lit> = projection
                                .iter()
                                .flatten()
                                .map(|&l| if ctx.blaster.sat.model_lit(l) { !l } else { l })
                                .collect();
                            models.push(model);
                            if block.is_empty() || !ctx.blaster.sat.add_clause(&block) {
                                break;
                            }
                        }
                        SatOutcome::Unsat(_) => break,
                        SatOutcome::Unknown => {
                            return Enumeration {
                                models,
                                partial: true,
                            }
                        }
                    }
                }
                Enumeration {
                    models,
                    partial: false,
                }
            }
            Backend::External(_) => {
                let mut current = clauses.clone();
                while models.len() < k {
                    match self.is_sat(pool, &current) {
                        SolveResult::Sat(mut m) => {
                            for (name, _) in pool.free_vars_all(clauses.iter()) {
                                m.entry(name).or_insert(0);
                            }
                            let differs: Vec<ExprId> = vars
                                .iter()
                                .map(|(name, width)| {
                                    let v = pool.var(name, *width).expect("projection variable width");
                                    let c = pool.constant(*width, m.get(name).copied().unwrap_or(0));
                                    pool.mk_ne(v, c)
                                })
                                .collect();
                            models.push(m);
                            if differs.is_empty() {
                                break;
                            }
                            current.insert(pool.mk_or_all(differs));
                        }
                        SolveResult::Unsat(_) => break,
                        SolveResult::Unknown(_) => {
                            return Enumeration {
                                models,
                                partial: true,
                            }
                        }
                    }
                }
                Enumeration {
                    models,
                    partial: false,
                }
            }
        }
    }

    /// Whether `a` and `b` agree on every model of `base`.
    pub fn check_equal(&self, pool: &ExprPool, base: &ClauseSet, a: ExprId, b: ExprId) -> Equality {
        let ne = pool.mk_ne(a, b);
        if pool.const_value(ne) == Some(0) {
            return Equality::ProvedEqual;
        }
        let mut query = base.clone();
        query.insert(ne);
        let quick = Solver {
            config: SolverConfig {
                minimize_cores: false,
                ..self.config.clone()
            },
        };
        match quick.is_sat(pool, &query) {
            SolveResult::Sat(m) => Equality::Differs(m),
            SolveResult::Unsat(_) => Equality::ProvedEqual,
            SolveResult::Unknown(why) => Equality::Unknown(why),
        }
    }
}
