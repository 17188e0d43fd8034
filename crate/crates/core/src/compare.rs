// SPDX-License-Identifier: Apache-2.0

//! Pairing terminal states across the two sides and diffing compatible pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::{resolve_annotation, Exploration, Harness, Side, Status, Terminal};
use crate::expr::{Assignment, ExprId, ExprPool};
use crate::solver::{ClauseSet, Equality, SolveResult, Solver};

/// Unsatisfiable clause sets seen so far, smallest first.
#[derive(Debug, Default)]
pub struct CoreCache {
    cores: RwLock<Vec<ClauseSet>>,
    disabled: bool,
}

impl CoreCache {
    pub fn new() -> Self {
        CoreCache::default()
    }

    /// A cache that never stores anything.
    pub fn disabled() -> Self {
        CoreCache {
            cores: RwLock::new(Vec::new()),
            disabled: true,
        }
    }

    pub fn is_enabled(&self) -> bool {
        !self.disabled
    }

    /// Whether some cached core is contained in `joint`.
    pub fn covers(&self, joint: &ClauseSet) -> bool {
        self.cores.read().iter().any(|c| c.len() <= joint.len() && c.is_subset_of(joint))
    }

    /// Adds `core` unless a cached core already subsumes it. Returns whether
    /// it was added.
    pub fn insert(&self, core: ClauseSet) -> bool {
        if self.disabled {
            return false;
        }
        let mut cores = self.cores.write();
        if cores.iter().any(|c| c.is_subset_of(&core)) {
            return false;
        }
        let at = cores.partition_point(|c| (c.len(), c.as_slice()) < (core.len(), core.as_slice()));
        cores.insert(at, core);
        true
    }

    pub fn cores(&self) -> Vec<ClauseSet> {
        self.cores.read().clone()
    }

    pub fn len(&self) -> usize {
        self.cores.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct Counters {
    sat_queries: AtomicU64,
    cache_hits: AtomicU64,
    cores_cached: AtomicU64,
    minimization_checks: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatStats {
    pub sat_queries_issued: u64,
    pub cache_hits: u64,
    pub cores_cached: u64,
    /// Checks spent shrinking cores; not part of `sat_queries_issued`.
    pub minimization_checks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compat {
    Compatible,
    Incompatible,
    Unknown,
}

/// Joint constraint set of a pair, deduplicated by expression id.
pub fn joint(a: &ClauseSet, b: &ClauseSet) -> ClauseSet {
    a.union(b)
}

fn check(pool: &ExprPool, solver: &Solver, a: &ClauseSet, b: &ClauseSet, cache: &CoreCache, n: &Counters) -> Compat {
    let joint = joint(a, b);
    if cache.covers(&joint) {
        n.cache_hits.fetch_add(1, Ordering::Relaxed);
        return Compat::Incompatible;
    }
    n.sat_queries.fetch_add(1, Ordering::Relaxed);
    let (result, extra) = solver.is_sat_counted(pool, &joint);
    n.minimization_checks.fetch_add(extra, Ordering::Relaxed);
    match result {
        SolveResult::Sat(_) => Compat::Compatible,
        SolveResult::Unsat(core) => {
            if cache.insert(core) {
                n.cores_cached.fetch_add(1, Ordering::Relaxed);
            }
            Compat::Incompatible
        }
        SolveResult::Unknown(_) => Compat::Unknown,
    }
}

/// Whether two terminal states can be reached by one shared input. Returns
/// the outcome and whether the answer came from the cache.
pub fn compatible(pool: &ExprPool, solver: &Solver, a: &Terminal, b: &Terminal, cache: &CoreCache) -> (Compat, bool) {
    let n = Counters::default();
    let verdict = check(pool, solver, &a.constraints, &b.constraints, cache, &n);
    (verdict, n.cache_hits.load(Ordering::Relaxed) > 0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatMatrix {
    /// Compatible (left leaf, right leaf) node ids.
    pub pairs: BTreeSet<(usize, usize)>,
    pub unknown: BTreeSet<(usize, usize)>,
    pub stats: CompatStats,
}

/// Checks every pair of pairable leaves.
pub fn pair_all(pool: &ExprPool, solver: &Solver, left: &Exploration, right: &Exploration, cache: &CoreCache, workers: usize) -> CompatMatrix {
    let n = Counters::default();
    let ls: Vec<&Terminal> = left.pairable().collect();
    let rs: Vec<&Terminal> = right.pairable().collect();
    let row = |l: &&Terminal| -> Vec<((usize, usize), Compat)> {
        rs.iter()
            .map(|r| ((l.node, r.node), check(pool, solver, &l.constraints, &r.constraints, cache, &n)))
            .collect()
    };
    let results: Vec<((usize, usize), Compat)> = if workers > 1 {
        let tp = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("worker pool");
        tp.install(|| ls.par_iter().flat_map_iter(row).collect())
    } else {
        ls.iter().flat_map(row).collect()
    };
    let mut m = CompatMatrix::default();
    for (pair, c) in results {
        match c {
            Compat::Compatible => {
                m.pairs.insert(pair);
            }
            Compat::Unknown => {
                m.unknown.insert(pair);
            }
            Compat::Incompatible => {}
        }
    }
    m.stats = CompatStats {
        sat_queries_issued: n.sat_queries.into_inner(),
        cache_hits: n.cache_hits.into_inner(),
        cores_cached: n.cores_cached.into_inner(),
        minimization_checks: n.minimization_checks.into_inner(),
    };
    m
}

/// One illustrating input and what each side does with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concretion {
    pub inputs: Assignment,
    /// Diff-target values per side, keyed by annotation name.
    pub left: BTreeMap<String, u64>,
    pub right: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TargetVerdict {
    ProvedEqual,
    Differs { concretions: Vec<Concretion>, partial: bool },
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDiff {
    pub target: String,
    #[serde(flatten)]
    pub verdict: TargetVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusDiff {
    pub left: Status,
    pub right: Status,
}

impl StatusDiff {
    pub fn differs(&self) -> bool {
        self.left != self.right
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PositionVerdict {
    ProvedEqual,
    Differs { witness: Assignment },
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoDiff {
    pub left_len: usize,
    pub right_len: usize,
    /// Verdicts for the aligned prefix; empty when the lengths differ.
    pub positions: Vec<PositionVerdict>,
}

impl IoDiff {
    pub fn differs(&self) -> bool {
        self.left_len != self.right_len || self.positions.iter().any(|p| matches!(p, PositionVerdict::Differs { .. }))
    }

    pub fn has_unknown(&self) -> bool {
        self.positions.iter().any(|p| matches!(p, PositionVerdict::Unknown { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub left: usize,
    pub right: usize,
    pub targets: Vec<TargetDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<StatusDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io: Option<IoDiff>,
    /// Inputs that drive both sides into this pair.
    pub shared: Vec<Concretion>,
}

impl DiffReport {
    pub fn memory_differs(&self, target: &str) -> bool {
        self.targets
            .iter()
            .any(|t| t.target == target && matches!(t.verdict, TargetVerdict::Differs { .. }))
    }

    pub fn any_memory_differs(&self) -> bool {
        self.targets.iter().any(|t| matches!(t.verdict, TargetVerdict::Differs { .. }))
    }

    pub fn status_differs(&self) -> bool {
        self.status.as_ref().is_some_and(StatusDiff::differs)
    }

    pub fn io_differs(&self) -> bool {
        self.io.as_ref().is_some_and(IoDiff::differs)
    }

    pub fn differs(&self) -> bool {
        self.any_memory_differs() || self.status_differs() || self.io_differs()
    }

    pub fn has_unknown(&self) -> bool {
        self.targets.iter().any(|t| matches!(t.verdict, TargetVerdict::Unknown { .. }))
            || self.io.as_ref().is_some_and(IoDiff::has_unknown)
    }

    pub fn concretions(&self) -> impl Iterator<Item = &Concretion> {
        self.targets
            .iter()
            .flat_map(|t| match &t.verdict {
                TargetVerdict::Differs { concretions, .. } => concretions.as_slice(),
                _ => &[],
            })
            .chain(self.shared.iter())
    }
}

/// Values of the harness's diff targets on each side under `inputs`.
fn concretion(pool: &ExprPool, h: &Harness, l: &Terminal, r: &Terminal, inputs: Assignment) -> Concretion {
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    for &i in &h.diff_annotations {
        let a = &h.annotations[i];
        left.insert(a.display.clone(), pool.eval_total(resolve_annotation(pool, l, a, Side::Left), &inputs));
        right.insert(a.display.clone(), pool.eval_total(resolve_annotation(pool, r, a, Side::Right), &inputs));
    }
    Concretion { inputs, left, right }
}

/// Up to `k` inputs satisfying the pair's joint constraints plus `extra`.
pub fn concretize(pool: &ExprPool, solver: &Solver, h: &Harness, l: &Terminal, r: &Terminal, extra: Option<ExprId>, k: usize) -> (Vec<Concretion>, bool) {
    let mut clauses = joint(&l.constraints, &r.constraints);
    if let Some(e) = extra {
        clauses.insert(e);
    }
    let found = solver.enumerate_models(pool, &clauses, &h.symbols, k);
    let list = found
        .models
        .into_iter()
        .map(|m| concretion(pool, h, l, r, m))
        .collect();
    (list, found.partial)
}

/// Compares the harness's diff targets, statuses and output streams of a
/// compatible pair.
pub fn diff_pair(pool: &ExprPool, solver: &Solver, h: &Harness, l: &Terminal, r: &Terminal, k: usize) -> DiffReport {
    let base = joint(&l.constraints, &r.constraints);
    let mut targets = Vec::new();
    for &i in &h.diff_annotations {
        let a = &h.annotations[i];
        let lv = resolve_annotation(pool, l, a, Side::Left);
        let rv = resolve_annotation(pool, r, a, Side::Right);
        let verdict = match solver.check_equal(pool, &base, lv, rv) {
            Equality::ProvedEqual => TargetVerdict::ProvedEqual,
            Equality::Differs(witness) => {
                let ne = pool.mk_ne(lv, rv);
                let (mut concretions, partial) = concretize(pool, solver, h, l, r, Some(ne), k);
                if concretions.is_empty() {
                    let mut inputs = witness;
                    for (s, _) in &h.symbols {
                        inputs.entry(s.clone()).or_insert(0);
                    }
                    concretions.push(concretion(pool, h, l, r, inputs));
                }
                TargetVerdict::Differs { concretions, partial }
            }
            Equality::Unknown(reason) => TargetVerdict::Unknown { reason },
        };
        targets.push(TargetDiff {
            target: a.display.clone(),
            verdict,
        });
    }
    let status = h.spec.diff.status.then_some(StatusDiff {
        left: l.status,
        right: r.status,
    });
    let io = h.spec.diff.io.then(|| {
        let mut positions = Vec::new();
        if l.io.len() == r.io.len() {
            for (&a, &b) in l.io.iter().zip(&r.io) {
                let (a, b) = widen(pool, a, b);
                positions.push(match solver.check_equal(pool, &base, a, b) {
                    Equality::ProvedEqual => PositionVerdict::ProvedEqual,
                    Equality::Differs(witness) => PositionVerdict::Differs { witness },
                    Equality::Unknown(reason) => PositionVerdict::Unknown { reason },
                });
            }
        }
        IoDiff {
            left_len: l.io.len(),
            right_len: r.io.len(),
            positions,
        }
    });
    let (shared, _) = concretize(pool, solver, h, l, r, None, 1);
    DiffReport {
        left: l.node,
        right: r.node,
        targets,
        status,
        io,
        shared,
    }
}

/// Zero-extends the narrower of two values so they can be compared.
fn widen(pool: &ExprPool, a: ExprId, b: ExprId) -> (ExprId, ExprId) {
    let w = pool.width(a).max(pool.width(b));
    (pool.mk_zext(a, w), pool.mk_zext(b, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RefinementVerdict {
    Equivalent,
    /// Every input of the left path also drives the right path.
    LeftRefinesRight,
    RightRefinesLeft,
    Overlapping,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    pub verdict: RefinementVerdict,
    /// An input in the left set but not the right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_only: Option<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_only: Option<Assignment>,
}

/// Compares the input sets described by two constraint sets.
pub fn refinement(pool: &ExprPool, solver: &Solver, a: &ClauseSet, b: &ClauseSet, symbols: &[(String, u32)]) -> Refinement {
    let outside = |inside: &ClauseSet, other: &ClauseSet| -> Result<Option<Assignment>, ()> {
        if other.is_subset_of(inside) {
            return Ok(None);
        }
        let mut q = inside.clone();
        q.insert(pool.mk_not(pool.mk_and_all(other.iter())));
        match solver.is_sat(pool, &q) {
            SolveResult::Sat(mut m) => {
                for (s, _) in symbols {
                    m.entry(s.clone()).or_insert(0);
                }
                Ok(Some(m))
            }
            SolveResult::Unsat(_) => Ok(None),
            SolveResult::Unknown(_) => Err(()),
        }
    };
    let (Ok(left_only), Ok(right_only)) = (outside(a, b), outside(b, a)) else {
        return Refinement {
            verdict: RefinementVerdict::Unknown,
            left_only: None,
            right_only: None,
        };
    };
    let verdict = match (&left_only, &right_only) {
        (None, None) => RefinementVerdict::Equivalent,
        (None, Some(_)) => RefinementVerdict::LeftRefinesRight,
        (Some(_), None) => RefinementVerdict::RightRefinesLeft,
        (Some(_), Some(_)) => RefinementVerdict::Overlapping,
    };
    Refinement {
        verdict,
        left_only,
        right_only,
    }
}
