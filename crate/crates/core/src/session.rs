// SPDX-License-Identifier: Apache-2.0

//! Whole-analysis driver and the exported session document.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compare::{
    diff_pair, pair_all, refinement, CompatMatrix, CoreCache, DiffReport, Refinement,
};
use crate::exec::{
    resolve_annotation, run_all, ExecConfig, ExecTree, Exploration, Harness, HarnessSpec, Location, Side, Status,
};
use crate::expr::{ExprId, ExprPool};
use crate::ir::{print_program, Mode, Program};
use crate::solver::{ClauseSet, Solver};
use crate::tree::{compress, highlight, prune, CompressedTree, HighlightMap, PruneError, Relation, Visible};

pub const SCHEMA_VERSION: u32 = 1;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub solver: Solver,
    pub workers: usize,
    pub core_cache: bool,
    pub concretions: usize,
    /// Compute refinement for every compatible pair, not only differing ones.
    pub refine_all: bool,
}

impl AnalysisConfig {
    pub fn for_harness(h: &Harness) -> Self {
        AnalysisConfig {
            solver: Solver::default(),
            workers: 1,
            core_cache: true,
            concretions: h.concretions,
            refine_all: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Equal,
    Differs,
    Unknown,
}

pub struct Analysis {
    pub left: Exploration,
    pub right: Exploration,
    pub matrix: CompatMatrix,
    /// One per compatible pair, in pair order.
    pub diffs: Vec<DiffReport>,
    pub refinements: BTreeMap<(usize, usize), Refinement>,
    pub cores: Vec<ClauseSet>,
    pub core_cache: bool,
}

impl Analysis {
    pub fn side(&self, side: Side) -> &Exploration {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn differing_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.diffs.iter().filter(|d| d.differs()).map(|d| (d.left, d.right)).collect()
    }

    /// Unknown when any satisfiability question went unanswered, otherwise
    /// whether some compatible pair differs.
    pub fn outcome(&self) -> Outcome {
        let quarantined = [&self.left, &self.right]
            .iter()
            .any(|ex| ex.terminals.iter().any(|t| t.status == Status::SolverUnknown));
        if quarantined || !self.matrix.unknown.is_empty() || self.diffs.iter().any(DiffReport::has_unknown) {
            Outcome::Unknown
        } else if self.diffs.iter().any(DiffReport::differs) {
            Outcome::Differs
        } else {
            Outcome::Equal
        }
    }
}

/// Explores both programs, pairs their leaves and diffs every compatible
/// pair.
pub fn analyze(pool: &ExprPool, h: &Harness, config: &AnalysisConfig) -> Analysis {
    let exec = ExecConfig {
        solver: config.solver.clone(),
        workers: config.workers,
    };
    let left = run_all(pool, h, Side::Left, &exec);
    let right = run_all(pool, h, Side::Right, &exec);
    let cache = if config.core_cache { CoreCache::new() } else { CoreCache::disabled() };
    let matrix = pair_all(pool, &config.solver, &left, &right, &cache, config.workers);
    let pairs: Vec<(usize, usize)> = matrix.pairs.iter().copied().collect();
    let work = |&(l, r): &(usize, usize)| {
        let (lt, rt) = (left.terminal(l).unwrap(), right.terminal(r).unwrap());
        let d = diff_pair(pool, &config.solver, h, lt, rt, config.concretions);
        let refine = (config.refine_all || d.differs())
            .then(|| refinement(pool, &config.solver, &lt.constraints, &rt.constraints, &h.symbols));
        (d, refine)
    };
    let results: Vec<(DiffReport, Option<Refinement>)> = if config.workers > 1 {
        let tp = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build().expect("worker pool");
        tp.install(|| pairs.par_iter().map(work).collect())
    } else {
        pairs.iter().map(work).collect()
    };
    let mut diffs = Vec::new();
    let mut refinements = BTreeMap::new();
    for (d, r) in results {
        if let Some(r) = r {
            refinements.insert((d.left, d.right), r);
        }
        diffs.push(d);
    }
    Analysis {
        left,
        right,
        matrix,
        diffs,
        refinements,
        cores: cache.cores(),
        core_cache: config.core_cache,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sides<T> {
    pub left: T,
    pub right: T,
}

impl<T> Sides<T> {
    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramDoc {
    pub name: String,
    pub mode: Mode,
    /// Canonical program text.
    pub source: String,
    /// Rendered instruction `i` for each index `i`.
    pub instructions: Vec<String>,
}

impl ProgramDoc {
    fn new(p: &Program) -> Self {
        ProgramDoc {
            name: p.name.clone(),
            mode: p.mode,
            source: print_program(p),
            instructions: p.instructions.iter().map(|i| i.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDoc {
    pub name: String,
    pub bytes: u64,
    pub left: Location,
    pub right: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExprDoc {
    pub id: ExprId,
    pub width: u32,
    /// One DAG level with children as ids, e.g. `(add #3 #7)`.
    pub node: String,
    /// Full prefix rendering when short enough.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalDoc {
    pub node: usize,
    pub status: Status,
    pub constraints: Vec<ExprId>,
    pub registers: BTreeMap<String, ExprId>,
    pub memory: BTreeMap<u64, ExprId>,
    pub io: Vec<ExprId>,
    /// Value of each annotation at this state.
    pub annotations: BTreeMap<String, ExprId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementDoc {
    pub left: usize,
    pub right: usize,
    #[serde(flatten)]
    pub refinement: Refinement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheDoc {
    pub enabled: bool,
    pub cores: Vec<Vec<ExprId>>,
}

/// Focus settings chosen when the document was written.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDoc {
    pub compress: u8,
    #[serde(default)]
    pub prune: Vec<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<Visible>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressed: Option<Sides<CompressedTree>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub schema_version: u32,
    pub engine_version: String,
    pub harness: HarnessSpec,
    pub programs: Sides<ProgramDoc>,
    pub annotations: Vec<AnnotationDoc>,
    /// Expression `i` has id `i`; children always have smaller ids.
    pub expressions: Vec<ExprDoc>,
    pub trees: Sides<ExecTree>,
    pub terminals: Sides<Vec<TerminalDoc>>,
    pub matrix: CompatMatrix,
    pub diffs: Vec<DiffReport>,
    pub refinements: Vec<RefinementDoc>,
    pub highlights: Sides<HighlightMap>,
    pub cache: CacheDoc,
    pub view: ViewDoc,
    pub outcome: Outcome,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Version { found: u64 },
    #[error("malformed session document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent session document: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Prune(#[from] PruneError),
}

const TEXT_LIMIT: usize = 400;

/// Renumbers expressions densely in first-use order so documents do not
/// depend on pool history.
struct Renumber<'a> {
    pool: &'a ExprPool,
    ids: BTreeMap<ExprId, ExprId>,
    order: Vec<ExprId>,
}

impl Renumber<'_> {
    fn visit(&mut self, root: ExprId) -> ExprId {
        if let Some(&id) = self.ids.get(&root) {
            return id;
        }
        let mut stack = vec![(root, false)];
        while let Some((e, expanded)) = stack.pop() {
            if self.ids.contains_key(&e) {
                continue;
            }
            if expanded {
                self.ids.insert(e, ExprId(self.order.len() as u32));
                self.order.push(e);
            } else {
                stack.push((e, true));
                let node = self.pool.node(e);
                let kids: Vec<ExprId> = node.children().collect();
                for c in kids.into_iter().rev() {
                    if !self.ids.contains_key(&c) {
                        stack.push((c, false));
                    }
                }
            }
        }
        self.ids[&root]
    }

    fn all(&mut self, es: &[ExprId]) -> Vec<ExprId> {
        es.iter().map(|&e| self.visit(e)).collect()
    }
}

/// Builds the document for a finished analysis.
pub fn export_session(pool: &ExprPool, h: &Harness, a: &Analysis, view: ViewDoc) -> Result<SessionDoc, SessionError> {
    let mut rn = Renumber {
        pool,
        ids: BTreeMap::new(),
        order: Vec::new(),
    };
    let mut trees = Vec::new();
    let mut terminals = Vec::new();
    for side in [Side::Left, Side::Right] {
        let ex = a.side(side);
        let mut tree = ex.tree.clone();
        for n in &mut tree.nodes {
            n.delta = rn.all(&n.delta);
            for e in &mut n.events {
                e.value = e.value.map(|v| rn.visit(v));
            }
        }
        trees.push(tree);
        let mut docs = Vec::new();
        for t in &ex.terminals {
            let constraints: Vec<ExprId> = t.constraints.iter().collect();
            let mut annotations = BTreeMap::new();
            for ann in &h.annotations {
                annotations.insert(ann.display.clone(), rn.visit(resolve_annotation(pool, t, ann, side)));
            }
            docs.push(TerminalDoc {
                node: t.node,
                status: t.status,
                constraints: rn.all(&constraints),
                registers: t.regs.iter().map(|(r, &v)| (r.clone(), rn.visit(v))).collect(),
                memory: t.mem.iter().map(|(&k, &v)| (k, rn.visit(v))).collect(),
                io: rn.all(&t.io),
                annotations,
            });
        }
        terminals.push(docs);
    }
    let cores: Vec<Vec<ExprId>> = a
        .cores
        .iter()
        .map(|c| {
            let mut ids = rn.all(c.as_slice());
            ids.sort_unstable();
            ids
        })
        .collect();
    let mut view = view;
    if let Some(c) = &mut view.compressed {
        for g in c.left.nodes.iter_mut().chain(c.right.nodes.iter_mut()) {
            g.delta = rn.all(&g.delta);
        }
    }
    let map = rn.ids.clone();
    let expressions = rn
        .order
        .iter()
        .enumerate()
        .map(|(i, &e)| ExprDoc {
            id: ExprId(i as u32),
            width: pool.width(e),
            node: pool.render_shallow_with(e, |c| map[&c]),
            text: pool.render_bounded(e, TEXT_LIMIT),
        })
        .collect();
    let right_terminals = terminals.pop().unwrap();
    let left_terminals = terminals.pop().unwrap();
    let right_tree = trees.pop().unwrap();
    let left_tree = trees.pop().unwrap();
    let doc = SessionDoc {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        harness: h.spec.clone(),
        programs: Sides {
            left: ProgramDoc::new(&h.left),
            right: ProgramDoc::new(&h.right),
        },
        annotations: h
            .annotations
            .iter()
            .map(|x| AnnotationDoc {
                name: x.display.clone(),
                bytes: x.bytes,
                left: x.left.clone(),
                right: x.right.clone(),
            })
            .collect(),
        expressions,
        highlights: Sides {
            left: highlight(&left_tree),
            right: highlight(&right_tree),
        },
        trees: Sides {
            left: left_tree,
            right: right_tree,
        },
        terminals: Sides {
            left: left_terminals,
            right: right_terminals,
        },
        matrix: a.matrix.clone(),
        diffs: a.diffs.clone(),
        refinements: a
            .refinements
            .iter()
            .map(|(&(left, right), r)| RefinementDoc {
                left,
                right,
                refinement: r.clone(),
            })
            .collect(),
        cache: CacheDoc {
            enabled: a.core_cache,
            cores,
        },
        view,
        outcome: a.outcome(),
    };
    doc.check()?;
    Ok(doc)
}

/// Applies pruning and compression settings to a finished analysis.
pub fn view_for(a: &Analysis, prune_spec: &[Relation], level: u8) -> Result<ViewDoc, PruneError> {
    let visible = if prune_spec.is_empty() {
        None
    } else {
        Some(prune(&a.left.tree, &a.right.tree, &a.matrix, &a.diffs, prune_spec)?)
    };
    let compressed = (level > 0).then(|| Sides {
        left: compress(&a.left.tree, level),
        right: compress(&a.right.tree, level),
    });
    Ok(ViewDoc {
        compress: level,
        prune: prune_spec.to_vec(),
        visible,
        compressed,
    })
}

fn child_refs(node: &str) -> impl Iterator<Item = u64> + '_ {
    node.split([' ', ')'])
        .filter_map(|w| w.strip_prefix('#'))
        .filter_map(|w| w.parse().ok())
}

impl SessionDoc {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    /// Parses and checks a document, rejecting other schema versions first.
    pub fn from_json(text: &str) -> Result<SessionDoc, SessionError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != SCHEMA_VERSION as u64 {
            return Err(SessionError::Version { found });
        }
        let doc: SessionDoc = serde_json::from_value(raw)?;
        doc.check()?;
        Ok(doc)
    }

    /// Verifies that every id the document mentions exists.
    pub fn check(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Inconsistent(m));
        let n_expr = self.expressions.len();
        for (i, e) in self.expressions.iter().enumerate() {
            if e.id.index() != i {
                return bad(format!("expression {i} carries id {}", e.id));
            }
            if let Some(c) = child_refs(&e.node).find(|&c| c as usize >= i) {
                return bad(format!("expression {i} refers to #{c}"));
            }
        }
        let expr_ok = |e: &ExprId, what: &str| -> Result<(), SessionError> {
            if e.index() < n_expr {
                Ok(())
            } else {
                Err(SessionError::Inconsistent(format!("{what} refers to missing expression {e}")))
            }
        };
        for side in [Side::Left, Side::Right] {
            let tree = self.trees.get(side);
            let n = tree.nodes.len();
            if n == 0 || tree.nodes[0].parent.is_some() {
                return bad(format!("{} tree has no root", side.name()));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                let here = format!("{} node {i}", side.name());
                if node.id != i {
                    return bad(format!("{here} carries id {}", node.id));
                }
                if i > 0 && node.parent.is_none_or(|p| p >= i || !tree.nodes[p].children.contains(&i)) {
                    return bad(format!("{here} has a bad parent"));
                }
                if node.children.iter().any(|&c| c >= n || tree.nodes[c].parent != Some(i)) {
                    return bad(format!("{here} has a bad child"));
                }
                for e in &node.delta {
                    expr_ok(e, &here)?;
                }
                for ev in &node.events {
                    if let Some(v) = &ev.value {
                        expr_ok(v, &here)?;
                    }
                    if ev.instr >= self.programs.get(side).instructions.len() {
                        return bad(format!("{here} has an event at instruction {}", ev.instr));
                    }
                }
            }
            let leaves: BTreeSet<usize> = tree.leaves().map(|l| l.id).collect();
            let terms: BTreeSet<usize> = self.terminals.get(side).iter().map(|t| t.node).collect();
            if leaves != terms {
                return bad(format!("{} terminals do not match the tree leaves", side.name()));
            }
            for t in self.terminals.get(side) {
                let here = format!("{} terminal {}", side.name(), t.node);
                for e in t.constraints.iter().chain(t.registers.values()).chain(t.memory.values()).chain(&t.io).chain(t.annotations.values()) {
                    expr_ok(e, &here)?;
                }
            }
            if let Some(k) = self.highlights.get(side).keys().find(|&&k| k >= n) {
                return bad(format!("{} highlight names missing node {k}", side.name()));
            }
            if let Some(v) = &self.view.visible {
                if let Some(k) = v.side(side).iter().find(|&&k| k >= n) {
                    return bad(format!("{} visible set names missing node {k}", side.name()));
                }
            }
            if let Some(c) = &self.view.compressed {
                let groups = &c.get(side).nodes;
                let mut members: Vec<usize> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
                members.sort_unstable();
                if members != (0..n).collect::<Vec<_>>() {
                    return bad(format!("{} compressed tree does not cover the tree", side.name()));
                }
                for g in groups {
                    for e in &g.delta {
                        expr_ok(e, "compressed group")?;
                    }
                }
            }
        }
        let is_leaf = |side: Side, id: usize| self.terminals.get(side).iter().any(|t| t.node == id);
        for &(l, r) in self.matrix.pairs.iter().chain(&self.matrix.unknown) {
            if !is_leaf(Side::Left, l) || !is_leaf(Side::Right, r) {
                return bad(format!("pair ({l}, {r}) does not name two leaves"));
            }
        }
        for d in &self.diffs {
            if !self.matrix.pairs.contains(&(d.left, d.right)) {
                return bad(format!("diff for ({}, {}) is not a compatible pair", d.left, d.right));
            }
        }
        for r in &self.refinements {
            if !self.matrix.pairs.contains(&(r.left, r.right)) {
                return bad(format!("refinement for ({}, {}) is not a compatible pair", r.left, r.right));
            }
        }
        for core in &self.cache.cores {
            for e in core {
                expr_ok(e, "cached core")?;
            }
        }
        Ok(())
    }

    /// Identity of the analysis for approval files: harness, programs,
    /// trees and compatible pairs.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            harness: &'a HarnessSpec,
            programs: &'a Sides<ProgramDoc>,
            trees: &'a Sides<ExecTree>,
            pairs: &'a BTreeSet<(usize, usize)>,
        }
        let key = Key {
            harness: &self.harness,
            programs: &self.programs,
            trees: &self.trees,
            pairs: &self.matrix.pairs,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("documents serialize")))
    }

    pub fn differing_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.diffs.iter().filter(|d| d.differs()).map(|d| (d.left, d.right)).collect()
    }

    pub fn diff(&self, left: usize, right: usize) -> Option<&DiffReport> {
        self.diffs.iter().find(|d| d.left == left && d.right == right)
    }

    pub fn terminal(&self, side: Side, node: usize) -> Option<&TerminalDoc> {
        self.terminals.get(side).iter().find(|t| t.node == node)
    }

    /// Rebuilds the harness from the document's own copies of its inputs.
    pub fn harness(&self, pool: &ExprPool) -> Result<Harness, crate::exec::HarnessError> {
        Harness::compile(self.harness.clone(), &self.programs.left.source, &self.programs.right.source, pool)
    }
}

/// Approved differing pairs, tied to one session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AcceptFile {
    pub session: Option<String>,
    pub pairs: BTreeSet<(usize, usize)>,
}

const ACCEPT_SESSION: &str = "# session ";

impl AcceptFile {
    /// Lines of `left,right`; `#` starts a comment, and `# session <hash>`
    /// names the session the approvals belong to.
    pub fn parse(text: &str) -> Result<AcceptFile, String> {
        let mut out = AcceptFile::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(hash) = line.strip_prefix(ACCEPT_SESSION) {
                out.session = Some(hash.trim().to_string());
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(l, r)| Some((l.trim().parse().ok()?, r.trim().parse().ok()?)));
            match parsed {
                Some(p) => {
                    out.pairs.insert(p);
                }
                None => return Err(format!("line {}: expected `left,right`, found `{line}`", n + 1)),
            }
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# twinsym accepted differences\n");
        if let Some(h) = &self.session {
            s.push_str(&format!("{ACCEPT_SESSION}{h}\n"));
        }
        for (l, r) in &self.pairs {
            s.push_str(&format!("{l},{r}\n"));
        }
        s
    }
}
