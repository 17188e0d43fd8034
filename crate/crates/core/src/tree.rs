// SPDX-License-Identifier: Apache-2.0

//! Presentation of execution trees: highlighting, pruning against the
//! facing tree, and compression.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::{CompatMatrix, DiffReport};
use crate::exec::{EventKind, ExecTree, Side, Status};
use crate::expr::ExprId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    ErrorState,
    ModeledCall,
    LoopBoundExceeded,
    AssertionFailed,
}

pub type HighlightMap = BTreeMap<usize, BTreeSet<Category>>;

/// Categories of every node that has at least one.
pub fn highlight(tree: &ExecTree) -> HighlightMap {
    let mut out = HighlightMap::new();
    for n in &tree.nodes {
        let mut cats = BTreeSet::new();
        match n.status {
            Some(s) if s.is_error() => {
                cats.insert(Category::ErrorState);
            }
            Some(Status::LoopBoundExceeded) => {
                cats.insert(Category::LoopBoundExceeded);
            }
            Some(Status::AssertFailed) => {
                cats.insert(Category::AssertionFailed);
            }
            _ => {}
        }
        if n.events.iter().any(|e| e.kind == EventKind::Io) {
            cats.insert(Category::ModeledCall);
        }
        if !cats.is_empty() {
            out.insert(n.id, cats);
        }
    }
    out
}

/// A relationship between paired leaves that keeps them visible.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    MemoryDiffers(String),
    StatusDiffers,
    IoDiffers,
    AnyDiff,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::MemoryDiffers(name) => write!(f, "memory:{name}"),
            Relation::StatusDiffers => f.write_str("status"),
            Relation::IoDiffers => f.write_str("io"),
            Relation::AnyDiff => f.write_str("any"),
        }
    }
}

impl FromStr for Relation {
    type Err = String;

    /// Parses `any`, `status`, `io` or `memory:<annotation>`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "any" => Ok(Relation::AnyDiff),
            "status" => Ok(Relation::StatusDiffers),
            "io" => Ok(Relation::IoDiffers),
            _ => match s.strip_prefix("memory:") {
                Some(name) if !name.is_empty() => Ok(Relation::MemoryDiffers(name.to_string())),
                _ => Err(format!("unknown relation `{s}`; expected any, status, io or memory:<name>")),
            },
        }
    }
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("no relations given")]
    Empty,
    #[error("no diff report for compatible pair ({0}, {1})")]
    MissingReport(usize, usize),
    #[error("pair ({left}, {right}) has no {what} comparison")]
    MissingData { left: usize, right: usize, what: String },
}

/// Node ids left visible on each side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visible {
    pub left: BTreeSet<usize>,
    pub right: BTreeSet<usize>,
}

impl Visible {
    pub fn side(&self, side: Side) -> &BTreeSet<usize> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

fn holds(r: &Relation, d: &DiffReport) -> Result<bool, PruneError> {
    let missing = |what: &str| PruneError::MissingData {
        left: d.left,
        right: d.right,
        what: what.to_string(),
    };
    Ok(match r {
        Relation::MemoryDiffers(name) => {
            if !d.targets.iter().any(|t| &t.target == name) {
                return Err(missing(&format!("`{name}`")));
            }
            d.memory_differs(name)
        }
        Relation::StatusDiffers => d.status.as_ref().ok_or_else(|| missing("status"))?.differs(),
        Relation::IoDiffers => d.io.as_ref().ok_or_else(|| missing("io"))?.differs(),
        Relation::AnyDiff => d.differs(),
    })
}

fn with_ancestors(tree: &ExecTree, leaves: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for &l in leaves {
        let mut cur = Some(l);
        while let Some(n) = cur {
            if !out.insert(n) {
                break;
            }
            cur = tree.nodes[n].parent;
        }
    }
    out
}

/// Keeps each leaf that has a compatible facing leaf related to it by one of
/// `spec`, plus the ancestors of kept leaves.
pub fn prune(left: &ExecTree, right: &ExecTree, matrix: &CompatMatrix, diffs: &[DiffReport], spec: &[Relation]) -> Result<Visible, PruneError> {
    if spec.is_empty() {
        return Err(PruneError::Empty);
    }
    let by_pair: BTreeMap<(usize, usize), &DiffReport> = diffs.iter().map(|d| ((d.left, d.right), d)).collect();
    let mut keep_l = BTreeSet::new();
    let mut keep_r = BTreeSet::new();
    for &(l, r) in &matrix.pairs {
        let d = by_pair.get(&(l, r)).ok_or(PruneError::MissingReport(l, r))?;
        let mut related = false;
        for rel in spec {
            related |= holds(rel, d)?;
        }
        if related {
            keep_l.insert(l);
            keep_r.insert(r);
        }
    }
    Ok(Visible {
        left: with_ancestors(left, &keep_l),
        right: with_ancestors(right, &keep_r),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Original node ids, in tree order.
    pub members: Vec<usize>,
    /// Constraints added by the members, in order.
    pub delta: Vec<ExprId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedTree {
    pub side: Side,
    pub level: u8,
    pub nodes: Vec<GroupNode>,
}

impl CompressedTree {
    /// Group holding original node `id`.
    pub fn group_of(&self, id: usize) -> Option<usize> {
        self.nodes.iter().find(|g| g.members.contains(&id)).map(|g| g.id)
    }

    /// Original leaf ids held by childless groups.
    pub fn leaf_members(&self, tree: &ExecTree) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter(|g| g.children.is_empty())
            .flat_map(|g| g.members.iter().copied())
            .filter(|&m| tree.nodes[m].children.is_empty())
            .collect();
        out.sort_unstable();
        out
    }

    /// Union of group deltas from the root to group `id`.
    pub fn path_constraints(&self, id: usize) -> BTreeSet<ExprId> {
        let mut out = BTreeSet::new();
        let mut cur = Some(id);
        while let Some(g) = cur {
            out.extend(self.nodes[g].delta.iter().copied());
            cur = self.nodes[g].parent;
        }
        out
    }
}

/// Level 1 merges each node whose constraints equal its parent's into the
/// parent; level 2 also merges every only child into its parent. Level 0
/// keeps one group per node.
pub fn compress(tree: &ExecTree, level: u8) -> CompressedTree {
    let mut group_of = vec![usize::MAX; tree.nodes.len()];
    let mut nodes: Vec<GroupNode> = Vec::new();
    for n in &tree.nodes {
        let merge_into = n.parent.filter(|&p| {
            (level >= 1 && n.delta.is_empty()) || (level >= 2 && tree.nodes[p].children.len() == 1)
        });
        match merge_into {
            Some(p) => {
                let g = group_of[p];
                group_of[n.id] = g;
                nodes[g].members.push(n.id);
                nodes[g].delta.extend(n.delta.iter().copied());
            }
            None => {
                let g = nodes.len();
                group_of[n.id] = g;
                let parent = n.parent.map(|p| group_of[p]);
                if let Some(pg) = parent {
                    nodes[pg].children.push(g);
                }
                nodes.push(GroupNode {
                    id: g,
                    parent,
                    children: Vec::new(),
                    members: vec![n.id],
                    delta: n.delta.clone(),
                });
            }
        }
    }
    CompressedTree {
        side: tree.side,
        level,
        nodes,
    }
}
