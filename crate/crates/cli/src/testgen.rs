// SPDX-License-Identifier: Apache-2.0

//! Concrete test vectors from session concretions, one JSON object per line.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use twinsym::compare::{Concretion, TargetVerdict};
use twinsym::exec::{concrete_input, Side};
use twinsym::expr::{Assignment, ExprPool};
use twinsym::session::SessionDoc;

#[derive(Serialize)]
pub struct Expected {
    /// Bytes to preload, by address.
    pub memory: BTreeMap<u64, u8>,
    pub registers: BTreeMap<String, u64>,
    pub status: String,
    pub targets: BTreeMap<String, u64>,
}

#[derive(Serialize)]
pub struct Vector {
    pub pair: (usize, usize),
    /// The differing target this input illustrates, or `shared`.
    pub source: String,
    pub inputs: Assignment,
    pub left: Expected,
    pub right: Expected,
}

pub fn vectors(doc: &SessionDoc) -> Result<Vec<Vector>> {
    let pool = ExprPool::new();
    let h = doc.harness(&pool)?;
    let mut out = Vec::new();
    for d in &doc.diffs {
        let mut sources: Vec<(&str, &Concretion)> = Vec::new();
        for t in &d.targets {
            if let TargetVerdict::Differs { concretions, .. } = &t.verdict {
                sources.extend(concretions.iter().map(|c| (t.target.as_str(), c)));
            }
        }
        sources.extend(d.shared.iter().map(|c| ("shared", c)));
        for (source, c) in sources {
            let side = |s: Side, node: usize, targets: &BTreeMap<String, u64>| {
                let input = concrete_input(&h, s, &c.inputs);
                let status = doc
                    .terminal(s, node)
                    .and_then(|t| t.status.concrete())
                    .map(|st| format!("{st:?}"))
                    .unwrap_or_default();
                Expected {
                    memory: input.mem,
                    registers: input.regs,
                    status,
                    targets: targets.clone(),
                }
            };
            out.push(Vector {
                pair: (d.left, d.right),
                source: source.to_string(),
                inputs: c.inputs.clone(),
                left: side(Side::Left, d.left, &c.left),
                right: side(Side::Right, d.right, &c.right),
            });
        }
    }
    Ok(out)
}
