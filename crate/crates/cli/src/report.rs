// SPDX-License-Identifier: Apache-2.0

//! Text reports over a session document.

use std::collections::BTreeMap;
use std::fmt::Write;

use twinsym::compare::{Concretion, TargetVerdict};
use twinsym::exec::{Location, Side, Status};
use twinsym::session::{Outcome, SessionDoc};
use twinsym::tree::Category;

fn status_counts(doc: &SessionDoc, side: Side) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in doc.terminals.get(side) {
        *counts.entry(format!("{:?}", t.status)).or_default() += 1;
    }
    counts.iter().map(|(s, n)| format!("{n} {s}")).collect::<Vec<_>>().join(", ")
}

/// A few lines for the end of a run.
pub fn summary(doc: &SessionDoc) -> String {
    let mut s = String::new();
    for side in [Side::Left, Side::Right] {
        let p = doc.programs.get(side);
        let _ = writeln!(
            s,
            "{:<5} {}: {} leaves ({})",
            side.name(),
            p.name,
            doc.terminals.get(side).len(),
            status_counts(doc, side)
        );
    }
    let st = &doc.matrix.stats;
    let _ = writeln!(
        s,
        "compatible pairs: {}, unknown: {}, solver queries: {}, cache hits: {}",
        doc.matrix.pairs.len(),
        doc.matrix.unknown.len(),
        st.sat_queries_issued,
        st.cache_hits
    );
    let _ = writeln!(s, "{}", outcome_line(doc));
    s
}

fn outcome_line(doc: &SessionDoc) -> String {
    match doc.outcome {
        Outcome::Equal => "all compared targets proved equal".to_string(),
        Outcome::Differs => format!("{} of {} compatible pairs differ", doc.differing_pairs().len(), doc.matrix.pairs.len()),
        Outcome::Unknown => "some questions were left undecided by the solver".to_string(),
    }
}

/// Renders an annotation value: memory spans as bytes in address order.
fn value(doc: &SessionDoc, name: &str, v: u64) -> String {
    match doc.annotations.iter().find(|a| a.name == name) {
        Some(a) if a.bytes > 1 && matches!(a.left, Location::Mem { .. }) => (0..a.bytes)
            .map(|k| format!("{:02x}", (v >> (8 * k)) & 0xff))
            .collect::<Vec<_>>()
            .join(" "),
        _ => format!("{v:#x}"),
    }
}

fn concretion_table(doc: &SessionDoc, out: &mut String, cs: &[Concretion], target: &str) {
    let rows: Vec<(String, String, String)> = cs
        .iter()
        .map(|c| {
            let inputs = c.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
            (inputs, value(doc, target, c.left[target]), value(doc, target, c.right[target]))
        })
        .collect();
    let w0 = rows.iter().map(|r| r.0.len()).chain([6]).max().unwrap();
    let w1 = rows.iter().map(|r| r.1.len()).chain([4]).max().unwrap();
    let _ = writeln!(out, "      {:<w0$}  {:<w1$}  right", "inputs", "left");
    for (i, l, r) in rows {
        let _ = writeln!(out, "      {i:<w0$}  {l:<w1$}  {r}");
    }
}

/// The full report: counts, per-pair verdicts, concretions, refinement,
/// highlights and cache statistics.
pub fn render(doc: &SessionDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "session {}", doc.hash());
    for side in [Side::Left, Side::Right] {
        let p = doc.programs.get(side);
        let _ = writeln!(
            s,
            "{:<5} program {} ({:?} mode): {} nodes, {} leaves ({})",
            side.name(),
            p.name,
            p.mode,
            doc.trees.get(side).nodes.len(),
            doc.terminals.get(side).len(),
            status_counts(doc, side)
        );
    }
    let _ = writeln!(s, "compatible pairs: {}", doc.matrix.pairs.len());
    if !doc.matrix.unknown.is_empty() {
        let list: Vec<String> = doc.matrix.unknown.iter().map(|(l, r)| format!("({l}, {r})")).collect();
        let _ = writeln!(s, "undecided pairs: {}", list.join(" "));
    }

    let _ = writeln!(s, "\npairs:");
    for d in &doc.diffs {
        let mut parts: Vec<String> = d
            .targets
            .iter()
            .map(|t| {
                let v = match &t.verdict {
                    TargetVerdict::ProvedEqual => "equal",
                    TargetVerdict::Differs { .. } => "DIFFERS",
                    TargetVerdict::Unknown { .. } => "unknown",
                };
                format!("{} {v}", t.target)
            })
            .collect();
        if let Some(st) = &d.status {
            parts.push(if st.differs() {
                format!("status DIFFERS {:?}/{:?}", st.left, st.right)
            } else {
                format!("status {:?}", st.left)
            });
        }
        if let Some(io) = &d.io {
            parts.push(if io.differs() {
                format!("io DIFFERS ({} vs {} events)", io.left_len, io.right_len)
            } else if io.has_unknown() {
                "io unknown".to_string()
            } else {
                format!("io equal ({} events)", io.left_len)
            });
        }
        let _ = writeln!(s, "  ({:>3}, {:>3})  {}", d.left, d.right, parts.join("; "));
    }

    let differing: Vec<_> = doc.diffs.iter().filter(|d| d.differs()).collect();
    if !differing.is_empty() {
        let _ = writeln!(s, "\ndifferences:");
    }
    for d in differing {
        let _ = writeln!(s, "  pair ({}, {})", d.left, d.right);
        for t in &d.targets {
            if let TargetVerdict::Differs { concretions, partial } = &t.verdict {
                let more = if *partial { " (enumeration stopped early)" } else { "" };
                let _ = writeln!(s, "    {} differs{more}:", t.target);
                concretion_table(doc, &mut s, concretions, &t.target);
            }
        }
        if let Some(st) = d.status.as_ref().filter(|st| st.differs()) {
            let _ = writeln!(s, "    status differs: left {:?}, right {:?}", st.left, st.right);
            if let Some(c) = d.shared.first() {
                let inputs = c.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
                let _ = writeln!(s, "      for example {inputs}");
            }
        }
        if let Some(io) = d.io.as_ref().filter(|io| io.differs()) {
            if io.left_len != io.right_len {
                let _ = writeln!(s, "    io differs: {} events on the left, {} on the right", io.left_len, io.right_len);
            } else {
                let _ = writeln!(s, "    io differs at some of {} positions", io.left_len);
            }
        }
    }

    if !doc.refinements.is_empty() {
        let _ = writeln!(s, "\nrefinement:");
        for r in &doc.refinements {
            let _ = writeln!(s, "  ({:>3}, {:>3})  {:?}", r.left, r.right, r.refinement.verdict);
        }
    }

    let _ = writeln!(s, "\nhighlights:");
    for side in [Side::Left, Side::Right] {
        let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
        for cats in doc.highlights.get(side).values() {
            for c in cats {
                *counts.entry(*c).or_default() += 1;
            }
        }
        let text = if counts.is_empty() {
            "none".to_string()
        } else {
            counts.iter().map(|(c, n)| format!("{n} {c:?}")).collect::<Vec<_>>().join(", ")
        };
        let _ = writeln!(s, "  {:<5} {text}", side.name());
    }
    let quarantined: usize = [Side::Left, Side::Right]
        .iter()
        .map(|&side| doc.terminals.get(side).iter().filter(|t| t.status == Status::SolverUnknown).count())
        .sum();
    if quarantined > 0 {
        let _ = writeln!(s, "  {quarantined} leaves quarantined after undecided solver queries");
    }

    let st = &doc.matrix.stats;
    let _ = writeln!(
        s,
        "\ncache: {}, {} solver queries, {} cache hits, {} cores cached, {} minimization checks",
        if doc.cache.enabled { "on" } else { "off" },
        st.sat_queries_issued,
        st.cache_hits,
        st.cores_cached,
        st.minimization_checks
    );
    let _ = writeln!(s, "\n{}", outcome_line(doc));
    s
}
