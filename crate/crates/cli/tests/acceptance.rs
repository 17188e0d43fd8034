//! Acceptance runner: one PASS or FAIL line per criterion, nonzero exit if
//! any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinsym::compare::TargetVerdict;
use twinsym::exec::{concrete_annotation, replay, resolve_annotation, ExecTree, Harness, Side};
use twinsym::expr::{Assignment, ExprId, ExprPool};
use twinsym::ir::ConcreteStatus;
use twinsym::session::{analyze, Analysis, AnalysisConfig, SessionDoc};
use twinsym::solver::{SolveResult, Solver};
use twinsym::testing::{all_assignments, brute_force_sat, ExprGen};
use twinsym::tree::{compress, prune, Relation};

const CORPUS: [&str; 5] = ["sort.json", "sort_bug.json", "watch.json", "watch_bounded.json", "probe.json"];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

/// Runs the CLI on a corpus harness; returns exit code, parsed session and
/// wall time.
fn cli_run(name: &str, out: &Path) -> Result<(i32, SessionDoc, Duration), String> {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_twinsym"))
        .args(["run", corpus(name).to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let code = o.status.code().ok_or("killed by signal")?;
    let text = std::fs::read_to_string(out.join("session.json"))
        .map_err(|e| format!("{name}: no session written (exit {code}): {e}; {}", String::from_utf8_lossy(&o.stderr)))?;
    let doc = SessionDoc::from_json(&text).map_err(|e| e.to_string())?;
    Ok((code, doc, took))
}

fn session(name: &str, cache: bool) -> (ExprPool, Harness, Analysis) {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus(name), &pool).unwrap();
    let cfg = AnalysisConfig {
        core_cache: cache,
        ..AnalysisConfig::for_harness(&h)
    };
    let a = analyze(&pool, &h, &cfg);
    (pool, h, a)
}

fn cross_algorithm_equivalence(tmp: &Path) -> Outcome {
    let (code, doc, took) = cli_run("sort.json", &tmp.join("sort"))?;
    ensure!(code == 0, "exit {code}, want 0");
    ensure!(!doc.matrix.pairs.is_empty(), "no compatible pairs");
    for d in &doc.diffs {
        let t = d.targets.iter().find(|t| t.target == "array").ok_or("no array target")?;
        ensure!(t.verdict == TargetVerdict::ProvedEqual, "pair ({}, {}): {:?}", d.left, d.right, t.verdict);
    }
    ensure!(took < Duration::from_secs(120), "took {took:?}, limit 2 min");
    Ok(format!("{} pairs, array proved equal on all, {:.1}s", doc.diffs.len(), took.as_secs_f64()))
}

fn seeded_bug(tmp: &Path) -> Outcome {
    let (code, doc, _) = cli_run("sort_bug.json", &tmp.join("bug"))?;
    ensure!(code == 1, "exit {code}, want 1");
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("sort_bug.json"), &pool).map_err(|e| e.to_string())?;
    let array = h.annotations.iter().find(|a| a.display == "array").ok_or("no array annotation")?;
    let (mut pairs, mut replayed) = (0, 0);
    for d in &doc.diffs {
        for t in &d.targets {
            let TargetVerdict::Differs { concretions, .. } = &t.verdict else { continue };
            pairs += 1;
            ensure!(!concretions.is_empty(), "pair ({}, {}) differs without concretions", d.left, d.right);
            for c in concretions {
                let l = replay(&h, Side::Left, &c.inputs);
                let r = replay(&h, Side::Right, &c.inputs);
                let (lv, rv) = (concrete_annotation(&l, array, Side::Left), concrete_annotation(&r, array, Side::Right));
                ensure!(lv == c.left["array"] && rv == c.right["array"], "replay of {:?} gives {lv:#x}/{rv:#x}, recorded {:#x}/{:#x}", c.inputs, c.left["array"], c.right["array"]);
                ensure!(lv != rv, "replayed arrays agree for {:?}", c.inputs);
                replayed += 1;
            }
        }
    }
    ensure!(pairs >= 1, "no differing pair");
    Ok(format!("{pairs} differing pairs, {replayed} concretions replay bit-exact"))
}

fn overflow_and_repair(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let (code, doc, _) = cli_run("watch.json", &tmp.join("watch"))?;
    ensure!(code == 1, "unbounded watch exit {code}, want 1");
    let status = doc.diffs.iter().filter(|d| d.status_differs()).count();
    ensure!(status > 0, "no StatusDiffers pair");
    let (code, doc, _) = cli_run("watch_bounded.json", &tmp.join("bounded"))?;
    ensure!(code == 0, "bounded watch exit {code}, want 0");
    for d in &doc.diffs {
        for t in &d.targets {
            ensure!(t.verdict == TargetVerdict::ProvedEqual, "bounded pair ({}, {}) {}: {:?}", d.left, d.right, t.target, t.verdict);
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(300), "took {took:?}, limit 5 min");
    Ok(format!("{status} status-differing pairs unbounded, {} pairs all equal bounded, {:.1}s", doc.diffs.len(), took.as_secs_f64()))
}

fn memoization() -> Outcome {
    let mut parts = Vec::new();
    for name in ["sort.json", "sort_bug.json", "watch.json", "watch_bounded.json"] {
        let (_, _, on) = session(name, true);
        let (_, _, off) = session(name, false);
        let (q_on, q_off) = (on.matrix.stats.sat_queries_issued, off.matrix.stats.sat_queries_issued);
        ensure!(q_on < q_off, "{name}: {q_on} queries with cache, {q_off} without");
        ensure!(on.matrix.pairs == off.matrix.pairs, "{name}: pair sets differ");
        parts.push(format!("{name} {q_on}<{q_off}"));
    }
    Ok(parts.join(", "))
}

fn partition() -> Outcome {
    let start = Instant::now();
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("probe.json"), &pool).map_err(|e| e.to_string())?;
    ensure!(h.symbols.iter().all(|(_, w)| *w == 4) && h.symbols.len() == 2, "probe needs two 4-bit symbols");
    let assumptions = pool.mk_and_all(h.assumptions.iter().copied());
    let mut counts = (0, 0);
    for side in [Side::Left, Side::Right] {
        let ex = twinsym::exec::run_all(&pool, &h, side, &Default::default());
        let retained: Vec<_> = ex.retained().collect();
        for m in all_assignments(&h.symbols) {
            let m: Assignment = m;
            let hits: Vec<_> = retained.iter().filter(|t| t.constraints.iter().all(|c| pool.eval_total(c, &m) == 1)).collect();
            let out = replay(&h, side, &m);
            let assumed = pool.eval_total(assumptions, &m) == 1 && out.status != ConcreteStatus::AssumeViolated;
            if !assumed {
                ensure!(hits.is_empty(), "{side:?} {m:?} lies outside the assumptions but matches {} leaves", hits.len());
                counts.1 += 1;
                continue;
            }
            ensure!(hits.len() == 1, "{side:?} {m:?} matches {} leaves", hits.len());
            let t = hits[0];
            ensure!(t.status.concrete() == Some(out.status), "{side:?} {m:?}: leaf {:?}, interpret {:?}", t.status, out.status);
            ensure!(t.trace == out.instr_trace, "{side:?} {m:?}: traces differ");
            for a in &h.annotations {
                let sym = pool.eval_total(resolve_annotation(&pool, t, a, side), &m);
                ensure!(concrete_annotation(&out, a, side) == sym, "{side:?} {m:?}: {} differs", a.display);
            }
            counts.0 += 1;
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}, limit 1 min");
    Ok(format!("{} inputs matched one leaf, {} outside the assumptions matched none, {:.1}s", counts.0, counts.1, took.as_secs_f64()))
}

fn solver_fuzz() -> Outcome {
    const INSTANCES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let solver = Solver::default();
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..INSTANCES {
        let pool = ExprPool::new();
        let mut g = ExprGen::new(&pool, &mut rng, 3, 8, 12);
        let n = g.rng.gen_range(1..=6);
        let set = g.clause_set(n, 3);
        let vars = g.vars.clone();
        let oracle = brute_force_sat(&pool, &set, &vars);
        match solver.is_sat(&pool, &set) {
            SolveResult::Sat(m) => {
                ensure!(oracle.is_some(), "instance {i}: Sat but exhaustive search finds none");
                ensure!(set.iter().all(|c| pool.eval_total(c, &m) == 1), "instance {i}: model violates a clause");
                sat += 1;
            }
            SolveResult::Unsat(core) => {
                ensure!(oracle.is_none(), "instance {i}: Unsat but {:?} satisfies", oracle);
                ensure!(core.is_subset_of(&set), "instance {i}: core is not a subset");
                ensure!(brute_force_sat(&pool, &core, &vars).is_none(), "instance {i}: core is satisfiable");
                for c in core.iter() {
                    ensure!(brute_force_sat(&pool, &core.without(c), &vars).is_some(), "instance {i}: core is not minimal");
                }
                unsat += 1;
            }
            SolveResult::Unknown(why) => return Err(format!("instance {i}: unknown ({why})")),
        }
    }
    Ok(format!("{INSTANCES} instances, {sat} sat, {unsat} unsat"))
}

fn check_compression(t: &ExecTree) -> Result<(), String> {
    let leaves: Vec<usize> = t.leaves().map(|n| n.id).collect();
    for level in [0, 1, 2] {
        let c = compress(t, level);
        ensure!(c.leaf_members(t) == leaves, "{:?} level {level}: leaf multiset changed", t.side);
        for &l in &leaves {
            let g = c.group_of(l).ok_or(format!("leaf {l} has no group"))?;
            let original: BTreeSet<ExprId> = t.constraints(l).iter().collect();
            ensure!(c.path_constraints(g) == original, "{:?} level {level}: constraints of leaf {l} changed", t.side);
        }
    }
    Ok(())
}

fn check_prune(a: &Analysis, spec: &[Relation]) -> Result<(), String> {
    let v = prune(&a.left.tree, &a.right.tree, &a.matrix, &a.diffs, spec).map_err(|e| e.to_string())?;
    for (ex, mine, theirs, left) in [(&a.left, &v.left, &v.right, true), (&a.right, &v.right, &v.left, false)] {
        for t in ex.terminals.iter().filter(|t| mine.contains(&t.node)) {
            let partner = a
                .diffs
                .iter()
                .filter(|d| if left { d.left == t.node } else { d.right == t.node })
                .any(|d| theirs.contains(&if left { d.right } else { d.left }));
            ensure!(partner, "{:?} leaf {} survives {spec:?} without a partner", ex.side, t.node);
        }
        for &n in mine {
            if let Some(p) = ex.tree.nodes[n].parent {
                ensure!(mine.contains(&p), "{:?} node {n} survives without its parent", ex.side);
            }
        }
    }
    Ok(())
}

fn compression_and_pruning() -> Outcome {
    let mut checked = 0;
    for name in CORPUS {
        let (_, h, a) = session(name, true);
        check_compression(&a.left.tree).map_err(|e| format!("{name}: {e}"))?;
        check_compression(&a.right.tree).map_err(|e| format!("{name}: {e}"))?;
        let mut specs = vec![vec![Relation::AnyDiff], vec![Relation::StatusDiffers], vec![Relation::IoDiffers]];
        for &i in &h.diff_annotations {
            specs.push(vec![Relation::MemoryDiffers(h.annotations[i].display.clone())]);
        }
        for spec in &specs {
            check_prune(&a, spec).map_err(|e| format!("{name}: {e}"))?;
        }
        checked += specs.len();
    }
    Ok(format!("{} sessions, 3 levels each, {checked} prune relations", CORPUS.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("cross-algorithm equivalence", Box::new(|| cross_algorithm_equivalence(dir))),
        ("seeded-bug detection", Box::new(|| seeded_bug(dir))),
        ("overflow divergence and assumption repair", Box::new(|| overflow_and_repair(dir))),
        ("memoization reduces solver queries", Box::new(memoization)),
        ("oracle partition property", Box::new(partition)),
        ("solver soundness fuzz", Box::new(solver_fuzz)),
        ("compression and pruning properties", Box::new(compression_and_pruning)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
