use std::path::PathBuf;

use twinsym::compare::{
    compatible, concretize, diff_pair, joint, pair_all, refinement, Compat, CoreCache, RefinementVerdict, TargetVerdict,
};
use twinsym::exec::{replay, run_all, ExecConfig, Harness, HarnessSpec, Side, Status, Terminal};
use twinsym::expr::{BinOp, ExprId, ExprPool};
use twinsym::session::{analyze, AnalysisConfig};
use twinsym::solver::{ClauseSet, Solver};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn leaf(node: usize, constraints: &[ExprId]) -> Terminal {
    Terminal {
        node,
        status: Status::Finished,
        constraints: ClauseSet::from_ids(constraints.iter().copied()),
        regs: Default::default(),
        mem: Default::default(),
        io: Vec::new(),
        trace: Vec::new(),
        model: None,
    }
}

fn ult(pool: &ExprPool, a: ExprId, b: ExprId) -> ExprId {
    pool.mk_bin(BinOp::Ult, a, b)
}

#[test]
fn incompatible_pairs_feed_the_cache() {
    let pool = ExprPool::new();
    let solver = Solver::default();
    let x = pool.var("x", 8).unwrap();
    let y = pool.var("y", 8).unwrap();
    let c = |v| pool.constant(8, v);
    let gt5 = ult(&pool, c(5), x);
    let le3 = pool.mk_not(ult(&pool, c(3), x));
    let cache = CoreCache::new();

    let (v, hit) = compatible(&pool, &solver, &leaf(0, &[gt5]), &leaf(0, &[le3]), &cache);
    assert_eq!(v, Compat::Incompatible);
    assert!(!hit);
    assert_eq!(cache.cores(), vec![ClauseSet::from_ids([gt5, le3])]);

    let other = ult(&pool, y, c(9));
    let (v, hit) = compatible(&pool, &solver, &leaf(1, &[gt5, other]), &leaf(1, &[le3]), &cache);
    assert_eq!(v, Compat::Incompatible);
    assert!(hit);

    let gt2 = ult(&pool, c(2), x);
    assert_eq!(compatible(&pool, &solver, &leaf(0, &[gt5]), &leaf(0, &[gt2]), &cache).0, Compat::Compatible);
    assert_eq!(cache.len(), 1);

    let off = CoreCache::disabled();
    assert_eq!(compatible(&pool, &solver, &leaf(0, &[gt5]), &leaf(0, &[le3]), &off).0, Compat::Incompatible);
    assert!(off.is_empty());
}

#[test]
fn cache_keeps_smallest_cores_first() {
    let pool = ExprPool::new();
    let x = pool.var("x", 8).unwrap();
    let a = ult(&pool, x, pool.constant(8, 3));
    let b = ult(&pool, pool.constant(8, 9), x);
    let d = pool.mk_eq(x, pool.constant(8, 1));
    let cache = CoreCache::new();
    assert!(cache.insert(ClauseSet::from_ids([a, b, d])));
    assert!(cache.insert(ClauseSet::from_ids([a, b])));
    assert!(!cache.insert(ClauseSet::from_ids([a, b, pool.mk_not(d)])));
    let sizes: Vec<usize> = cache.cores().iter().map(ClauseSet::len).collect();
    assert_eq!(sizes, vec![2, 3]);
}

const BRANCH: &str = "reg a:8, t:1\nload.8 a, [0]\ncmp_ult t, a, 10\nbr t, small\nconst a, 1\nstore.8 [1], a\nsmall: halt\n";

fn harness(pool: &ExprPool, left: &str, right: &str) -> Harness {
    let spec: HarnessSpec = serde_json::from_str(
        r#"{
      "left": "l.ir", "right": "r.ir",
      "symbols": [{"name": "x", "width": 8}],
      "placements": {"left": {"x": {"mem": 0}}, "right": {"x": {"mem": 0}}},
      "annotations": [{"name": ["out"], "left": {"mem": 1}, "right": {"mem": 1}}]
    }"#,
    )
    .unwrap();
    Harness::compile(spec, left, right, pool).unwrap()
}

#[test]
fn pairing_small_trees() {
    let pool = ExprPool::new();
    let solver = Solver::default();
    let h = harness(&pool, "reg a:8\nhalt\n", "reg a:8\nhalt\n");
    let l = run_all(&pool, &h, Side::Left, &ExecConfig::default());
    let r = run_all(&pool, &h, Side::Right, &ExecConfig::default());
    let m = pair_all(&pool, &solver, &l, &r, &CoreCache::new(), 1);
    assert_eq!(m.pairs.into_iter().collect::<Vec<_>>(), vec![(0, 0)]);

    let h = harness(&pool, BRANCH, BRANCH);
    let l = run_all(&pool, &h, Side::Left, &ExecConfig::default());
    let r = run_all(&pool, &h, Side::Right, &ExecConfig::default());
    let leaves: Vec<usize> = l.terminals.iter().map(|t| t.node).collect();
    assert_eq!(leaves.len(), 2);
    let m = pair_all(&pool, &solver, &l, &r, &CoreCache::new(), 1);
    let expected: Vec<(usize, usize)> = leaves.iter().map(|&n| (n, n)).collect();
    assert_eq!(m.pairs.iter().copied().collect::<Vec<_>>(), expected);
    assert!(m.unknown.is_empty());
    assert_eq!(m.stats.sat_queries_issued + m.stats.cache_hits, 4);
}

#[test]
fn self_comparison_is_all_equal() {
    let pool = ExprPool::new();
    let solver = Solver::default();
    let h = harness(&pool, BRANCH, BRANCH);
    let l = run_all(&pool, &h, Side::Left, &ExecConfig::default());
    let r = run_all(&pool, &h, Side::Right, &ExecConfig::default());
    for lt in &l.terminals {
        let rt = r.terminal(lt.node).unwrap();
        let d = diff_pair(&pool, &solver, &h, lt, rt, 3);
        assert!(!d.differs());
        assert!(d.targets.iter().all(|t| t.verdict == TargetVerdict::ProvedEqual));
        assert_eq!(d.shared.len(), 1);
        let c = &d.shared[0];
        assert_eq!(c.left, c.right);
        assert_eq!(refinement(&pool, &solver, &lt.constraints, &rt.constraints, &h.symbols).verdict, RefinementVerdict::Equivalent);
    }
}

#[test]
fn concretions_for_differing_target() {
    let pool = ExprPool::new();
    let solver = Solver::default();
    let other = BRANCH.replace("const a, 1", "const a, 2");
    let h = harness(&pool, BRANCH, &other);
    let l = run_all(&pool, &h, Side::Left, &ExecConfig::default());
    let r = run_all(&pool, &h, Side::Right, &ExecConfig::default());
    let lt = l.terminals.iter().find(|t| t.trace.len() > 4).unwrap();
    let rt = r.terminal(lt.node).unwrap();
    let d = diff_pair(&pool, &solver, &h, lt, rt, 3);
    assert!(d.memory_differs("out"));
    let TargetVerdict::Differs { concretions, partial } = &d.targets[0].verdict else { panic!() };
    assert!(!partial);
    assert_eq!(concretions.len(), 3);
    for c in concretions {
        assert_eq!((c.left["out"], c.right["out"]), (1, 2));
        assert!(c.inputs["x"] >= 10);
        assert_eq!(replay(&h, Side::Left, &c.inputs).read_mem(1, 1), 1);
        assert_eq!(replay(&h, Side::Right, &c.inputs).read_mem(1, 1), 2);
    }
    let (one, _) = concretize(&pool, &solver, &h, lt, rt, None, 1);
    assert_eq!(one.len(), 1);

    let same = run_all(&pool, &h, Side::Left, &ExecConfig::default());
    let twin = same.terminal(lt.node).unwrap();
    let v = resolve(&pool, &h, twin);
    let (none, _) = concretize(&pool, &solver, &h, lt, twin, Some(pool.mk_ne(v, v)), 3);
    assert!(none.is_empty());
}

fn resolve(pool: &ExprPool, h: &Harness, t: &Terminal) -> ExprId {
    twinsym::exec::resolve_annotation(pool, t, &h.annotations[0], Side::Left)
}

#[test]
fn refinement_quadrants() {
    let pool = ExprPool::new();
    let solver = Solver::default();
    let x = pool.var("x", 8).unwrap();
    let c = |v| pool.constant(8, v);
    let syms = vec![("x".to_string(), 8)];
    let lt4 = ClauseSet::from_ids([ult(&pool, x, c(4))]);
    let lt8 = ClauseSet::from_ids([ult(&pool, x, c(8))]);
    let ge2 = ClauseSet::from_ids([pool.mk_not(ult(&pool, x, c(2)))]);

    let r = refinement(&pool, &solver, &lt4, &lt4, &syms);
    assert_eq!(r.verdict, RefinementVerdict::Equivalent);

    let r = refinement(&pool, &solver, &lt4, &lt8, &syms);
    assert_eq!(r.verdict, RefinementVerdict::LeftRefinesRight);
    assert!(r.left_only.is_none());
    assert!((4..8).contains(&r.right_only.unwrap()["x"]));

    let r = refinement(&pool, &solver, &lt8, &lt4, &syms);
    assert_eq!(r.verdict, RefinementVerdict::RightRefinesLeft);

    let r = refinement(&pool, &solver, &lt4, &ge2, &syms);
    assert_eq!(r.verdict, RefinementVerdict::Overlapping);
    assert!(r.left_only.unwrap()["x"] < 2);
    assert!(r.right_only.unwrap()["x"] >= 4);
}

/// Pairs, cache behaviour and concretion replay on one corpus harness.
fn corpus_session(name: &str) -> (usize, usize) {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus(name), &pool).unwrap();
    let cfg = AnalysisConfig::for_harness(&h);
    let on = analyze(&pool, &h, &cfg);
    let off = analyze(&pool, &h, &AnalysisConfig { core_cache: false, ..cfg.clone() });
    assert_eq!(on.matrix.pairs, off.matrix.pairs, "{name}");
    assert_eq!(on.matrix.unknown, off.matrix.unknown, "{name}");
    assert!(on.matrix.stats.sat_queries_issued < off.matrix.stats.sat_queries_issued, "{name}");
    assert!(on.matrix.stats.cache_hits > 0, "{name}");

    let solver = Solver::default();
    for core in &on.cores {
        assert!(solver.is_sat(&pool, core).is_unsat());
        let triggered = on.left.pairable().any(|l| {
            on.right
                .pairable()
                .any(|r| core.is_subset_of(&joint(&l.constraints, &r.constraints)))
        });
        assert!(triggered);
    }
    for l in on.left.pairable() {
        for r in on.right.pairable() {
            let fwd = compatible(&pool, &solver, l, r, &CoreCache::disabled()).0;
            let back = compatible(&pool, &solver, r, l, &CoreCache::disabled()).0;
            assert_eq!(fwd, back);
            assert_eq!(fwd == Compat::Compatible, on.matrix.pairs.contains(&(l.node, r.node)));
        }
    }

    let mut concretions = 0;
    for d in &on.diffs {
        let (lt, rt) = (on.left.terminal(d.left).unwrap(), on.right.terminal(d.right).unwrap());
        for target in &d.targets {
            if let TargetVerdict::Differs { concretions, .. } = &target.verdict {
                assert!(!concretions.is_empty());
                for c in concretions {
                    assert_ne!(c.left[&target.target], c.right[&target.target]);
                }
            }
        }
        assert!(!d.shared.is_empty());
        for c in d.concretions() {
            let all = joint(&lt.constraints, &rt.constraints);
            assert!(all.iter().all(|e| pool.eval_total(e, &c.inputs) == 1));
            for side in [Side::Left, Side::Right] {
                let out = replay(&h, side, &c.inputs);
                let t = if side == Side::Left { lt } else { rt };
                assert_eq!(Some(out.status), t.status.concrete());
                let values = if side == Side::Left { &c.left } else { &c.right };
                for (name, &v) in values {
                    let a = h.annotation(name).unwrap();
                    assert_eq!(twinsym::exec::concrete_annotation(&out, a, side), v);
                }
            }
            concretions += 1;
        }
    }
    (on.differing_pairs().len(), concretions)
}

#[test]
fn sort_versus_bubble_is_equal() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("sort.json"), &pool).unwrap();
    let a = analyze(&pool, &h, &AnalysisConfig::for_harness(&h));
    assert!(!a.diffs.is_empty());
    for d in &a.diffs {
        assert!(d.targets.iter().all(|t| t.target == "array" && t.verdict == TargetVerdict::ProvedEqual));
    }
    assert_eq!(corpus_session("sort.json").0, 0);
}

#[test]
fn seeded_bug_is_found() {
    let (differs, concretions) = corpus_session("sort_bug.json");
    assert!(differs >= 1);
    assert!(concretions >= differs);
}

#[test]
fn watch_sessions() {
    assert!(corpus_session("watch.json").0 >= 1);
    assert_eq!(corpus_session("watch_bounded.json").0, 0);
}

#[test]
fn parallel_pairing_matches() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("watch.json"), &pool).unwrap();
    let cfg = AnalysisConfig::for_harness(&h);
    let one = analyze(&pool, &h, &cfg);
    let four = analyze(&pool, &h, &AnalysisConfig { workers: 4, ..cfg });
    assert_eq!(one.matrix.pairs, four.matrix.pairs);
    assert_eq!(one.diffs, four.diffs);
}
