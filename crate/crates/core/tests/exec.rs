use std::path::PathBuf;

use twinsym::exec::{
    concrete_annotation, init_state, replay, resolve_annotation, resolve_location, run_all, ExecConfig, Exploration,
    Harness, HarnessSpec, Location, Side, Status,
};
use twinsym::expr::{Assignment, ExprPool};
use twinsym::ir::ConcreteStatus;
use twinsym::solver::{ClauseSet, Solver};
use twinsym::testing::all_assignments;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn harness(pool: &ExprPool, json: &str, left: &str, right: &str) -> Harness {
    let spec: HarnessSpec = serde_json::from_str(json).unwrap();
    Harness::compile(spec, left, right, pool).unwrap()
}

fn explore(pool: &ExprPool, h: &Harness, side: Side) -> Exploration {
    run_all(pool, h, side, &ExecConfig::default())
}

/// Every terminal agrees with the interpreter on sampled models.
fn check_soundness(pool: &ExprPool, h: &Harness, ex: &Exploration, samples: usize) -> usize {
    let solver = Solver::default();
    let mut checked = 0;
    for t in ex.pairable() {
        let models = solver.enumerate_models(pool, &t.constraints, &h.symbols, samples);
        assert!(!models.models.is_empty(), "leaf {} has no model", t.node);
        for m in &models.models {
            let out = replay(h, ex.side, m);
            assert_eq!(Some(out.status), t.status.concrete(), "leaf {} under {m:?}", t.node);
            assert_eq!(out.instr_trace, t.trace, "leaf {} under {m:?}", t.node);
            let io: Vec<u64> = t.io.iter().map(|&e| pool.eval_total(e, m)).collect();
            assert_eq!(out.io_events, io, "leaf {}", t.node);
            for a in &h.annotations {
                let sym = pool.eval_total(resolve_annotation(pool, t, a, ex.side), m);
                assert_eq!(concrete_annotation(&out, a, ex.side), sym, "{} at leaf {}", a.display, t.node);
            }
            checked += 1;
        }
    }
    checked
}

fn check_tree_shape(pool: &ExprPool, ex: &Exploration) {
    let solver = Solver::default();
    let tree = &ex.tree;
    for n in &tree.nodes {
        assert_eq!(tree.nodes[n.id].id, n.id);
        if let Some(p) = n.parent {
            assert!(p < n.id);
            assert!(tree.constraints(p).is_subset_of(&tree.constraints(n.id)));
        }
        if n.children.len() == 2 {
            let a = &tree.nodes[n.children[0]].delta;
            let b = &tree.nodes[n.children[1]].delta;
            let mut joint = ClauseSet::new();
            for &c in a.iter().chain(b) {
                joint.insert(c);
            }
            assert!(solver.is_sat(pool, &joint).is_unsat(), "siblings of node {} overlap", n.id);
        }
        assert_eq!(n.children.is_empty(), n.status.is_some());
    }
    for t in &ex.terminals {
        assert_eq!(t.constraints, tree.constraints(t.node));
        assert_eq!(tree.nodes[t.node].status, Some(t.status));
    }
}

const ONE_SYMBOL: &str = r#"{
  "left": "l.ir", "right": "r.ir",
  "symbols": [{"name": "x", "width": 8}],
  "placements": {"left": {"x": {"mem": 0}}, "right": {"x": {"mem": 0}}},
  "annotations": [{"name": ["out"], "left": {"mem": 1}, "right": {"mem": 1}}]
}"#;

#[test]
fn straight_line_is_one_path() {
    let pool = ExprPool::new();
    let src = "reg a:8\nload.8 a, [0]\nadd a, a, 3\nstore.8 [1], a\nhalt\n";
    let h = harness(&pool, ONE_SYMBOL, src, src);
    let ex = explore(&pool, &h, Side::Left);
    assert_eq!(ex.terminals.len(), 1);
    assert_eq!(ex.terminals[0].status, Status::Finished);
    assert_eq!(ex.tree.nodes.len(), 1);
    assert_eq!(check_soundness(&pool, &h, &ex, 3), 3);
}

#[test]
fn symbolic_branch_gives_two_complementary_leaves() {
    let pool = ExprPool::new();
    let src = "reg a:8, t:1\nload.8 a, [0]\ncmp_ult t, a, 10\nbr t, small\nstore.8 [1], a\nsmall: halt\n";
    let h = harness(&pool, ONE_SYMBOL, src, src);
    let ex = explore(&pool, &h, Side::Left);
    assert_eq!(ex.terminals.len(), 2);
    let (a, b) = (&ex.terminals[0].constraints, &ex.terminals[1].constraints);
    assert_eq!(a.len(), 1);
    assert_eq!(b.len(), 1);
    assert_eq!(pool.mk_not(a.as_slice()[0]), b.as_slice()[0]);
    assert_eq!(pool.free_vars(a.as_slice()[0]), [("x".to_string(), 8)].into());
    check_tree_shape(&pool, &ex);
    check_soundness(&pool, &h, &ex, 3);
}

#[test]
fn trap_add_splits_and_wrap_add_does_not() {
    let pool = ExprPool::new();
    let json = r#"{
      "left": "l.ir", "right": "r.ir",
      "symbols": [{"name": "x", "width": 8}, {"name": "y", "width": 8}],
      "placements": {"left": {"x": {"reg": "a"}, "y": {"reg": "b"}}, "right": {"x": {"reg": "a"}, "y": {"reg": "b"}}},
      "annotations": [{"name": ["sum"], "left": {"reg": "a"}, "right": {"reg": "a"}}]
    }"#;
    let body = "reg a:8, b:8\nadd a, a, b\nhalt\n";
    let h = harness(&pool, json, &format!("mode wrap\n{body}"), &format!("mode trap\n{body}"));
    let wrap = explore(&pool, &h, Side::Left);
    assert_eq!(wrap.terminals.len(), 1);
    let trap = explore(&pool, &h, Side::Right);
    let statuses: Vec<Status> = trap.terminals.iter().map(|t| t.status).collect();
    assert_eq!(statuses, vec![Status::TrapOverflow, Status::Finished]);
    check_tree_shape(&pool, &trap);
    check_soundness(&pool, &h, &trap, 5);
    check_soundness(&pool, &h, &wrap, 5);
}

#[test]
fn symbolic_address_terminates() {
    let pool = ExprPool::new();
    let src = "reg a:8, v:8\nload.8 a, [0]\nload.8 v, [a + 1]\nhalt\n";
    let h = harness(&pool, ONE_SYMBOL, src, src);
    let ex = explore(&pool, &h, Side::Left);
    assert_eq!(ex.terminals.len(), 1);
    assert_eq!(ex.terminals[0].status, Status::SymbolicAddress);
}

#[test]
fn symbols_share_ids_across_sides() {
    let pool = ExprPool::new();
    let json = r#"{
      "left": "l.ir", "right": "r.ir",
      "symbols": [{"name": "n", "width": 8}],
      "placements": {"left": {"n": {"mem": 100}}, "right": {"n": {"mem": 200}}},
      "assumptions": ["n < 4000"]
    }"#;
    let src = "reg a:8\nhalt\n";
    let err = Harness::compile(serde_json::from_str(json).unwrap(), src, src, &pool).unwrap_err();
    assert!(err.to_string().contains("4000"), "{err}");

    let h = harness(&pool, &json.replace("4000", "40"), src, src);
    let l = init_state(&pool, &h, Side::Left);
    let r = init_state(&pool, &h, Side::Right);
    assert_eq!(l.mem[&100], r.mem[&200]);
    assert_eq!(l.mem[&100], pool.var("n", 8).unwrap());
    assert_eq!(l.mem.len(), 1);
    assert_eq!(l.constraints.len(), 1);
    assert_eq!(pool.render(l.constraints.as_slice()[0]), "(ult (var n 8) (const 8 40))");
}

#[test]
fn annotations_read_little_endian() {
    let pool = ExprPool::new();
    let json = r#"{
      "left": "l.ir", "right": "r.ir",
      "annotations": [{"name": ["word"], "left": {"mem": 8, "len": 4}, "right": {"reg": "w"}}]
    }"#;
    let src = "reg w:32, b:8\nconst b, 13\nstore.8 [8], b\nconst b, 12\nstore.8 [9], b\nconst b, 11\nstore.8 [10], b\nconst b, 10\nstore.8 [11], b\nload.32 w, [8]\nhalt\n";
    let h = harness(&pool, json, src, src);
    let a = &h.annotations[0];
    for side in [Side::Left, Side::Right] {
        let ex = explore(&pool, &h, side);
        let v = resolve_annotation(&pool, &ex.terminals[0], a, side);
        assert_eq!(pool.const_value(v), Some(0x0A0B_0C0D));
    }
    let ex = explore(&pool, &h, Side::Left);
    let untouched = resolve_location(&pool, &ex.terminals[0].regs, &ex.terminals[0].mem, &Location::Mem { mem: 500, len: Some(2) }, 2);
    assert_eq!(pool.const_value(untouched), Some(0));
}

#[test]
fn division_by_symbolic_zero_splits() {
    let pool = ExprPool::new();
    let src = "reg a:8, q:8\nload.8 a, [0]\nconst q, 100\nudiv q, q, a\nstore.8 [1], q\nhalt\n";
    let h = harness(&pool, ONE_SYMBOL, src, src);
    let ex = explore(&pool, &h, Side::Left);
    let statuses: Vec<Status> = ex.terminals.iter().map(|t| t.status).collect();
    assert_eq!(statuses, vec![Status::DivByZero, Status::Finished]);
    check_tree_shape(&pool, &ex);
    check_soundness(&pool, &h, &ex, 4);
}

#[test]
fn assume_and_assert() {
    let pool = ExprPool::new();
    let src = "reg a:8, t:1\nload.8 a, [0]\ncmp_ult t, a, 10\nassume t\ncmp_ult t, a, 5\nassert t\nhalt\n";
    let h = harness(&pool, ONE_SYMBOL, src, src);
    let ex = explore(&pool, &h, Side::Left);
    let statuses: Vec<Status> = ex.terminals.iter().map(|t| t.status).collect();
    assert_eq!(statuses, vec![Status::Finished, Status::AssertFailed]);
    check_soundness(&pool, &h, &ex, 3);

    let src = "reg a:8, t:1\nload.8 a, [0]\ncmp_ult t, a, 10\nassume t\ncmp_ult t, 12, a\n";
    let src = src.replace("cmp_ult t, 12, a", "cmp_ult t, a, 12\nnot t, t\nassume t\nhalt");
    let h = harness(&pool, ONE_SYMBOL, &src, &src);
    let ex = explore(&pool, &h, Side::Left);
    assert_eq!(ex.terminals.len(), 1);
    assert_eq!(ex.terminals[0].status, Status::AssumeUnsat);
    assert_eq!(ex.pairable().count(), 0);
}

#[test]
fn harness_assertions_split_finished_states() {
    let pool = ExprPool::new();
    let json = ONE_SYMBOL.replace(r#""annotations""#, r#""assertions": ["out < 200"], "annotations""#);
    let src = "reg a:8\nload.8 a, [0]\nadd a, a, 100\nstore.8 [1], a\nhalt\n";
    let h = harness(&pool, &json, src, src);
    let ex = explore(&pool, &h, Side::Left);
    let statuses: Vec<Status> = ex.terminals.iter().map(|t| t.status).collect();
    assert_eq!(statuses, vec![Status::Finished, Status::AssertFailed]);
    check_soundness(&pool, &h, &ex, 5);
}

#[test]
fn loop_bound_is_reported() {
    let pool = ExprPool::new();
    let src = "reg a:8, t:1\nload.8 a, [0]\nloop: cmp_eq t, a, 0\nbr t, out\nsub a, a, 1\njmp loop\nout: halt\n";
    let mut spec: HarnessSpec = serde_json::from_str(ONE_SYMBOL).unwrap();
    spec.loop_bound = Some(4);
    let h = Harness::compile(spec, src, src, &pool).unwrap();
    let ex = explore(&pool, &h, Side::Left);
    let statuses: Vec<Status> = ex.terminals.iter().map(|t| t.status).collect();
    assert_eq!(statuses.iter().filter(|s| **s == Status::Finished).count(), 4);
    assert_eq!(statuses.last(), Some(&Status::LoopBoundExceeded));
    check_tree_shape(&pool, &ex);
    check_soundness(&pool, &h, &ex, 3);
}

#[test]
fn insertion_sort_has_one_back_edge() {
    let src = std::fs::read_to_string(corpus("insertion_sort.ir")).unwrap();
    let p = twinsym::ir::parse_program(&src).unwrap();
    let v = twinsym::ir::validate(&p);
    assert!(v.diagnostics.is_empty());
    assert_eq!(v.back_edges.len(), 1);
}

#[test]
fn insertion_sort_sorts_three() {
    let src = std::fs::read_to_string(corpus("insertion_sort.ir")).unwrap();
    let p = twinsym::ir::parse_program(&src).unwrap();
    let input = twinsym::ir::ConcreteInput {
        mem: [(0, 3), (16, 3), (17, 1), (18, 2)].into(),
        ..Default::default()
    };
    let out = twinsym::ir::interpret(&p, &input, 64);
    assert_eq!(out.status, ConcreteStatus::Finished);
    assert_eq!(out.read_mem(16, 3), 0x03_02_01);
}

#[test]
fn sort_corpus_paths_are_sound() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("sort_bug.json"), &pool).unwrap();
    for side in [Side::Left, Side::Right] {
        let ex = explore(&pool, &h, side);
        check_tree_shape(&pool, &ex);
        assert!(check_soundness(&pool, &h, &ex, 3) >= ex.terminals.len());
    }
}

#[test]
fn watch_corpus_paths_are_sound() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("watch.json"), &pool).unwrap();
    for side in [Side::Left, Side::Right] {
        let ex = explore(&pool, &h, side);
        check_tree_shape(&pool, &ex);
        check_soundness(&pool, &h, &ex, 3);
    }
}

#[test]
fn leaf_counts_are_pinned() {
    let pool = ExprPool::new();
    let mut spec: HarnessSpec = serde_json::from_str(&std::fs::read_to_string(corpus("sort.json")).unwrap()).unwrap();
    spec.assumptions = vec!["len == 3".into()];
    spec.annotations[0].left = Location::Mem { mem: 16, len: Some(3) };
    spec.annotations[0].right = Location::Mem { mem: 16, len: Some(3) };
    let read = |f: &str| std::fs::read_to_string(corpus(f)).unwrap();
    let h = Harness::compile(spec, &read("insertion_sort.ir"), &read("bubble_sort.ir"), &pool).unwrap();
    let l = explore(&pool, &h, Side::Left);
    let r = explore(&pool, &h, Side::Right);
    let finished = |ex: &Exploration| ex.terminals.iter().filter(|t| t.status == Status::Finished).count();
    assert_eq!(finished(&l), 6, "insertion");
    assert_eq!(finished(&r), 6, "bubble");
}

#[test]
fn workers_do_not_change_the_tree() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("watch.json"), &pool).unwrap();
    let one = explore(&pool, &h, Side::Right);
    let four = run_all(
        &pool,
        &h,
        Side::Right,
        &ExecConfig {
            workers: 4,
            ..Default::default()
        },
    );
    assert_eq!(one.tree, four.tree);
    assert_eq!(one.terminals, four.terminals);
}

#[test]
fn leaves_partition_small_input_space() {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus("probe.json"), &pool).unwrap();
    let vars = vec![("x".to_string(), 4), ("y".to_string(), 4)];
    for side in [Side::Left, Side::Right] {
        let ex = explore(&pool, &h, side);
        check_tree_shape(&pool, &ex);
        let mut seen_status = std::collections::BTreeSet::new();
        for m in all_assignments(&vars) {
            let m: Assignment = m;
            if m["x"] == 3 {
                continue;
            }
            let hits: Vec<_> = ex
                .retained()
                .filter(|t| t.constraints.iter().all(|c| pool.eval_total(c, &m) == 1))
                .collect();
            let out = replay(&h, side, &m);
            if out.status == ConcreteStatus::AssumeViolated {
                assert!(hits.is_empty());
                continue;
            }
            assert_eq!(hits.len(), 1, "{m:?} on {side:?}");
            let t = hits[0];
            assert_eq!(t.status.concrete(), Some(out.status), "{m:?}");
            assert_eq!(t.trace, out.instr_trace, "{m:?}");
            for a in &h.annotations {
                let sym = pool.eval_total(resolve_annotation(&pool, t, a, side), &m);
                assert_eq!(concrete_annotation(&out, a, side), sym);
            }
            seen_status.insert(format!("{:?}", out.status));
        }
        println!("{side:?}: {seen_status:?}");
    }
}
