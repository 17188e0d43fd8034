use std::path::PathBuf;

use twinsym::compare::TargetVerdict;
use twinsym::exec::{Harness, HarnessSpec, Side};
use twinsym::expr::{ExprId, ExprPool};
use twinsym::session::{analyze, export_session, view_for, AcceptFile, AnalysisConfig, Outcome, SessionDoc, SessionError, ViewDoc};
use twinsym::tree::{highlight, Relation};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn doc_for(name: &str, workers: usize) -> SessionDoc {
    let pool = ExprPool::new();
    let h = Harness::load(&corpus(name), &pool).unwrap();
    let cfg = AnalysisConfig {
        workers,
        ..AnalysisConfig::for_harness(&h)
    };
    let a = analyze(&pool, &h, &cfg);
    let view = view_for(&a, &[Relation::AnyDiff], 2).unwrap();
    export_session(&pool, &h, &a, view).unwrap()
}

#[test]
fn trivial_session() {
    let pool = ExprPool::new();
    let spec: HarnessSpec = serde_json::from_str(
        r#"{"left": "a.ir", "right": "b.ir",
            "annotations": [{"name": ["r"], "left": {"reg": "r"}, "right": {"reg": "r"}}]}"#,
    )
    .unwrap();
    let h = Harness::compile(spec, "reg r:8\nhalt\n", "reg r:8\nhalt\n", &pool).unwrap();
    let a = analyze(&pool, &h, &AnalysisConfig::for_harness(&h));
    let doc = export_session(&pool, &h, &a, ViewDoc::default()).unwrap();
    assert_eq!(doc.trees.left.nodes.len(), 1);
    assert_eq!(doc.trees.right.nodes.len(), 1);
    assert_eq!(doc.matrix.pairs.len(), 1);
    assert!(doc.diffs[0].targets.iter().all(|t| t.verdict == TargetVerdict::ProvedEqual));
    assert_eq!(doc.outcome, Outcome::Equal);
    let back = SessionDoc::from_json(&doc.to_json()).unwrap();
    assert_eq!(back, doc);
}

#[test]
fn export_round_trips_and_is_deterministic() {
    let doc = doc_for("sort_bug.json", 1);
    let text = doc.to_json();
    assert_eq!(SessionDoc::from_json(&text).unwrap(), doc);
    assert_eq!(doc_for("sort_bug.json", 1).to_json(), text);
    let differs = doc
        .diffs
        .iter()
        .flat_map(|d| &d.targets)
        .filter(|t| matches!(&t.verdict, TargetVerdict::Differs { concretions, .. } if !concretions.is_empty()))
        .count();
    assert!(differs >= 1);
    assert_eq!(doc.outcome, Outcome::Differs);
    for side in [Side::Left, Side::Right] {
        assert_eq!(&highlight(doc.trees.get(side)), doc.highlights.get(side));
    }
}

#[test]
fn parallel_run_gives_same_analysis() {
    let one = doc_for("watch.json", 1);
    let four = doc_for("watch.json", 4);
    assert_eq!(one.hash(), four.hash());
    assert_eq!(one.expressions, four.expressions);
    assert_eq!(one.diffs, four.diffs);
    assert_eq!(one.matrix.pairs, four.matrix.pairs);
}

#[test]
fn version_and_consistency_are_checked() {
    let doc = doc_for("watch_bounded.json", 1);
    let text = doc.to_json().replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert!(matches!(SessionDoc::from_json(&text), Err(SessionError::Version { found: 2 })));
    assert!(matches!(SessionDoc::from_json("{\"schema_version\": 1}"), Err(SessionError::Json(_))));

    let mut broken = doc.clone();
    broken.trees.left.nodes[0].delta.push(ExprId(1_000_000));
    let err = broken.check().unwrap_err().to_string();
    assert!(err.contains("#1000000"), "{err}");

    let mut broken = doc.clone();
    broken.matrix.pairs.insert((999, 0));
    assert!(broken.check().is_err());

    let mut broken = doc;
    broken.terminals.right.pop();
    assert!(broken.check().is_err());
}

#[test]
fn expression_table_is_topological() {
    let doc = doc_for("sort.json", 1);
    for e in &doc.expressions {
        assert!(e.node.starts_with('('));
    }
    let var = doc.expressions.iter().find(|e| e.node == "(var num_0 8)").unwrap();
    assert_eq!(var.text.as_deref(), Some("(var num_0 8)"));
}

#[test]
fn accept_file_round_trip() {
    let doc = doc_for("sort_bug.json", 1);
    let accept = AcceptFile {
        session: Some(doc.hash()),
        pairs: doc.differing_pairs(),
    };
    let text = accept.render();
    assert!(text.contains(&doc.hash()));
    assert_eq!(AcceptFile::parse(&text).unwrap(), accept);
    assert!(AcceptFile::parse("1,2\nnope\n").unwrap_err().contains("line 2"));
    let bare = AcceptFile::parse("# comment\n 3 , 4 \n").unwrap();
    assert_eq!(bare.session, None);
    assert_eq!(bare.pairs, [(3, 4)].into());
}

#[test]
fn document_rebuilds_its_harness() {
    let doc = doc_for("watch.json", 1);
    let pool = ExprPool::new();
    let h = doc.harness(&pool).unwrap();
    assert_eq!(h.annotations.len(), 6);
    assert_eq!(h.symbols.len(), 6);
}
