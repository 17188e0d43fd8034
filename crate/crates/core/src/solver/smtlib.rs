// SPDX-License-Identifier: Apache-2.0

//! Bridge to an external SMT-LIB 2 solver over a child-process pipe.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::ClauseSet;
use crate::expr::{Assignment, BinOp, ExprId, ExprPool, Node};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Sat(Assignment),
    Unsat(ClauseSet),
    Unknown(String),
}

fn quote(name: &str) -> String {
    format!("|{name}|")
}

fn term(pool: &ExprPool, node: Node) -> String {
    let r = |e: ExprId| format!("e{}", e.0);
    match node {
        Node::Const { width, value } => format!("(_ bv{value} {width})"),
        Node::Var { sym, .. } => quote(&pool.sym_name(sym)),
        Node::Not(a) => format!("(bvnot {})", r(a)),
        Node::Bin(op, a, b) => {
            let f = match op {
                BinOp::Add => "bvadd",
                BinOp::Sub => "bvsub",
                BinOp::Mul => "bvmul",
                BinOp::Udiv => "bvudiv",
                BinOp::Urem => "bvurem",
                BinOp::And => "bvand",
                BinOp::Or => "bvor",
                BinOp::Xor => "bvxor",
                BinOp::Shl => "bvshl",
                BinOp::Lshr => "bvlshr",
                BinOp::Ashr => "bvashr",
                BinOp::Concat => "concat",
                BinOp::Eq => return format!("(ite (= {} {}) #b1 #b0)", r(a), r(b)),
                BinOp::Ult => return format!("(ite (bvult {} {}) #b1 #b0)", r(a), r(b)),
                BinOp::Slt => return format!("(ite (bvslt {} {}) #b1 #b0)", r(a), r(b)),
            };
            format!("({f} {} {})", r(a), r(b))
        }
        Node::Ite(c, t, e) => format!("(ite (= {} #b1) {} {})", r(c), r(t), r(e)),
        Node::Zext(a, w) => format!("((_ zero_extend {}) {})", w - pool.width(a), r(a)),
        Node::Sext(a, w) => format!("((_ sign_extend {}) {})", w - pool.width(a), r(a)),
        Node::Extract { hi, lo, arg } => format!("((_ extract {hi} {lo}) {})", r(arg)),
    }
}

/// The query script up to and including `(check-sat)`. Clause `i` of the set
/// is named `c{i}`.
pub fn script(pool: &ExprPool, clauses: &ClauseSet) -> String {
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n");
    out.push_str("(set-option :produce-unsat-cores true)\n");
    out.push_str("(set-logic QF_BV)\n");
    for (name, width) in pool.free_vars_all(clauses.iter()) {
        out.push_str(&format!("(declare-fun {} () (_ BitVec {width}))\n", quote(&name)));
    }
    for e in pool.reachable(clauses.iter()) {
        let node = pool.node(e);
        out.push_str(&format!(
            "(define-fun e{} () (_ BitVec {}) {})\n",
            e.0,
            pool.width(e),
            term(pool, node)
        ));
    }
    for (i, e) in clauses.iter().enumerate() {
        out.push_str(&format!("(assert (! (= e{} #b1) :named c{i}))\n", e.0));
    }
    out.push_str("(check-sat)\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Vec<Sexp> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                if stack.len() > 1 {
                    let done = stack.pop().unwrap();
                    stack.last_mut().unwrap().push(Sexp::List(done));
                }
            }
            '|' => {
                let mut atom = String::new();
                for d in chars.by_ref() {
                    if d == '|' {
                        break;
                    }
                    atom.push(d);
                }
                stack.last_mut().unwrap().push(Sexp::Atom(atom));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut atom = String::from(c);
                while let Some(&d) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' {
                        break;
                    }
                    atom.push(d);
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexp::Atom(atom));
            }
        }
    }
    while stack.len() > 1 {
        let done = stack.pop().unwrap();
        stack.last_mut().unwrap().push(Sexp::List(done));
    }
    stack.pop().unwrap()
}

fn bv_value(s: &Sexp) -> Option<u64> {
    match s {
        Sexp::Atom(a) => {
            if let Some(hex) = a.strip_prefix("#x") {
                u64::from_str_radix(hex, 16).ok()
            } else if let Some(bin) = a.strip_prefix("#b") {
                u64::from_str_radix(bin, 2).ok()
            } else {
                None
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(v), _] if u == "_" => v.strip_prefix("bv")?.parse().ok(),
            _ => None,
        },
    }
}

fn collect_model(s: &Sexp, out: &mut Assignment) {
    if let Sexp::List(items) = s {
        if let [Sexp::Atom(kw), Sexp::Atom(name), _, _, value] = items.as_slice() {
            if kw == "define-fun" {
                if let Some(v) = bv_value(value) {
                    out.insert(name.clone(), v);
                }
                return;
            }
        }
        for item in items {
            collect_model(item, out);
        }
    }
}

/// Parses a `(get-model)` response.
pub fn parse_model(text: &str) -> Assignment {
    let mut model = Assignment::new();
    for s in parse_sexps(text) {
        collect_model(&s, &mut model);
    }
    model
}

/// Parses a `(get-unsat-core)` response into clause positions.
pub fn parse_core(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for s in parse_sexps(text) {
        if let Sexp::List(items) = s {
            for item in items {
                if let Sexp::Atom(a) = item {
                    if let Some(i) = a.strip_prefix('c').and_then(|n| n.parse().ok()) {
                        out.push(i);
                    }
                }
            }
        }
    }
    out
}

fn balanced(text: &str) -> bool {
    let mut depth = 0i64;
    let mut seen = false;
    for c in text.chars() {
        match c {
            '(' => {
                depth += 1;
                seen = true;
            }
            ')' => depth -= 1,
            _ => {}
        }
    }
    seen && depth <= 0
}

/// Runs one query against the solver command `cmd`.
pub fn check(cmd: &[String], pool: &ExprPool, clauses: &ClauseSet, timeout: Duration) -> io::Result<Answer> {
    let (program, args) = cmd
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty solver command"))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });
    let deadline = Instant::now() + timeout;
    let next_line = || -> io::Result<String> {
        let left = deadline.saturating_duration_since(Instant::now());
        rx.recv_timeout(left)
            .map_err(|_| io::Error::new(io::ErrorKind::TimedOut, "no answer from solver"))
    };

    let result = (|| -> io::Result<Answer> {
        stdin.write_all(script(pool, clauses).as_bytes())?;
        stdin.flush()?;
        let verdict = loop {
            let line = next_line()?;
            let t = line.trim();
            if !t.is_empty() && t != "success" {
                break t.to_string();
            }
        };
        let follow_up = match verdict.as_str() {
            "sat" => "(get-model)\n",
            "unsat" => "(get-unsat-core)\n",
            other => return Ok(Answer::Unknown(format!("solver answered {other}"))),
        };
        stdin.write_all(follow_up.as_bytes())?;
        stdin.flush()?;
        let mut text = String::new();
        while !balanced(&text) {
            text.push_str(&next_line()?);
            text.push('\n');
        }
        if verdict == "sat" {
            let mut model = parse_model(&text);
            for (name, _) in pool.free_vars_all(clauses.iter()) {
                model.entry(name).or_insert(0);
            }
            Ok(Answer::Sat(model))
        } else {
            let ids = clauses.as_slice();
            let core = parse_core(&text)
                .into_iter()
                .filter_map(|i| ids.get(i).copied())
                .collect::<ClauseSet>();
            Ok(Answer::Unsat(core))
        }
    })();
    let _ = stdin.write_all(b"(exit)\n");
    drop(stdin);
    let _ = child.kill();
    let _ = child.wait();
    result
}
