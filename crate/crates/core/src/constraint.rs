// SPDX-License-Identifier: Apache-2.0

//! Infix constraint language used by harness assumptions and assertions.
//!
//! ```text
//! second < 60 & (month - 1) < 12
//! year <s 0x7fff | leap == 1
//! ```
//!
//! Operators, loosest first: `|`, `&`, comparisons (`==`, `!=`, `<`, `<=`,
//! `>`, `>=`, `<s`), `+` `-`, `*`. Comparisons are unsigned except `<s`.
//! `&` and `|` between two comparisons are logical; otherwise bitwise.
//! Literals take the width of the expression they meet.

use thiserror::Error;

use crate::expr::{mask, BinOp, ExprId, ExprPool};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("cannot infer a width for `{0}`")]
    NoWidth(String),
    #[error("width mismatch: {0}")]
    Width(String),
    #[error("literal {value} does not fit in {width} bits")]
    LiteralRange { value: u64, width: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(u64),
    Name(String),
    Op(&'static str),
    Open,
    Close,
}

const OPS: [&str; 12] = ["<s", "<=", ">=", "==", "!=", "<", ">", "&", "|", "+", "-", "*"];

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ConstraintError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '(' || c == ')' {
            out.push((i, if c == '(' { Tok::Open } else { Tok::Close }));
            i += 1;
            continue;
        }
        for op in OPS {
            if src[i..].starts_with(op) {
                // `<s` must not swallow the start of a name such as `<sec`
                if op == "<s" && bytes.get(i + 2).is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_') {
                    continue;
                }
                out.push((i, Tok::Op(op)));
                i += op.len();
                continue 'outer;
            }
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = src[start..i].replace('_', "");
            let value = if let Some(h) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
                u64::from_str_radix(h, 16)
            } else {
                text.parse()
            }
            .map_err(|_| ConstraintError::Syntax {
                col: start + 1,
                msg: format!("bad literal `{}`", &src[start..i]),
            })?;
            out.push((start, Tok::Num(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' {
                    i += 1;
                } else if b == b'[' {
                    match src[i..].find(']') {
                        Some(end) => i += end + 1,
                        None => {
                            return Err(ConstraintError::Syntax {
                                col: i + 1,
                                msg: "unclosed `[`".into(),
                            })
                        }
                    }
                } else {
                    break;
                }
            }
            out.push((start, Tok::Name(src[start..i].to_string())));
            continue;
        }
        return Err(ConstraintError::Syntax {
            col: i + 1,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Ast {
    Num(u64),
    Name(String),
    Bin(&'static str, Box<Ast>, Box<Ast>),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<&'static str> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Op(o))) => Some(o),
            _ => None,
        }
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(c, _)| c + 1).unwrap_or(self.len + 1)
    }

    fn level(&mut self, ops: &[&[&'static str]]) -> Result<Ast, ConstraintError> {
        let Some((first, rest)) = ops.split_first() else {
            return self.atom();
        };
        let mut lhs = self.level(rest)?;
        while let Some(op) = self.peek_op().filter(|o| first.contains(o)) {
            self.pos += 1;
            let rhs = self.level(rest)?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn expr(&mut self) -> Result<Ast, ConstraintError> {
        self.level(&[&["|"], &["&"], &["==", "!=", "<", "<=", ">", ">=", "<s"], &["+", "-"], &["*"]])
    }

    fn atom(&mut self) -> Result<Ast, ConstraintError> {
        let col = self.col();
        let tok = self.toks.get(self.pos).cloned();
        self.pos += 1;
        match tok {
            Some((_, Tok::Num(v))) => Ok(Ast::Num(v)),
            Some((_, Tok::Name(n))) => Ok(Ast::Name(n)),
            Some((_, Tok::Open)) => {
                let inner = self.expr()?;
                match self.toks.get(self.pos) {
                    Some((_, Tok::Close)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(ConstraintError::Syntax {
                        col: self.col(),
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Some((_, t)) => Err(ConstraintError::Syntax {
                col,
                msg: format!("unexpected {t:?}"),
            }),
            None => Err(ConstraintError::Syntax {
                col,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

fn is_comparison(op: &str) -> bool {
    matches!(op, "==" | "!=" | "<" | "<=" | ">" | ">=" | "<s")
}

struct Elab<'a, F> {
    pool: &'a ExprPool,
    resolve: F,
}

impl<F: Fn(&str) -> Option<ExprId>> Elab<'_, F> {
    /// Width the expression has on its own, if any name pins it.
    fn natural(&self, ast: &Ast) -> Result<Option<u32>, ConstraintError> {
        Ok(match ast {
            Ast::Num(_) => None,
            Ast::Name(n) => Some(self.pool.width((self.resolve)(n).ok_or_else(|| ConstraintError::UnknownName(n.clone()))?)),
            Ast::Bin(op, _, _) if is_comparison(op) => Some(1),
            Ast::Bin(_, a, b) => match self.natural(a)? {
                Some(w) => Some(w),
                None => self.natural(b)?,
            },
        })
    }

    fn build(&self, ast: &Ast, want: Option<u32>) -> Result<ExprId, ConstraintError> {
        let p = self.pool;
        match ast {
            Ast::Num(v) => {
                let w = want.ok_or_else(|| ConstraintError::NoWidth(v.to_string()))?;
                if *v > mask(w) {
                    return Err(ConstraintError::LiteralRange { value: *v, width: w });
                }
                Ok(p.constant(w, *v))
            }
            Ast::Name(n) => {
                let e = (self.resolve)(n).ok_or_else(|| ConstraintError::UnknownName(n.clone()))?;
                match want {
                    Some(w) if w != p.width(e) => Err(ConstraintError::Width(format!(
                        "`{n}` has {} bits where {w} are expected",
                        p.width(e)
                    ))),
                    _ => Ok(e),
                }
            }
            Ast::Bin(op, a, b) if is_comparison(op) => {
                let w = match (self.natural(a)?, self.natural(b)?) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(ConstraintError::Width(format!("`{op}` compares {x}-bit and {y}-bit values")))
                    }
                    (Some(x), _) | (_, Some(x)) => x,
                    (None, None) => return Err(ConstraintError::NoWidth(format!("comparison `{op}` of literals"))),
                };
                let (x, y) = (self.build(a, Some(w))?, self.build(b, Some(w))?);
                Ok(match *op {
                    "==" => p.mk_eq(x, y),
                    "!=" => p.mk_ne(x, y),
                    "<" => p.mk_bin(BinOp::Ult, x, y),
                    ">" => p.mk_bin(BinOp::Ult, y, x),
                    "<=" => p.mk_not(p.mk_bin(BinOp::Ult, y, x)),
                    ">=" => p.mk_not(p.mk_bin(BinOp::Ult, x, y)),
                    _ => p.mk_bin(BinOp::Slt, x, y),
                })
            }
            Ast::Bin(op, a, b) => {
                let w = match want {
                    Some(w) => w,
                    None => self.natural(ast)?.ok_or_else(|| ConstraintError::NoWidth(format!("`{op}` of literals")))?,
                };
                let (x, y) = (self.build(a, Some(w))?, self.build(b, Some(w))?);
                let bop = match *op {
                    "&" => BinOp::And,
                    "|" => BinOp::Or,
                    "+" => BinOp::Add,
                    "-" => BinOp::Sub,
                    _ => BinOp::Mul,
                };
                Ok(p.mk_bin(bop, x, y))
            }
        }
    }
}

/// Parses `src` into a width-1 constraint. A wider result means "nonzero".
pub fn parse_constraint(
    pool: &ExprPool,
    src: &str,
    resolve: impl Fn(&str) -> Option<ExprId>,
) -> Result<ExprId, ConstraintError> {
    let toks = lex(src)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        len: src.len(),
    };
    let ast = parser.expr()?;
    if parser.pos < parser.toks.len() {
        return Err(ConstraintError::Syntax {
            col: parser.col(),
            msg: "trailing input".into(),
        });
    }
    let elab = Elab { pool, resolve };
    let w = elab.natural(&ast)?.ok_or_else(|| ConstraintError::NoWidth(src.trim().to_string()))?;
    let e = elab.build(&ast, Some(w))?;
    Ok(if w == 1 { e } else { pool.mk_ne(e, pool.constant(w, 0)) })
}

/// Names referenced by `src`, in order of appearance.
pub fn referenced_names(src: &str) -> Result<Vec<String>, ConstraintError> {
    Ok(lex(src)?
        .into_iter()
        .filter_map(|(_, t)| match t {
            Tok::Name(n) => Some(n),
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Assignment;

    fn setup() -> (ExprPool, impl Fn(&str) -> Option<ExprId>) {
        let pool = ExprPool::new();
        let s = pool.var("second", 8).unwrap();
        let y = pool.var("year", 16).unwrap();
        let a = pool.var("array[0]", 8).unwrap();
        let r = move |n: &str| match n {
            "second" => Some(s),
            "year" => Some(y),
            "array[0]" => Some(a),
            _ => None,
        };
        (pool, r)
    }

    #[test]
    fn evaluates_like_the_infix_reading() {
        let (pool, r) = setup();
        let c = parse_constraint(&pool, "second < 60 & year >= 1970 & year <= 0x0FA0", &r).unwrap();
        for (s, y, expect) in [(59, 1970, 1), (60, 2000, 0), (0, 4000, 1), (0, 4001, 0), (10, 1969, 0)] {
            let a: Assignment = [("second".into(), s), ("year".into(), y)].into();
            assert_eq!(pool.eval(c, &a).unwrap(), expect, "{s} {y}");
        }
    }

    #[test]
    fn precedence_and_signed_compare() {
        let (pool, r) = setup();
        let c = parse_constraint(&pool, "second + 2 * 3 == 10", &r).unwrap();
        let a: Assignment = [("second".into(), 4)].into();
        assert_eq!(pool.eval(c, &a).unwrap(), 1);
        let c = parse_constraint(&pool, "second <s 0", &r).unwrap();
        let a: Assignment = [("second".into(), 200)].into();
        assert_eq!(pool.eval(c, &a).unwrap(), 1);
        let c = parse_constraint(&pool, "(second - 1) < 12", &r).unwrap();
        let a: Assignment = [("second".into(), 0)].into();
        assert_eq!(pool.eval(c, &a).unwrap(), 0);
    }

    #[test]
    fn bitwise_and_nonzero_result() {
        let (pool, r) = setup();
        let c = parse_constraint(&pool, "second & 3", &r).unwrap();
        assert_eq!(pool.width(c), 1);
        let a: Assignment = [("second".into(), 4)].into();
        assert_eq!(pool.eval(c, &a).unwrap(), 0);
    }

    #[test]
    fn bracketed_names() {
        let (pool, r) = setup();
        assert!(parse_constraint(&pool, "array[0] <= second", &r).is_ok());
        assert_eq!(referenced_names("array[0] <= second + 1").unwrap(), vec!["array[0]", "second"]);
    }

    #[test]
    fn errors() {
        let (pool, r) = setup();
        assert_eq!(
            parse_constraint(&pool, "minute < 60", &r),
            Err(ConstraintError::UnknownName("minute".into()))
        );
        assert!(matches!(parse_constraint(&pool, "second < 300", &r), Err(ConstraintError::LiteralRange { .. })));
        assert!(matches!(parse_constraint(&pool, "second < year", &r), Err(ConstraintError::Width(_))));
        assert!(matches!(parse_constraint(&pool, "1 < 2", &r), Err(ConstraintError::NoWidth(_))));
        assert!(matches!(parse_constraint(&pool, "second < (60", &r), Err(ConstraintError::Syntax { .. })));
        assert!(matches!(parse_constraint(&pool, "second ? 1", &r), Err(ConstraintError::Syntax { .. })));
    }
}
