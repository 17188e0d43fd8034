// SPDX-License-Identifier: Apache-2.0

//! Local, bottom-up rewriting of expressions.
//!
//! Rules never look at path constraints. Every rule either folds constants,
//! shrinks the node, or moves it into a canonical orientation (constants to
//! the right of commutative operators, otherwise ascending id), so rewriting
//! terminates and the result is a fixpoint.

use crate::expr::{fold_binary, mask, BinOp, ExprId, ExprPool, Node};

pub(crate) fn simplify_node(pool: &ExprPool, e: ExprId) -> ExprId {
    let node = pool.node(e);
    let width = pool.width(e);
    let rebuilt = match node {
        Node::Const { .. } | Node::Var { .. } => return e,
        Node::Not(a) => Node::Not(pool.simplify(a)),
        Node::Bin(op, a, b) => Node::Bin(op, pool.simplify(a), pool.simplify(b)),
        Node::Ite(c, t, f) => Node::Ite(pool.simplify(c), pool.simplify(t), pool.simplify(f)),
        Node::Zext(a, w) => Node::Zext(pool.simplify(a), w),
        Node::Sext(a, w) => Node::Sext(pool.simplify(a), w),
        Node::Extract { hi, lo, arg } => Node::Extract {
            hi,
            lo,
            arg: pool.simplify(arg),
        },
    };
    match rewrite(pool, rebuilt, width) {
        Some(Step::Done(id)) => id,
        Some(Step::Again(node)) => {
            let id = pool.intern_checked(node, width);
            pool.simplify(id)
        }
        None if rebuilt == node => e,
        None => pool.intern_checked(rebuilt, width),
    }
}

enum Step {
    /// Already simplified.
    Done(ExprId),
    /// Needs another round.
    Again(Node),
}

fn konst(pool: &ExprPool, width: u32, value: u64) -> Option<Step> {
    Some(Step::Done(pool.constant(width, value)))
}

fn rewrite(pool: &ExprPool, node: Node, width: u32) -> Option<Step> {
    let cval = |id: ExprId| pool.const_value(id);
    match node {
        Node::Const { .. } | Node::Var { .. } => None,
        Node::Not(a) => {
            if let Some(v) = cval(a) {
                return konst(pool, width, !v & mask(width));
            }
            if let Node::Not(inner) = pool.node(a) {
                return Some(Step::Done(inner));
            }
            None
        }
        Node::Bin(op, a, b) => rewrite_binary(pool, op, a, b, width),
        Node::Ite(c, t, f) => {
            if let Some(v) = cval(c) {
                return Some(Step::Done(if v != 0 { t } else { f }));
            }
            if t == f {
                return Some(Step::Done(t));
            }
            if let Node::Not(inner) = pool.node(c) {
                return Some(Step::Again(Node::Ite(inner, f, t)));
            }
            if width == 1 {
                match (cval(t), cval(f)) {
                    (Some(1), Some(0)) => return Some(Step::Done(c)),
                    (Some(0), Some(1)) => return Some(Step::Again(Node::Not(c))),
                    _ => {}
                }
            }
            // ite(c, 1, 0) is how comparison results get widened
            if let (Some(1), Some(0)) = (cval(t), cval(f)) {
                return Some(Step::Again(Node::Zext(c, width)));
            }
            None
        }
        Node::Zext(a, w) => {
            let wa = pool.width(a);
            if w == wa {
                return Some(Step::Done(a));
            }
            if let Some(v) = cval(a) {
                return konst(pool, w, v);
            }
            if let Node::Zext(inner, _) = pool.node(a) {
                return Some(Step::Again(Node::Zext(inner, w)));
            }
            None
        }
        Node::Sext(a, w) => {
            let wa = pool.width(a);
            if w == wa {
                return Some(Step::Done(a));
            }
            if let Some(v) = cval(a) {
                let shift = 64 - wa;
                let ext = (((v << shift) as i64) >> shift) as u64;
                return konst(pool, w, ext);
            }
            None
        }
        Node::Extract { hi, lo, arg } => {
            let wa = pool.width(arg);
            if lo == 0 && hi + 1 == wa {
                return Some(Step::Done(arg));
            }
            if let Some(v) = cval(arg) {
                return konst(pool, width, (v >> lo) & mask(width));
            }
            match pool.node(arg) {
                Node::Extract {
                    lo: inner_lo,
                    arg: inner,
                    ..
                } => Some(Step::Again(Node::Extract {
                    hi: hi + inner_lo,
                    lo: lo + inner_lo,
                    arg: inner,
                })),
                Node::Bin(BinOp::Concat, high, low) => {
                    let wl = pool.width(low);
                    if hi < wl {
                        Some(Step::Again(Node::Extract { hi, lo, arg: low }))
                    } else if lo >= wl {
                        Some(Step::Again(Node::Extract {
                            hi: hi - wl,
                            lo: lo - wl,
                            arg: high,
                        }))
                    } else {
                        None
                    }
                }
                Node::Zext(inner, _) => {
                    let wi = pool.width(inner);
                    if hi < wi {
                        Some(Step::Again(Node::Extract { hi, lo, arg: inner }))
                    } else if lo >= wi {
                        konst(pool, width, 0)
                    } else if lo == 0 {
                        Some(Step::Again(Node::Zext(inner, width)))
                    } else {
                        None
                    }
                }
                _ => None,
            }
        }
    }
}

fn rewrite_binary(pool: &ExprPool, op: BinOp, a: ExprId, b: ExprId, width: u32) -> Option<Step> {
    let wa = pool.width(a);
    let ca = pool.const_value(a);
    let cb = pool.const_value(b);

    if let (Some(x), Some(y)) = (ca, cb) {
        return if op == BinOp::Concat {
            konst(pool, width, (x << pool.width(b)) | y)
        } else {
            konst(pool, width, fold_binary(op, wa, x, y))
        };
    }

    if op.is_commutative() {
        let swap = match (ca, cb) {
            (Some(_), None) => true,
            (None, Some(_)) => false,
            _ => a > b,
        };
        if swap {
            return Some(Step::Again(Node::Bin(op, b, a)));
        }
    }

    let m = mask(wa);
    let is_not_of = |x: ExprId, y: ExprId| matches!(pool.node(x), Node::Not(inner) if inner == y);

    match op {
        BinOp::Add => {
            if cb == Some(0) {
                return Some(Step::Done(a));
            }
            if let (Some(c2), Node::Bin(BinOp::Add, x, inner)) = (cb, pool.node(a)) {
                if let Some(c1) = pool.const_value(inner) {
                    let c = pool.constant(wa, c1.wrapping_add(c2));
                    return Some(Step::Again(Node::Bin(BinOp::Add, x, c)));
                }
            }
            None
        }
        BinOp::Sub => {
            if a == b {
                return konst(pool, width, 0);
            }
            if let Some(c) = cb {
                if c == 0 {
                    return Some(Step::Done(a));
                }
                let neg = pool.constant(wa, c.wrapping_neg());
                return Some(Step::Again(Node::Bin(BinOp::Add, a, neg)));
            }
            None
        }
        BinOp::Mul => match cb {
            Some(0) => konst(pool, width, 0),
            Some(1) => Some(Step::Done(a)),
            _ => None,
        },
        BinOp::Udiv => match cb {
            Some(1) => Some(Step::Done(a)),
            Some(c) if c.is_power_of_two() => {
                let k = pool.constant(wa, c.trailing_zeros() as u64);
                Some(Step::Again(Node::Bin(BinOp::Lshr, a, k)))
            }
            _ => None,
        },
        BinOp::Urem => match cb {
            Some(1) => konst(pool, width, 0),
            Some(c) if c.is_power_of_two() => {
                let low = pool.constant(wa, c - 1);
                Some(Step::Again(Node::Bin(BinOp::And, a, low)))
            }
            _ => None,
        },
        BinOp::And => {
            if cb == Some(0) || is_not_of(a, b) || is_not_of(b, a) {
                return konst(pool, width, 0);
            }
            if cb == Some(m) || a == b {
                return Some(Step::Done(a));
            }
            None
        }
        BinOp::Or => {
            if cb == Some(m) || is_not_of(a, b) || is_not_of(b, a) {
                return konst(pool, width, m);
            }
            if cb == Some(0) || a == b {
                return Some(Step::Done(a));
            }
            None
        }
        BinOp::Xor => {
            if a == b {
                return konst(pool, width, 0);
            }
            if cb == Some(0) {
                return Some(Step::Done(a));
            }
            if cb == Some(m) {
                return Some(Step::Again(Node::Not(a)));
            }
            None
        }
        BinOp::Shl | BinOp::Lshr | BinOp::Ashr => {
            if cb == Some(0) {
                return Some(Step::Done(a));
            }
            if ca == Some(0) {
                return konst(pool, width, 0);
            }
            if op != BinOp::Ashr && matches!(cb, Some(c) if c >= wa as u64) {
                return konst(pool, width, 0);
            }
            None
        }
        BinOp::Eq => {
            if a == b {
                return konst(pool, 1, 1);
            }
            if let Some(c) = cb {
                if wa == 1 {
                    return Some(if c == 1 {
                        Step::Done(a)
                    } else {
                        Step::Again(Node::Not(a))
                    });
                }
                match pool.node(a) {
                    Node::Zext(inner, _) => {
                        let wi = pool.width(inner);
                        if c > mask(wi) {
                            return konst(pool, 1, 0);
                        }
                        let narrowed = pool.constant(wi, c);
                        return Some(Step::Again(Node::Bin(BinOp::Eq, inner, narrowed)));
                    }
                    Node::Bin(BinOp::Add, x, inner) => {
                        if let Some(c1) = pool.const_value(inner) {
                            let moved = pool.constant(wa, c.wrapping_sub(c1));
                            return Some(Step::Again(Node::Bin(BinOp::Eq, x, moved)));
                        }
                    }
                    _ => {}
                }
            }
            if let (Node::Zext(x, _), Node::Zext(y, _)) = (pool.node(a), pool.node(b)) {
                if pool.width(x) == pool.width(y) {
                    return Some(Step::Again(Node::Bin(BinOp::Eq, x, y)));
                }
            }
            None
        }
        BinOp::Ult => {
            if a == b || cb == Some(0) || ca == Some(m) {
                return konst(pool, 1, 0);
            }
            if let (Node::Zext(x, _), Node::Zext(y, _)) = (pool.node(a), pool.node(b)) {
                if pool.width(x) == pool.width(y) {
                    return Some(Step::Again(Node::Bin(BinOp::Ult, x, y)));
                }
            }
            None
        }
        BinOp::Slt => {
            if a == b {
                return konst(pool, 1, 0);
            }
            None
        }
        BinOp::Concat => {
            if let (
                Node::Extract {
                    hi: h1,
                    lo: l1,
                    arg: x,
                },
                Node::Extract {
                    hi: h2,
                    lo: l2,
                    arg: y,
                },
            ) = (pool.node(a), pool.node(b))
            {
                if x == y && l1 == h2 + 1 {
                    return Some(Step::Again(Node::Extract {
                        hi: h1,
                        lo: l2,
                        arg: x,
                    }));
                }
            }
            if ca == Some(0) {
                return match pool.node(b) {
                    Node::Zext(inner, _) => Some(Step::Again(Node::Zext(inner, width))),
                    _ => Some(Step::Again(Node::Zext(b, width))),
                };
            }
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{Assignment, BinOp, ExprPool, Node};

    #[test]
    fn modular_constant_fold() {
        let pool = ExprPool::new();
        let a = pool.constant(8, 255);
        let b = pool.constant(8, 1);
        let e = pool.binary(BinOp::Add, a, b).unwrap();
        let s = pool.simplify(e);
        assert_eq!(pool.node(s), Node::Const { width: 8, value: 0 });
    }

    #[test]
    fn xor_self_is_zero() {
        let pool = ExprPool::new();
        let x = pool.var("x", 16).unwrap();
        let e = pool.binary(BinOp::Xor, x, x).unwrap();
        assert_eq!(pool.simplify(e), pool.constant(16, 0));
    }

    #[test]
    fn ite_on_true_picks_then_arm() {
        let pool = ExprPool::new();
        let one = pool.constant(1, 1);
        let cond = pool.binary(BinOp::Eq, one, one).unwrap();
        let a = pool.var("a", 8).unwrap();
        let b = pool.var("b", 8).unwrap();
        let e = pool.ite(cond, a, b).unwrap();
        assert_eq!(pool.simplify(e), a);
    }

    #[test]
    fn identities() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        let zero = pool.constant(8, 0);
        let one = pool.constant(8, 1);
        let add0 = pool.binary(BinOp::Add, x, zero).unwrap();
        let mul1 = pool.binary(BinOp::Mul, x, one).unwrap();
        assert_eq!(pool.simplify(add0), x);
        assert_eq!(pool.simplify(mul1), x);
        let c1 = pool.constant(8, 3);
        let c2 = pool.constant(8, 3);
        let eq = pool.binary(BinOp::Eq, c1, c2).unwrap();
        assert_eq!(pool.simplify(eq), pool.true_());
    }

    #[test]
    fn commutative_operands_are_canonical() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        let one = pool.constant(8, 1);
        let l = pool.binary(BinOp::Add, x, one).unwrap();
        let r = pool.binary(BinOp::Add, one, x).unwrap();
        assert_eq!(pool.simplify(l), pool.simplify(r));
    }

    #[test]
    fn byte_split_reassembles() {
        let pool = ExprPool::new();
        let x = pool.var("word", 32).unwrap();
        let bytes: Vec<_> = (0..4)
            .map(|i| pool.mk_extract(8 * i + 7, 8 * i, x))
            .collect();
        let mut acc = bytes[0];
        for &b in &bytes[1..] {
            acc = pool.mk_concat(b, acc);
        }
        assert_eq!(acc, x);
    }

    #[test]
    fn branch_condition_on_widened_compare_collapses() {
        let pool = ExprPool::new();
        let x = pool.var("x", 8).unwrap();
        let y = pool.var("y", 8).unwrap();
        let p = pool.mk_bin(BinOp::Ult, x, y);
        let wide = pool.mk_zext(p, 32);
        let zero = pool.constant(32, 0);
        assert_eq!(pool.mk_ne(wide, zero), p);
        let taken_not = pool.mk_eq(wide, zero);
        assert_eq!(pool.node(taken_not), Node::Not(p));
    }

    #[test]
    fn little_endian_bytes_fold() {
        let pool = ExprPool::new();
        let bytes = [0x0D, 0x0C, 0x0B, 0x0A].map(|b| pool.constant(8, b));
        let mut acc = bytes[0];
        for &b in &bytes[1..] {
            acc = pool.mk_concat(b, acc);
        }
        assert_eq!(pool.const_value(acc), Some(0x0A0B0C0D));
    }

    #[test]
    fn power_of_two_remainder_becomes_mask() {
        let pool = ExprPool::new();
        let y = pool.var("year", 16).unwrap();
        let four = pool.constant(16, 4);
        let r = pool.mk_bin(BinOp::Urem, y, four);
        let three = pool.constant(16, 3);
        assert_eq!(r, pool.mk_bin(BinOp::And, y, three));
        let env: Assignment = [("year".to_string(), 2023)].into();
        assert_eq!(pool.eval(r, &env).unwrap(), 3);
    }
}
