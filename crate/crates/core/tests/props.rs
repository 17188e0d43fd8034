use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinsym::expr::{Assignment, ExprPool};
use twinsym::ir::{interpret, parse_program, print_program, validate, ConcreteInput, ConcreteStatus, Mode};
use twinsym::testing::{Compiled, ExprGen};

const DAGS_PER_CASE: usize = 50;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // 256 cases of 50 expressions each: 12800 random DAGs.
    #[test]
    fn simplify_preserves_value_and_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = ExprPool::new();
        let mut g = ExprGen::new(&pool, &mut rng, 3, 16, 40);
        let vars = g.vars.clone();
        let mut scratch = Vec::new();
        for _ in 0..DAGS_PER_CASE {
            let w = g.rng.gen_range(1..=16);
            let e = g.expr(w, 5);
            let s = pool.simplify(e);
            prop_assert_eq!(pool.width(s), w);
            prop_assert_eq!(pool.simplify(s), s);
            let oracle = Compiled::new(&pool, &[e]);
            for _ in 0..8 {
                let m: Assignment = vars.iter().map(|(n, w)| (n.clone(), g.rng.gen::<u64>() & twinsym::expr::mask(*w))).collect();
                let want = oracle.eval(&m, &mut scratch)[0];
                prop_assert_eq!(pool.eval_total(e, &m), want, "{}", pool.render(e));
                prop_assert_eq!(pool.eval_total(s, &m), want, "{} simplified to {}", pool.render(e), pool.render(s));
            }
        }
    }
}

const REGS: [&str; 4] = ["a", "b", "c", "d"];

fn reg() -> impl Strategy<Value = &'static str> {
    prop::sample::select(&REGS[..])
}

fn operand() -> impl Strategy<Value = String> {
    prop_oneof![reg().prop_map(String::from), (-8i64..=255).prop_map(|v| v.to_string())]
}

fn address() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..64).prop_map(|a| format!("[{a}]")),
        (reg(), -4i64..=60).prop_map(|(r, o)| match o {
            0 => format!("[{r}]"),
            o if o < 0 => format!("[{r} - {}]", -o),
            o => format!("[{r} + {o}]"),
        }),
    ]
}

fn instr(labels: usize) -> impl Strategy<Value = String> {
    let arith = prop::sample::select(vec!["add", "sub", "mul", "udiv", "urem", "and", "or", "xor", "shl", "lshr", "ashr"]);
    let cmp = prop::sample::select(vec!["cmp_eq", "cmp_ult", "cmp_slt"]);
    let label = (0..labels).prop_map(|l| format!("L{l}"));
    prop_oneof![
        (reg(), 0i64..=255).prop_map(|(d, v)| format!("const {d}, {v}")),
        (arith, reg(), reg(), operand()).prop_map(|(op, d, a, b)| format!("{op} {d}, {a}, {b}")),
        (reg(), reg()).prop_map(|(d, a)| format!("not {d}, {a}")),
        (cmp, reg(), reg(), operand()).prop_map(|(op, d, a, b)| format!("{op} {d}, {a}, {b}")),
        (reg(), reg(), reg(), reg()).prop_map(|(d, c, a, b)| format!("select {d}, {c}, {a}, {b}")),
        (reg(), label.clone()).prop_map(|(c, l)| format!("br {c}, {l}")),
        (reg(), label.clone(), label.clone()).prop_map(|(c, l, e)| format!("br {c}, {l}, {e}")),
        label.prop_map(|l| format!("jmp {l}")),
        (reg(), address()).prop_map(|(d, a)| format!("load.8 {d}, {a}")),
        (address(), reg()).prop_map(|(a, s)| format!("store.8 {a}, {s}")),
        reg().prop_map(|s| format!("observe {s}")),
        reg().prop_map(|s| format!("assume {s}")),
        reg().prop_map(|s| format!("assert {s}")),
        Just("halt".to_string()),
    ]
}

/// Source text of a valid program with three labels at random positions.
fn program() -> impl Strategy<Value = String> {
    (prop::collection::vec(instr(3), 1..24), prop::collection::vec(0usize..24, 3)).prop_map(|(body, at)| {
        let mut text = String::from("program gen\nmode wrap\nreg a:8, b:8, c:8, d:8\n");
        for (i, ins) in body.iter().enumerate() {
            for (l, &pos) in at.iter().enumerate() {
                if pos % (body.len() + 1) == i {
                    text.push_str(&format!("L{l}:\n"));
                }
            }
            text.push_str(&format!("  {ins}\n"));
        }
        for (l, &pos) in at.iter().enumerate() {
            if pos % (body.len() + 1) == body.len() {
                text.push_str(&format!("L{l}:\n"));
            }
        }
        text
    })
}

fn input() -> impl Strategy<Value = ConcreteInput> {
    (prop::collection::btree_map(0u64..64, any::<u8>(), 0..16), prop::collection::vec(any::<u8>(), 4)).prop_map(|(mem, regs)| ConcreteInput {
        mem,
        regs: REGS.iter().zip(regs).map(|(r, v)| (r.to_string(), v as u64)).collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn print_parse_round_trip(src in program()) {
        let p = parse_program(&src).unwrap();
        prop_assert!(validate(&p).is_ok(), "{:?}", validate(&p).diagnostics);
        let printed = print_program(&p);
        let again = parse_program(&printed).unwrap();
        prop_assert_eq!(&again, &p);
        prop_assert_eq!(print_program(&again), printed);
    }

    #[test]
    fn interpret_is_deterministic(src in program(), inp in input(), bound in 1u32..6) {
        let p = parse_program(&src).unwrap();
        prop_assert_eq!(interpret(&p, &inp, bound), interpret(&p, &inp, bound));
    }

    #[test]
    fn wrap_and_trap_agree_without_overflow(src in program(), inp in input()) {
        let wrap = parse_program(&src).unwrap();
        let mut trap = wrap.clone();
        trap.mode = Mode::Trap;
        let w = interpret(&wrap, &inp, 4);
        let t = interpret(&trap, &inp, 4);
        if t.status == ConcreteStatus::TrapOverflow {
            prop_assert!(w.instr_trace.starts_with(&t.instr_trace));
        } else {
            prop_assert_eq!(w, t);
        }
    }
}
