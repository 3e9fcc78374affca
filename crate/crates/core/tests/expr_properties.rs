mod common;

use std::collections::{BTreeMap, BTreeSet};

use contact_sr_core::expr::parse::parse_raw;
use contact_sr_core::expr::{
    differentiate, parse_expr, parse_expr_with, prob_is_zero, simplify, solve_linear, Binding, DomainBox, Expr,
    ZeroTester,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn xyz_box() -> DomainBox {
    let mut d = DomainBox::new();
    for v in common::VARS {
        d.insert(v, -1.5, 1.5).unwrap();
    }
    d
}

/// Five-point central difference with step `h`.
fn central_difference(e: &Expr, b: &Binding, var: &str, h: f64) -> f64 {
    let x = b[var];
    let at = |t: f64| {
        let mut b = b.clone();
        b.insert(var.to_string(), t);
        e.eval(&b).unwrap()
    };
    (at(x - 2.0 * h) - 8.0 * at(x - h) + 8.0 * at(x + h) - at(x + 2.0 * h)) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_finite_difference(src in common::source(), seed in any::<u64>(), k in 0usize..3) {
        let e = parse_expr(&src).unwrap();
        let var = common::VARS[k];
        let b = common::binding(seed);
        let exact = differentiate(&e, var).eval(&b).unwrap();
        let h = 1e-3 * (1.0 + b[var].abs());
        let approx = central_difference(&e, &b, var, h);
        // Two step sizes that disagree mean the oracle itself is unresolved here.
        let coarse = central_difference(&e, &b, var, 2.0 * h);
        prop_assume!((approx - coarse).abs() <= 1e-5 * (1.0 + approx.abs()));
        prop_assert!((exact - approx).abs() <= 1e-6 * (1.0 + exact.abs()), "{src}: {exact} vs {approx}");
    }

    #[test]
    fn simplify_preserves_value(src in common::source(), seed in any::<u64>()) {
        let raw = parse_raw(&src).unwrap();
        let s = simplify(&raw);
        let b = common::binding(seed);
        let (a, c) = (raw.eval(&b).unwrap(), s.eval(&b).unwrap());
        prop_assert!((a - c).abs() <= 1e-12 * (1.0 + a.abs()), "{src}: {a} vs {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simplify_is_idempotent(src in common::source()) {
        let once = simplify(&parse_raw(&src).unwrap());
        prop_assert_eq!(simplify(&once), once);
    }

    #[test]
    fn serialization_round_trips(src in common::source()) {
        let e = parse_expr(&src).unwrap();
        let text = e.to_string();
        prop_assert_eq!(parse_expr(&text).unwrap(), e, "{}", text);
    }

    #[test]
    fn zero_test_is_sound(a in common::source(), b in common::source(), c in common::source(), kind in 0usize..4) {
        let src = match kind {
            0 => format!("({a})*(({b}) + ({c})) - ({a})*({b}) - ({a})*({c})"),
            1 => format!("({a})*(sin({b})^2 + cos({b})^2) - ({a})"),
            2 => format!("cos(2*({b})) - cos({b})^2 + sin({b})^2 + 0*({c})"),
            _ => format!("({a}) - ({b})"),
        };
        let e = parse_expr(&src).unwrap();
        let d = xyz_box();
        let verdict = prob_is_zero(&e, &d).unwrap();
        if kind < 3 {
            prop_assert!(verdict, "{src}");
        }
        if verdict {
            let fresh = ZeroTester::new(d).with_seed(0xF2E5_4A11).bindings(1000, 99);
            for b in fresh {
                let v = e.eval(&b).unwrap();
                let scale = e.terms().iter().map(|t| t.eval(&b).unwrap().abs()).fold(0.0, f64::max);
                prop_assert!(v.abs() <= 1e-6 * (1.0 + scale), "{src}: {v}");
            }
        }
    }
}

/// Random affine system: `rows` equations in `cols` unknowns with symbolic
/// coefficients in `a, b`. Some rows are combinations of earlier ones, some
/// of those with a perturbed constant.
fn affine_system(seed: u64) -> (Vec<Expr>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=6);
    let cols = rng.random_range(1..=6);
    let unknowns: Vec<String> = (0..cols).map(|j| format!("X{j}")).collect();
    let params: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
    let atoms = ["0", "1", "-2", "3/2", "a", "b", "a*b", "1 + a", "a - b^2", "sin(a)"];
    let mut eqs: Vec<Expr> = Vec::new();
    for _ in 0..rows {
        if !eqs.is_empty() && rng.random_bool(0.3) {
            let i = rng.random_range(0..eqs.len());
            let j = rng.random_range(0..eqs.len());
            let k = parse_expr_with(atoms[rng.random_range(1..atoms.len())], &params).unwrap();
            let mut e = &eqs[i] + k * &eqs[j];
            if rng.random_bool(0.5) {
                e = e + parse_expr_with(atoms[rng.random_range(4..atoms.len())], &params).unwrap();
            }
            eqs.push(e);
            continue;
        }
        let mut terms = vec![parse_expr_with(atoms[rng.random_range(0..atoms.len())], &params).unwrap()];
        for u in &unknowns {
            if rng.random_bool(0.5) {
                continue;
            }
            let c = parse_expr_with(atoms[rng.random_range(0..atoms.len())], &params).unwrap();
            terms.push(c * Expr::var(u));
        }
        eqs.push(Expr::sum(terms));
    }
    (eqs, unknowns)
}

#[test]
fn solve_linear_back_substitutes() {
    let mut domain = DomainBox::new().with("a", 0.3, 1.7).unwrap().with("b", 0.2, 1.9).unwrap();
    for j in 0..6 {
        domain.insert(&format!("X{j}"), -2.0, 2.0).unwrap();
    }
    let tester = ZeroTester::new(domain);
    let mut with_residuals = 0;
    let mut with_free = 0;
    for seed in 0..200 {
        let (eqs, unknowns) = affine_system(seed);
        let sol = match solve_linear(&eqs, &unknowns, &tester) {
            Ok(s) => s,
            Err(contact_sr_core::expr::ExprError::InconsistentSystem { .. }) => continue,
            Err(e) => panic!("seed {seed}: {e}"),
        };
        with_residuals += usize::from(!sol.residuals.is_empty());
        with_free += usize::from(!sol.free.is_empty());
        let solved: BTreeMap<String, Expr> = sol.solved_map();
        for (i, eq) in eqs.iter().enumerate() {
            let back = eq.substitute(&solved);
            if tester.is_zero(&back).unwrap() {
                continue;
            }
            let r = sol
                .residuals
                .iter()
                .find(|r| r.source == i)
                .unwrap_or_else(|| panic!("seed {seed}: equation {i} neither vanishes nor is a residual: {back}"));
            let at = tester.bindings(1, seed).remove(0);
            let factor = back.eval(&at).unwrap() / r.expr.eval(&at).unwrap();
            assert!(factor.is_finite() && factor != 0.0);
            assert!(tester.is_zero(&(back - Expr::float(factor) * &r.expr)).unwrap(), "seed {seed}, equation {i}");
        }
    }
    assert!(with_residuals > 10 && with_free > 10, "{with_residuals} {with_free}");
}
