#![allow(dead_code)]

use std::collections::BTreeMap;

use contact_sr_core::expr::{parse_expr, Binding, Expr};
use contact_sr_core::geometry::LagrangianSystem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VARS: [&str; 3] = ["x", "y", "z"];

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("z".to_string()),
        (1i64..5).prop_map(|k| k.to_string()),
        (1i64..4, 2i64..5).prop_map(|(a, b)| format!("({a}/{b})")),
        Just("0.75".to_string()),
    ]
}

/// Source text of a random expression in `x, y, z` that is finite and
/// smooth everywhere.
pub fn source() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (1 + ({b})^2))")),
            (inner.clone(), 2i64..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.clone().prop_map(|a| format!("ln(2 + cos({a}))")),
            inner.clone().prop_map(|a| format!("-({a})")),
        ]
    })
}

pub fn binding(seed: u64) -> Binding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VARS.iter().map(|v| (v.to_string(), rng.random_range(-1.5..1.5))).collect()
}

/// A random expression with `x, y, z` renamed to `names`.
pub fn expr_in(names: [&'static str; 3]) -> impl Strategy<Value = Expr> {
    source().prop_map(move |src| {
        let map: BTreeMap<String, Expr> =
            VARS.iter().zip(names).map(|(v, n)| (v.to_string(), Expr::var(n))).collect();
        parse_expr(&src).unwrap().substitute(&map)
    })
}

pub fn pendulum(gamma: f64) -> LagrangianSystem {
    LagrangianSystem::parse(
        "pendulum",
        &["r", "theta", "lam"],
        "1/2*m*(vr^2 + r^2*vtheta^2) - m*g*r*(1-cos(theta)) + lam*(r-l) - gamma*z",
        &[("m", 1.0), ("l", 1.0), ("g", 9.81), ("gamma", gamma)],
    )
    .unwrap()
}

pub fn central_force(gamma: f64) -> LagrangianSystem {
    LagrangianSystem::parse(
        "central_force",
        &["q1", "q2", "q3"],
        "1/2*m*(v1^2 + v2^2 + v3^2) - 1/2*k*(q1^2 + q2^2 + q3^2) - gamma*z",
        &[("m", 1.5), ("k", 2.0), ("gamma", gamma)],
    )
    .unwrap()
}

pub fn cawley() -> LagrangianSystem {
    LagrangianSystem::parse("cawley", &["q1", "q2", "q3"], "v1*v3 + 1/2*q2*q3^2 - gamma*z", &[("gamma", 0.5)]).unwrap()
}

pub fn bind(pairs: &[(&str, f64)]) -> Binding {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
