//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p contact-sr --test acceptance`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use contact_sr::{derive, load_system, LoadedSystem};
use contact_sr_core::dynamics::{compare_formalisms, integrate, reduce, verify, Trajectory};
use contact_sr_core::expr::parse::parse_raw;
use contact_sr_core::expr::{
    differentiate, parse_expr, parse_expr_with, simplify, solve_linear, Binding, DomainBox, Expr, ExprError,
    ZeroTester,
};
use contact_sr_core::geometry::LagrangianSystem;
use contact_sr_core::unified::{
    build_unified, extract_primary_equations, project_to_hamiltonian, project_to_lagrangian, run_constraint_algorithm,
    run_on_space, UnifiedSolution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.sys"))
}

fn load(name: &str) -> LoadedSystem {
    load_system(&corpus(name), None).expect("corpus system loads")
}

/// Corpus system with one parameter replaced.
fn load_with_param(name: &str, param: &str, value: f64) -> LoadedSystem {
    let text = std::fs::read_to_string(corpus(name)).unwrap();
    let prefix = format!("param.{param} =");
    let text: String = text
        .lines()
        .map(|l| if l.starts_with(&prefix) { format!("{prefix} {value}\n") } else { format!("{l}\n") })
        .collect();
    let file = contact_sr::parse_system_file(&text).unwrap();
    contact_sr::sysfile::build_system(&corpus(name), file, None).unwrap()
}

fn solve(loaded: &LoadedSystem) -> UnifiedSolution {
    run_constraint_algorithm(&loaded.system).expect("derivation succeeds")
}

fn equal(sys: &LagrangianSystem, a: &Expr, b: &str) -> bool {
    sys.tester().equal(a, &sys.parse_expr(b).unwrap()).unwrap()
}

fn trajectory(loaded: &LoadedSystem, sol: &UnifiedSolution, t_final: f64, dt: f64) -> Trajectory {
    let rs = reduce(sol, &loaded.gauge).unwrap();
    integrate(&rs, &loaded.init, t_final, dt).unwrap()
}

fn pendulum_ladder() -> Outcome {
    let loaded = load("pendulum");
    let started = Instant::now();
    let sol = solve(&loaded);
    let elapsed = started.elapsed().as_secs_f64();
    let sys = &loaded.system;
    let expected: [&[&str]; 5] = [
        &["pr - m*vr", "ptheta - m*r^2*vtheta", "plam"],
        &["r - l"],
        &["vr"],
        &["lam - m*g*(1 - cos(theta)) + m*l*vtheta^2"],
        &["vlam - m*(3*g*vtheta*sin(theta) + 2*l*gamma*vtheta^2)"],
    ];
    let gens = &sol.ladder.generations;
    ensure(gens.len() == expected.len(), || format!("{} generations", gens.len()))?;
    for (k, (g, want)) in gens.iter().zip(expected).enumerate() {
        ensure(g.constraints.len() == want.len(), || format!("W{} has {} constraints", k + 1, g.constraints.len()))?;
        for (c, w) in g.constraints.iter().zip(want) {
            ensure(equal(sys, &c.expr, w), || format!("W{}: `{}` vs `{w}`", k + 1, c.expr))?;
        }
    }
    ensure(sol.free_unknowns().is_empty(), || format!("free unknowns {:?}", sol.free_unknowns()))?;
    ensure(elapsed < 5.0, || format!("derivation took {elapsed:.2} s"))?;
    Ok(format!("5 generations matched, no free unknowns, {elapsed:.3} s"))
}

fn pendulum_equation_of_motion() -> Outcome {
    let loaded = load("pendulum");
    let sol = solve(&loaded);
    let rs = reduce(&sol, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let k = rs.independent.iter().position(|c| c == "vtheta").ok_or("vtheta is not independent")?;
    let residual = &rs.rhs[k] + loaded.system.parse_expr("g/l*sin(theta) + gamma*vtheta").unwrap();
    ensure(sol.tester().is_zero(&residual).unwrap(), || format!("vtheta' = {}", rs.rhs[k]))?;
    Ok(format!("vtheta' = {}", rs.rhs[k]))
}

fn central_force() -> Outcome {
    let loaded = load("central_force");
    let sol = solve(&loaded);
    let sys = &loaded.system;
    ensure(sol.ladder.final_index() == 1 && sol.passes == 1, || {
        format!("final at W{} after {} passes", sol.ladder.final_index(), sol.passes)
    })?;
    let t = sol.tester();
    let field = sol.resolved_field();
    for i in 1..=3 {
        // U(r) = k r^2 / 2, so U'(r)/r = k
        let want = sys.parse_expr(&format!("-(1/m)*(gamma*p{i} + k*q{i})")).unwrap();
        let got = field.component(&format!("v{i}")).unwrap();
        ensure(t.equal(&sol.chain.apply(got), &sol.chain.apply(&want)).unwrap(), || format!("F{i} = {got}"))?;
    }
    let xl = project_to_lagrangian(&sol);
    let xh = project_to_hamiltonian(&sol).map_err(|e| e.to_string())?.field;
    let mut expected_l: Vec<(String, String)> = Vec::new();
    let mut expected_h: Vec<(String, String)> = Vec::new();
    for i in 1..=3 {
        expected_l.push((format!("q{i}"), format!("v{i}")));
        expected_l.push((format!("v{i}"), format!("-(gamma*v{i} + k/m*q{i})")));
        expected_h.push((format!("q{i}"), format!("p{i}/m")));
        expected_h.push((format!("p{i}"), format!("-(gamma*p{i} + k*q{i})")));
    }
    let u = "1/2*k*(q1^2 + q2^2 + q3^2)";
    expected_l.push(("z".into(), format!("1/2*m*(v1^2 + v2^2 + v3^2) - {u} - gamma*z")));
    expected_h.push(("z".into(), format!("(p1^2 + p2^2 + p3^2)/(2*m) - {u} - gamma*z")));
    for (field, expected, label) in [(&xl, &expected_l, "X_L"), (&xh, &expected_h, "X_H")] {
        for (c, want) in expected {
            let got = field.component(c).unwrap();
            ensure(equal(sys, got, want), || format!("{label}.{c} = {got}"))?;
        }
    }
    Ok("final at W1 in one pass; F^i, X_L and X_H match".into())
}

fn cawley() -> Outcome {
    let loaded = load("cawley");
    let sol = solve(&loaded);
    let sys = &loaded.system;
    let t = sol.tester();
    let finals = ["p1", "v3", "p2", "p3 - v1", "q3"];
    let count = sol.ladder.constraints().count();
    ensure(count == finals.len(), || format!("{count} constraints"))?;
    for f in finals {
        let e = sys.parse_expr(f).unwrap();
        ensure(t.is_zero(&sol.chain.apply(&e)).unwrap(), || format!("`{f}` does not hold on the final submanifold"))?;
    }
    for c in sol.ladder.constraints() {
        let on_finals = finals.iter().any(|f| equal(sys, &c.expr, f) || equal(sys, &-&c.expr, f));
        let reduced = sol.chain.apply(&c.expr);
        ensure(on_finals || t.is_zero(&reduced).unwrap(), || format!("unexpected constraint `{}`", c.expr))?;
    }
    ensure(sol.free_unknowns() == ["F2"], || format!("free unknowns {:?}", sol.free_unknowns()))?;
    let hp = project_to_hamiltonian(&sol).map_err(|e| e.to_string())?;
    let mut pf: Vec<String> = hp.constraints.iter().map(Expr::to_string).collect();
    pf.sort();
    ensure(pf == ["p1", "p2", "q3"], || format!("P_f = {pf:?}"))?;
    let (primary, _) = extract_primary_equations(&sol.space).map_err(|e| e.to_string())?;
    let g2 = primary.slot("p2").unwrap();
    ensure(equal(sys, g2, "1/2*q3^2 - gamma*p2"), || format!("G2 = {g2}"))?;
    let printed_matches = equal(sys, g2, "1/2*q3 - gamma*p2");
    ensure(!printed_matches, || "G2 agrees with 1/2*q3 - gamma*p2".into())?;
    Ok(format!("5 final constraints, free F2, P_f = {{p1, p2, q3}}; flagged: derived G2 = {g2}, not 1/2*q3 - gamma*p2"))
}

fn exponential_dissipation() -> Outcome {
    let loaded = load("central_force");
    let sol = solve(&loaded);
    let traj = trajectory(&loaded, &sol, 10.0, 1e-3);
    let report = verify(&traj, &sol).map_err(|e| e.to_string())?;
    let decay = report.family("hamiltonian_decay").ok_or("no decay family")?;
    let half = trajectory(&loaded, &sol, 10.0, 5e-4);
    let oracle = traj
        .states
        .iter()
        .zip(half.states.iter().step_by(2))
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    ensure(decay.max <= decay.threshold, || format!("max |H - H0 exp(-gamma t)| = {:.3e}", decay.max))?;
    ensure(oracle <= 1e-8, || format!("half-step disagreement {oracle:.3e}"))?;
    Ok(format!("max deviation {:.3e} (limit {:.3e}); half-step agreement {oracle:.1e}", decay.max, decay.threshold))
}

fn herglotz_residual() -> Outcome {
    let mut details = Vec::new();
    for name in ["pendulum", "central_force", "cawley"] {
        let loaded = load(name);
        let sol = solve(&loaded);
        let coarse = verify(&trajectory(&loaded, &sol, 10.0, 1e-3), &sol).unwrap().max_of("herglotz.");
        let fine = verify(&trajectory(&loaded, &sol, 10.0, 5e-4), &sol).unwrap().max_of("herglotz.");
        ensure(coarse <= 1e-4, || format!("{name}: residual {coarse:.3e}"))?;
        ensure(coarse >= 3.5 * fine, || format!("{name}: {coarse:.3e} -> {fine:.3e} when dt halves"))?;
        details.push(format!("{name} {coarse:.1e} ({:.1}x)", coarse / fine));
    }
    Ok(details.join(", "))
}

fn formalism_equivalence() -> Outcome {
    let loaded = load("central_force");
    let sol = solve(&loaded);
    let divergence = compare_formalisms(&sol, &loaded.init, 10.0, 1e-3).map_err(|e| e.to_string())?;
    ensure(divergence <= 1e-6, || format!("divergence {divergence:.3e}"))?;
    Ok(format!("max divergence {divergence:.3e}"))
}

/// Source text of a random smooth expression in `names`.
fn random_source(rng: &mut ChaCha8Rng, names: &[String], depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..4) {
            0 => format!("{}", rng.random_range(1..5)),
            1 => format!("({}/{})", rng.random_range(1..4), rng.random_range(2..5)),
            _ => names[rng.random_range(0..names.len())].clone(),
        };
    }
    let mut sub = || random_source(rng, names, depth - 1);
    let (a, b) = (sub(), sub());
    match rng.random_range(0..10) {
        0 => format!("({a} + {b})"),
        1 => format!("({a} - {b})"),
        2 => format!("({a} * {b})"),
        3 => format!("({a} / (1 + ({b})^2))"),
        4 => format!("({a})^{}", rng.random_range(2..4)),
        5 => format!("sin({a})"),
        6 => format!("cos({a})"),
        7 => format!("sqrt(1 + ({a})^2)"),
        8 => format!("exp(sin({a}))"),
        _ => format!("ln(2 + cos({a}))"),
    }
}

fn reeb_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EEB);
    for name in ["pendulum", "central_force", "cawley"] {
        let loaded = load(name);
        let sys = &loaded.system;
        let reference = solve(&loaded);
        let t = reference.tester();
        let coords = sys.unified_coords();
        for trial in 0..10 {
            let c: Vec<Expr> =
                (0..sys.n()).map(|_| sys.parse_expr(&random_source(&mut rng, &coords, 3)).unwrap()).collect();
            let space = build_unified(sys);
            let reeb = space.reeb_representative(&c);
            let other = run_on_space(space.with_reeb(reeb)).map_err(|e| format!("{name} #{trial}: {e}"))?;
            let same_shape = other.ladder.generations.len() == reference.ladder.generations.len()
                && other.ladder.constraints().count() == reference.ladder.constraints().count()
                && other.free_unknowns() == reference.free_unknowns();
            ensure(same_shape, || format!("{name} #{trial}: ladder shape differs"))?;
            for (a, b) in reference.ladder.constraints().zip(other.ladder.constraints()) {
                ensure(t.equal(&a.expr, &b.expr).unwrap(), || format!("{name} #{trial}: `{}` vs `{}`", a.expr, b.expr))?;
            }
            for ((c, a), b) in reference.resolved_field().pairs().zip(&other.resolved_field().coeffs) {
                ensure(t.equal(a, b).unwrap(), || format!("{name} #{trial}: slot {c} differs"))?;
            }
        }
    }
    Ok("10 random representatives per corpus system".into())
}

fn xyz() -> Vec<String> {
    ["x", "y", "z"].map(String::from).to_vec()
}

fn five_point(e: &Expr, b: &Binding, var: &str, h: f64) -> f64 {
    let at = |d: f64| {
        let mut b = b.clone();
        *b.get_mut(var).unwrap() += d;
        e.eval(&b).unwrap()
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}

fn expr_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE4);
    let names = xyz();
    let mut derivative_checks = 0;
    let mut unresolved = 0;
    while derivative_checks < 1000 {
        let src = random_source(&mut rng, &names, 4);
        let e = parse_expr(&src).unwrap();
        let b: Binding = names.iter().map(|n| (n.clone(), rng.random_range(-1.5..1.5))).collect();
        let var = &names[rng.random_range(0..3)];
        let exact = differentiate(&e, var).eval(&b).unwrap();
        let h = 1e-3 * (1.0 + b[var].abs());
        let (fine, coarse) = (five_point(&e, &b, var, h), five_point(&e, &b, var, 2.0 * h));
        // the oracle itself is unresolved where two step sizes disagree
        if (fine - coarse).abs() > 1e-5 * (1.0 + fine.abs()) {
            unresolved += 1;
            continue;
        }
        ensure((exact - fine).abs() <= 1e-6 * (1.0 + exact.abs()), || format!("d/d{var} {src}: {exact} vs {fine}"))?;
        derivative_checks += 1;
    }
    for _ in 0..1000 {
        let src = random_source(&mut rng, &names, 4);
        let raw = parse_raw(&src).unwrap();
        let b: Binding = names.iter().map(|n| (n.clone(), rng.random_range(-1.5..1.5))).collect();
        let (a, s) = (raw.eval(&b).unwrap(), simplify(&raw).eval(&b).unwrap());
        ensure((a - s).abs() <= 1e-12 * (1.0 + a.abs()), || format!("simplify changes {src}: {a} vs {s}"))?;
    }
    let (solved, inconsistent) = linear_systems(&mut rng)?;
    Ok(format!(
        "1000 derivative checks ({unresolved} unresolved oracles skipped), 1000 simplifications, {solved} systems solved + {inconsistent} inconsistent"
    ))
}

fn linear_systems(rng: &mut ChaCha8Rng) -> Result<(usize, usize), String> {
    let params = ["a".to_string(), "b".to_string()].into();
    let atoms = ["0", "1", "-2", "3/2", "a", "b", "a*b", "1 + a", "a - b^2", "sin(a)"];
    let mut domain = DomainBox::new().with("a", 0.3, 1.7).unwrap().with("b", 0.2, 1.9).unwrap();
    for j in 0..6 {
        domain.insert(&format!("X{j}"), -2.0, 2.0).unwrap();
    }
    let tester = ZeroTester::new(domain);
    let atom = |rng: &mut ChaCha8Rng, lo: usize| parse_expr_with(atoms[rng.random_range(lo..atoms.len())], &params).unwrap();
    let (mut solved, mut inconsistent) = (0, 0);
    for k in 0..200 {
        let rows = rng.random_range(1..=6);
        let unknowns: Vec<String> = (0..rng.random_range(1..=6)).map(|j| format!("X{j}")).collect();
        let mut eqs: Vec<Expr> = Vec::new();
        for _ in 0..rows {
            if !eqs.is_empty() && rng.random_bool(0.3) {
                let (i, j) = (rng.random_range(0..eqs.len()), rng.random_range(0..eqs.len()));
                let mut e = &eqs[i] + atom(rng, 1) * &eqs[j];
                if rng.random_bool(0.5) {
                    e = e + atom(rng, 4);
                }
                eqs.push(e);
                continue;
            }
            let mut terms = vec![atom(rng, 0)];
            for u in &unknowns {
                if rng.random_bool(0.5) {
                    terms.push(atom(rng, 0) * Expr::var(u));
                }
            }
            eqs.push(Expr::sum(terms));
        }
        let sol = match solve_linear(&eqs, &unknowns, &tester) {
            Ok(s) => s,
            Err(ExprError::InconsistentSystem { .. }) => {
                inconsistent += 1;
                continue;
            }
            Err(e) => return Err(format!("system {k}: {e}")),
        };
        let map = sol.solved_map();
        for (i, eq) in eqs.iter().enumerate() {
            let back = eq.substitute(&map);
            if tester.is_zero(&back).unwrap() {
                continue;
            }
            let r = sol.residuals.iter().find(|r| r.source == i);
            let r = r.ok_or_else(|| format!("system {k}: equation {i} leaves `{back}`"))?;
            let at = tester.bindings(1, k).remove(0);
            let factor = back.eval(&at).unwrap() / r.expr.eval(&at).unwrap();
            let proportional = tester.is_zero(&(&back - Expr::float(factor) * &r.expr)).unwrap();
            ensure(proportional, || format!("system {k}: equation {i} is not a multiple of its residual"))?;
        }
        solved += 1;
    }
    Ok((solved, inconsistent))
}

fn conservative_limit() -> Outcome {
    let loaded = load_with_param("central_force", "gamma", 0.0);
    let sol = solve(&loaded);
    let traj = trajectory(&loaded, &sol, 10.0, 1e-3);
    let report = verify(&traj, &sol).map_err(|e| e.to_string())?;
    let energy = report.family("hamiltonian_decay").ok_or("no energy family")?.max;
    let action = report.family("action").ok_or("no action family")?.max;
    ensure(energy <= 1e-8, || format!("energy drift {energy:.3e}"))?;
    ensure(action <= 1e-5, || format!("z' - L residual {action:.3e}"))?;
    Ok(format!("energy drift {energy:.1e}, z' - L residual {action:.1e}"))
}

fn golden_files() -> Result<(), String> {
    for name in ["pendulum", "central_force", "cawley"] {
        let loaded = load(name);
        let report = contact_sr::cmd_verify(&loaded).map_err(|e| e.to_string())?;
        ensure(report.passes(), || format!("{name} golden:\n{report}"))?;
        derive(&loaded).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pendulum constraint ladder", pendulum_ladder),
        ("pendulum equation of motion", pendulum_equation_of_motion),
        ("central force", central_force),
        ("Cawley family", cawley),
        ("exponential dissipation", exponential_dissipation),
        ("Herglotz residual", herglotz_residual),
        ("formalism equivalence", formalism_equivalence),
        ("Reeb independence", reeb_independence),
        ("expression properties", expr_properties),
        ("conservative limit", conservative_limit),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {title}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {title}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    if let Err(why) = golden_files() {
        println!("FAIL corpus goldens: {why}");
        failed += 1;
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.min(criteria.len()), criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
