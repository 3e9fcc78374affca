//! The unified bundle `W = TQ x_Q T*Q x R` with `eta = dz - p_i dq^i` and
//! `H = p_i v^i - L`, the dynamical equations obtained by matching the
//! coefficients of `i(X) d(eta) = dH - R(H) eta` and `i(X) eta = -H`, the
//! constraint algorithm, and the projections to both sides.
//!
//! Every constraint is solved for one designated variable. The resulting
//! substitution chain is kept fully reduced: no right-hand side mentions a
//! designated variable, so a single substitution restricts any expression to
//! the current constraint submanifold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::linsolve::normalize_constant_factor;
use crate::expr::{differentiate, solve_linear, Expr, ExprError, Node, SolveResult, ZeroTester};
use crate::geometry::{
    differential, Chart, GeometryError, LagrangianSystem, OneForm,
    VectorField, Z,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("coefficient matching failed on the {row} row: residual `{residual}`")]
    CoefficientMatchFailure { row: String, residual: String },
    #[error("inconsistent dynamics: tangency of `{constraint}` requires {value} = 0")]
    InconsistentDynamics { constraint: String, value: String },
    #[error("tangency equation `{equation}` is not affine in `{unknown}`")]
    NonlinearInUnknowns { equation: String, unknown: String },
    #[error("constraint algorithm did not stabilize within {cap} passes")]
    IterationCapExceeded { cap: usize },
    #[error("constraint `{constraint}` cannot be solved for a single variable")]
    ReductionFailure { constraint: String },
    #[error("velocities {velocities:?} cannot be eliminated on the momentum side")]
    VelocityEliminationFailure { velocities: Vec<String> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// `(W, eta, C, L, H, R)` for a Lagrangian system.
#[derive(Debug, Clone)]
pub struct UnifiedSpace {
    pub system: LagrangianSystem,
    pub coords: Vec<String>,
    pub eta: OneForm,
    pub coupling: Expr,
    pub lagrangian: Expr,
    pub hamiltonian: Expr,
    pub reeb: VectorField,
}

pub fn build_unified(sys: &LagrangianSystem) -> UnifiedSpace {
    let coords = sys.unified_coords();
    let n = sys.n();
    let p = sys.p();
    let mut eta = vec![Expr::zero(); 3 * n + 1];
    for i in 0..n {
        eta[i] = -Expr::var(&p[i]);
    }
    eta[3 * n] = Expr::one();
    let coupling = Expr::sum(p.iter().zip(sys.v()).map(|(pi, vi)| Expr::var(pi) * Expr::var(&vi)));
    let lagrangian = sys.lagrangian.clone();
    let hamiltonian = &coupling - &lagrangian;
    let mut reeb = VectorField::zero(Chart::Unified, coords.clone());
    reeb.coeffs[3 * n] = Expr::one();
    UnifiedSpace {
        system: sys.clone(),
        coords: coords.clone(),
        eta: OneForm { coords, coeffs: eta },
        coupling,
        lagrangian,
        hamiltonian,
        reeb,
    }
}

impl UnifiedSpace {
    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Another Reeb representative, `d/dz + c^i d/dv^i`.
    pub fn reeb_representative(&self, c: &[Expr]) -> VectorField {
        let n = self.n();
        assert_eq!(c.len(), n);
        let mut r = self.reeb.clone();
        for (i, ci) in c.iter().enumerate() {
            r.coeffs[n + i] = ci.clone();
        }
        r
    }

    pub fn with_reeb(mut self, reeb: VectorField) -> Self {
        assert_eq!(reeb.coords, self.coords);
        self.reeb = reeb;
        self
    }

    fn class_of(&self, name: &str) -> Option<(u8, usize)> {
        let n = self.n();
        let i = self.coords.iter().position(|c| c == name)?;
        Some(match i {
            _ if i < n && self.system.is_multiplier(name) => (1, i),
            _ if i < n => (3, i),
            _ if i < 2 * n => (2, i),
            _ if i < 3 * n => (0, i),
            _ => (4, i),
        })
    }
}

/// Coefficient slots `(f^i, F^i, G_i, f)` of a field on `W`. A slot is either
/// a determined expression or still the bare unknown named in `unknowns`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzField {
    pub coords: Vec<String>,
    pub slots: Vec<Expr>,
    pub unknowns: Vec<String>,
}

impl AnsatzField {
    pub fn slot(&self, coord: &str) -> Option<&Expr> {
        self.coords.iter().position(|c| c == coord).map(|i| &self.slots[i])
    }

    pub fn to_field(&self) -> VectorField {
        VectorField::new(Chart::Unified, self.coords.clone(), self.slots.clone())
    }

    fn determine(&mut self, solved: &[(String, Expr)]) {
        if solved.is_empty() {
            return;
        }
        let map: BTreeMap<String, Expr> = solved.iter().cloned().collect();
        for s in &mut self.slots {
            *s = s.substitute(&map);
        }
        self.unknowns.retain(|u| !map.contains_key(u));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    PrimaryLegendre,
    Tangency,
}

impl Origin {
    pub fn label(self) -> &'static str {
        match self {
            Origin::PrimaryLegendre => "primary-legendre",
            Origin::Tangency => "tangency",
        }
    }
}

/// A constraint function together with the variable it was solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: Expr,
    pub origin: Origin,
    pub variable: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generation {
    pub constraints: Vec<Constraint>,
    /// Unknowns fixed by the tangency pass run on this generation.
    pub determined: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintLadder {
    pub generations: Vec<Generation>,
    pub is_final: bool,
}

impl ConstraintLadder {
    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.generations.iter().flat_map(|g| &g.constraints)
    }

    /// 1-based index of the final submanifold.
    pub fn final_index(&self) -> usize {
        self.generations.len()
    }
}

/// Designated variable -> right-hand side in the independent variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chain {
    entries: Vec<(String, Expr)>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Expr)] {
        &self.entries
    }

    pub fn map(&self) -> BTreeMap<String, Expr> {
        self.entries.iter().cloned().collect()
    }

    pub fn designated(&self) -> BTreeSet<String> {
        self.entries.iter().map(|(v, _)| v.clone()).collect()
    }

    pub fn get(&self, var: &str) -> Option<&Expr> {
        self.entries.iter().find(|(v, _)| v == var).map(|(_, e)| e)
    }

    pub fn apply(&self, e: &Expr) -> Expr {
        e.substitute(&self.map())
    }

    /// `rhs` must already be free of designated variables.
    pub fn insert(&mut self, var: &str, rhs: Expr) {
        debug_assert!(self.entries.iter().all(|(v, _)| !rhs.contains_name(v)));
        for (_, e) in &mut self.entries {
            *e = e.substitute_one(var, &rhs);
        }
        self.entries.push((var.to_string(), rhs));
    }
}

/// Result of the constraint algorithm.
#[derive(Debug, Clone)]
pub struct UnifiedSolution {
    pub space: UnifiedSpace,
    pub field: AnsatzField,
    pub ladder: ConstraintLadder,
    pub chain: Chain,
    pub passes: usize,
}

impl UnifiedSolution {
    pub fn free_unknowns(&self) -> &[String] {
        &self.field.unknowns
    }

    pub fn tester(&self) -> ZeroTester {
        self.space.system.tester()
    }

    /// Field slots restricted to the final submanifold.
    pub fn resolved_field(&self) -> VectorField {
        self.field.to_field().map(|s| self.chain.apply(s))
    }

    /// Independent coordinates of the final submanifold, in chart order.
    pub fn independent(&self) -> Vec<String> {
        let d = self.chain.designated();
        self.space.coords.iter().filter(|c| !d.contains(*c)).cloned().collect()
    }

    /// Both defining equations evaluated on the resolved field and restricted
    /// to the final submanifold; every entry vanishes on a correct solution.
    pub fn equation_residuals(&self) -> Vec<(String, Expr)> {
        matching_equations(&self.space, &self.space.reeb, &self.field.to_field())
            .into_iter()
            .map(|(row, e)| (row, self.chain.apply(&e)))
            .collect()
    }
}

/// Rows of `i(X)d(eta) - dH + R(H) eta` per coordinate, then `i(X)eta + H`.
fn matching_equations(space: &UnifiedSpace, reeb: &VectorField, x: &VectorField) -> Vec<(String, Expr)> {
    let h = &space.hamiltonian;
    let lhs = space.eta.exterior_derivative().contract(x);
    let dh = differential(h, &space.coords);
    let rh = reeb.apply(h);
    let mut rows: Vec<(String, Expr)> = space
        .coords
        .iter()
        .enumerate()
        .map(|(a, c)| (format!("d{c}"), &lhs.coeffs[a] - &dh.coeffs[a] + &rh * &space.eta.coeffs[a]))
        .collect();
    rows.push(("eta".to_string(), space.eta.contract(x) + h));
    rows
}

/// Matches coefficients with the space's Reeb representative.
pub fn extract_primary_equations(space: &UnifiedSpace) -> Result<(AnsatzField, Vec<Constraint>), EngineError> {
    extract_primary_equations_with(space, &space.reeb)
}

/// Solves the matching equations for the ansatz `f^i, F^i, G_i, f`. The
/// `dv` rows carry no unknowns and become the primary constraints; the `dz`
/// row must vanish on them.
pub fn extract_primary_equations_with(
    space: &UnifiedSpace,
    reeb: &VectorField,
) -> Result<(AnsatzField, Vec<Constraint>), EngineError> {
    let sys = &space.system;
    let n = sys.n();
    let mut names: Vec<String> = sys.q.iter().map(|q| format!("f#{q}")).collect();
    names.extend(sys.unknowns());
    names.extend(sys.q.iter().map(|q| format!("G#{q}")));
    names.push("f#z".to_string());
    let ansatz = VectorField::new(Chart::Unified, space.coords.clone(), names.iter().map(|u| Expr::var(u)).collect());
    let rows = matching_equations(space, reeb, &ansatz);
    let eqs: Vec<Expr> = rows.iter().map(|(_, e)| e.clone()).collect();
    let tester = sys.tester();
    let sol = solve_linear(&eqs, &names, &tester).map_err(|e| match e {
        ExprError::InconsistentSystem { index, value } => EngineError::CoefficientMatchFailure {
            row: rows[index].0.clone(),
            residual: value,
        },
        other => EngineError::Expr(other),
    })?;

    let primary: Vec<Expr> = (n..2 * n).map(|r| -&eqs[r]).collect();
    let mut chain = Chain::new();
    let mut constraints = Vec::with_capacity(n);
    for xi in &primary {
        let (var, rhs) = designate(space, &chain.apply(xi), &tester, &|_| true)?;
        chain.insert(&var, rhs);
        constraints.push(Constraint { expr: xi.clone(), origin: Origin::PrimaryLegendre, variable: var });
    }
    for res in &sol.residuals {
        let is_dv = (n..2 * n).contains(&res.source);
        if !is_dv && !tester.is_zero(&chain.apply(&res.expr))? {
            return Err(EngineError::CoefficientMatchFailure {
                row: rows[res.source].0.clone(),
                residual: res.expr.to_string(),
            });
        }
    }
    let dz = &eqs[3 * n];
    if !tester.is_zero(&chain.apply(dz))? {
        return Err(EngineError::CoefficientMatchFailure { row: "dz".into(), residual: dz.to_string() });
    }
    if sol.free != sys.unknowns() {
        return Err(EngineError::CoefficientMatchFailure {
            row: "ansatz".into(),
            residual: format!("undetermined slots {:?}", sol.free),
        });
    }

    let solved = sol.solved_map();
    let slots = names
        .iter()
        .map(|u| solved.get(u).cloned().unwrap_or_else(|| Expr::var(u)))
        .collect();
    let field = AnsatzField { coords: space.coords.clone(), slots, unknowns: sys.unknowns() };
    Ok((field, constraints))
}

fn strip_power(e: &Expr) -> Expr {
    let mut e = normalize_constant_factor(e);
    loop {
        let next = match e.node() {
            Node::Pow(b, k) if *k >= 1 => b.clone(),
            Node::Mul(fs) if fs.len() == 2 && fs[0].as_num().is_some() => fs[1].clone(),
            _ => return e,
        };
        e = normalize_constant_factor(&next);
    }
}

/// Solves `r = 0` for one variable accepted by `allow`: momenta first, then
/// multiplier-type positions, velocities, other positions and `z`. Within a
/// class a constant coefficient beats a symbolic one, then declaration order.
/// `r = c*b^k` is replaced by `b` first.
fn designate(
    space: &UnifiedSpace,
    r: &Expr,
    tester: &ZeroTester,
    allow: &dyn Fn(&str) -> bool,
) -> Result<(String, Expr), EngineError> {
    let r = strip_power(r);
    let mut best: Option<((u8, u8, usize), String, Expr)> = None;
    for v in r.free_vars() {
        let Some((class, index)) = space.class_of(&v) else { continue };
        if !allow(&v) {
            continue;
        }
        let c = differentiate(&r, &v);
        if c.contains_name(&v) || tester.is_zero(&c)? {
            continue;
        }
        let key = (class, u8::from(c.as_num().is_none()), index);
        if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
            best = Some((key, v, c));
        }
    }
    let Some((_, var, coeff)) = best else {
        return Err(EngineError::ReductionFailure { constraint: r.to_string() });
    };
    let rest = r.substitute_one(&var, &Expr::zero());
    Ok((var, -(rest / coeff)))
}

/// Outcome of one tangency pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassResult {
    pub determined: Vec<(String, Expr)>,
    pub new_constraints: Vec<Constraint>,
}

/// Imposes `X(xi) = 0` on the current submanifold for every constraint of the
/// ladder, solves for the remaining unknowns, and turns unknown-free leftovers
/// that do not already vanish into new constraints. Extends `chain` with the
/// new constraints.
pub fn tangency_pass(
    space: &UnifiedSpace,
    field: &AnsatzField,
    ladder: &ConstraintLadder,
    chain: &mut Chain,
) -> Result<PassResult, EngineError> {
    let tester = space.system.tester();
    let x = field.to_field();
    let constraints: Vec<&Constraint> = ladder.constraints().collect();
    let eqs: Vec<Expr> = constraints.iter().map(|c| chain.apply(&x.apply(&c.expr))).collect();
    let sol: SolveResult = solve_linear(&eqs, &field.unknowns, &tester).map_err(|e| match e {
        ExprError::InconsistentSystem { index, value } => EngineError::InconsistentDynamics {
            constraint: constraints[index].expr.to_string(),
            value,
        },
        ExprError::NonlinearInUnknowns { index, unknown } => EngineError::NonlinearInUnknowns {
            equation: eqs[index].to_string(),
            unknown,
        },
        other => EngineError::Expr(other),
    })?;

    let mut new_constraints = Vec::new();
    for res in &sol.residuals {
        let r = chain.apply(&res.expr);
        if tester.is_zero(&r)? {
            continue;
        }
        if r.free_names().is_empty() {
            return Err(EngineError::InconsistentDynamics {
                constraint: constraints[res.source].expr.to_string(),
                value: r.to_string(),
            });
        }
        let (var, rhs) = designate(space, &r, &tester, &|_| true)?;
        let expr = Expr::var(&var) - &rhs;
        chain.insert(&var, rhs);
        new_constraints.push(Constraint { expr, origin: Origin::Tangency, variable: var });
    }
    Ok(PassResult { determined: sol.solved, new_constraints })
}

pub fn run_constraint_algorithm(sys: &LagrangianSystem) -> Result<UnifiedSolution, EngineError> {
    run_on_space(build_unified(sys))
}

/// Runs the algorithm on a prepared space, e.g. one with another Reeb
/// representative.
pub fn run_on_space(space: UnifiedSpace) -> Result<UnifiedSolution, EngineError> {
    let (mut field, primary) = extract_primary_equations(&space)?;
    let tester = space.system.tester();
    let mut chain = Chain::new();
    for c in &primary {
        let (var, rhs) = designate(&space, &chain.apply(&c.expr), &tester, &|_| true)?;
        debug_assert_eq!(var, c.variable);
        chain.insert(&var, rhs);
    }
    let mut ladder = ConstraintLadder {
        generations: vec![Generation { constraints: primary, determined: Vec::new() }],
        is_final: false,
    };
    let cap = 2 * (3 * space.n() + 1);
    for pass in 1..=cap {
        let result = tangency_pass(&space, &field, &ladder, &mut chain)?;
        field.determine(&result.determined);
        let last = ladder.generations.last_mut().expect("ladder is non-empty");
        last.determined.extend(result.determined);
        if result.new_constraints.is_empty() {
            ladder.is_final = true;
            return Ok(UnifiedSolution { space, field, ladder, chain, passes: pass });
        }
        ladder.generations.push(Generation { constraints: result.new_constraints, determined: Vec::new() });
    }
    Err(EngineError::IterationCapExceeded { cap })
}

/// Drops the `G` slots and restricts the `v` and `z` slots to the final
/// submanifold. The `q` slots stay `v^i`, so the result is second order.
pub fn project_to_lagrangian(sol: &UnifiedSolution) -> VectorField {
    let n = sol.space.n();
    let slots = &sol.field.slots;
    let mut coeffs: Vec<Expr> = slots[..n].to_vec();
    coeffs.extend(slots[n..2 * n].iter().map(|s| sol.chain.apply(s)));
    coeffs.push(sol.chain.apply(&slots[3 * n]));
    VectorField::new(Chart::TangentExtended, sol.space.system.tq_coords(), coeffs)
}

/// Momentum-side field with the constraints that remain after eliminating the
/// velocities. `residual_velocities` lists velocities no constraint fixes.
#[derive(Debug, Clone)]
pub struct HamiltonianProjection {
    pub field: VectorField,
    pub constraints: Vec<Expr>,
    pub residual_velocities: Vec<String>,
    /// `H` with the velocities eliminated.
    pub hamiltonian: Expr,
    pub chain: Chain,
}

impl HamiltonianProjection {
    pub fn strict(self) -> Result<Self, EngineError> {
        if self.residual_velocities.is_empty() {
            Ok(self)
        } else {
            Err(EngineError::VelocityEliminationFailure { velocities: self.residual_velocities })
        }
    }
}

/// Re-solves the ladder with velocities eliminated first, then restricts the
/// `f^i`, `G_i` and `f` slots.
pub fn project_to_hamiltonian(sol: &UnifiedSolution) -> Result<HamiltonianProjection, EngineError> {
    let space = &sol.space;
    let tester = sol.tester();
    let velocities: BTreeSet<String> = space.system.v().into_iter().collect();
    let mut chain = Chain::new();
    let mut pending = Vec::new();
    for c in sol.ladder.constraints() {
        let r = chain.apply(&c.expr);
        if tester.is_zero(&r)? {
            continue;
        }
        match designate(space, &r, &tester, &|v| velocities.contains(v)) {
            Ok((var, rhs)) => chain.insert(&var, rhs),
            Err(EngineError::ReductionFailure { .. }) => pending.push(c),
            Err(e) => return Err(e),
        }
    }
    let mut constraints = Vec::new();
    for c in pending {
        let r = chain.apply(&c.expr);
        if tester.is_zero(&r)? {
            continue;
        }
        let (var, rhs) = match designate(space, &r, &tester, &|v| !velocities.contains(v)) {
            Err(EngineError::ReductionFailure { .. }) => designate(space, &r, &tester, &|_| true)?,
            other => other?,
        };
        constraints.push(Expr::var(&var) - &rhs);
        chain.insert(&var, rhs);
    }

    let n = space.n();
    let slots = &sol.field.slots;
    let picked = (0..n).chain(2 * n..3 * n + 1);
    let coeffs: Vec<Expr> = picked.map(|i| chain.apply(&slots[i])).collect();
    let field = VectorField::new(Chart::CotangentExtended, space.system.tstar_coords(), coeffs);
    let hamiltonian = chain.apply(&space.hamiltonian);
    let mut seen = BTreeSet::new();
    for e in field.coeffs.iter().chain(&constraints).chain(std::iter::once(&hamiltonian)) {
        seen.extend(e.free_vars().into_iter().filter(|v| velocities.contains(v)));
    }
    let residual_velocities = space.system.v().into_iter().filter(|v| seen.contains(v)).collect();
    Ok(HamiltonianProjection { field, constraints, residual_velocities, hamiltonian, chain })
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items.iter().map(f).collect::<Vec<_>>().join("; ")
    }
}

/// Line-oriented `key: value` report of the ladder. List values are joined
/// with `; `; empty lists print as `none`.
pub fn ladder_report(sol: &UnifiedSolution) -> String {
    let mut out = String::new();
    for (i, g) in sol.ladder.generations.iter().enumerate() {
        let w = format!("W{}", i + 1);
        let origin = g.constraints.first().map_or("tangency", |c| c.origin.label());
        let _ = writeln!(out, "{w}.origin: {origin}");
        let _ = writeln!(out, "{w}.constraints: {}", join(&g.constraints, |c| c.expr.to_string()));
        let _ = writeln!(out, "{w}.solved_for: {}", join(&g.constraints, |c| c.variable.clone()));
        let _ = writeln!(out, "{w}.determined: {}", join(&g.determined, |(u, e)| format!("{u} = {e}")));
    }
    let _ = writeln!(out, "final_at: W{}", sol.ladder.final_index());
    let _ = writeln!(out, "free_unknowns: {}", join(sol.free_unknowns(), |u| u.clone()));
    for (v, e) in sol.chain.entries() {
        let _ = writeln!(out, "chain.{v}: {e}");
    }
    out
}

/// `d/dz` of the unified Hamiltonian when it is free of state variables.
pub fn constant_dissipation(space: &UnifiedSpace) -> Option<Expr> {
    let hz = differentiate(&space.hamiltonian, Z);
    hz.free_vars().is_empty().then_some(hz)
}
