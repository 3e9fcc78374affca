//! Reduction of a resolved field to an explicit ODE on the independent
//! coordinates of the final submanifold, fixed-step RK4 integration, and
//! monitoring of the contact invariants along the resulting trajectory.
//!
//! Invariants are measured, never enforced.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use thiserror::Error;

use crate::expr::eval::Slot;
use crate::expr::{differentiate, Binding, CompiledExpr, Expr, ExprError};
use crate::geometry::{contact_hamiltonian_field, legendre_map, GeometryError, Z};
use crate::unified::{
    constant_dissipation, project_to_hamiltonian, project_to_lagrangian, EngineError, UnifiedSolution,
};

/// Back-substituted states must satisfy every constraint to this tolerance.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("initial state violates `{constraint}` by {residual:e}")]
    InitOffConstraint { constraint: String, residual: f64 },
    #[error("non-finite `{coordinate}` at t = {t}")]
    NonFiniteState { t: f64, coordinate: String },
    #[error("`{0}` is not a coordinate of the system")]
    UnknownInitName(String),
    #[error("`{0}` is not a free unknown of the solution")]
    UnknownGauge(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl From<GeometryError> for DynamicsError {
    fn from(e: GeometryError) -> Self {
        DynamicsError::Engine(EngineError::Geometry(e))
    }
}

/// Explicit ODE on the independent coordinates plus the map back to `W`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// All unified coordinates, in chart order.
    pub coords: Vec<String>,
    pub independent: Vec<String>,
    pub rhs: Vec<Expr>,
    /// Designated coordinate -> expression in the independent ones.
    pub chain: Vec<(String, Expr)>,
    pub params: Binding,
    /// Every ladder constraint, as a function on `W`.
    pub constraints: Vec<Expr>,
    compiled_rhs: Vec<CompiledExpr>,
    /// Per unified coordinate: index into the independent vector, or the
    /// compiled chain expression.
    compiled_state: Vec<StateSlot>,
    compiled_constraints: Vec<CompiledExpr>,
}

#[derive(Debug, Clone)]
enum StateSlot {
    Independent(usize),
    Chained(CompiledExpr),
}

fn compile_over(e: &Expr, names: &[String], params: &Binding) -> Result<CompiledExpr, ExprError> {
    CompiledExpr::compile(e, &|n| {
        names
            .iter()
            .position(|c| c == n)
            .map(Slot::Index)
            .or_else(|| params.get(n).map(|v| Slot::Value(*v)))
    })
}

/// Restricts the resolved field to the final submanifold. Free unknowns take
/// the `gauge` expression when given, zero otherwise.
pub fn reduce(sol: &UnifiedSolution, gauge: &BTreeMap<String, Expr>) -> Result<ReducedSystem, DynamicsError> {
    for name in gauge.keys() {
        if !sol.free_unknowns().contains(name) {
            return Err(DynamicsError::UnknownGauge(name.clone()));
        }
    }
    let mut fix: BTreeMap<String, Expr> = sol.free_unknowns().iter().map(|u| (u.clone(), Expr::zero())).collect();
    for (name, e) in gauge {
        fix.insert(name.clone(), sol.chain.apply(e));
    }
    let field = sol.field.to_field().substitute(&fix);
    let coords = sol.space.coords.clone();
    let independent = sol.independent();
    let rhs: Vec<Expr> = independent
        .iter()
        .map(|c| sol.chain.apply(field.component(c).expect("independent coordinate is in the chart")))
        .collect();
    let params = sol.space.system.param_binding();
    let chain = sol.chain.entries().to_vec();
    let constraints: Vec<Expr> = sol.ladder.constraints().map(|c| c.expr.clone()).collect();

    let compiled_rhs = rhs
        .iter()
        .map(|e| compile_over(e, &independent, &params))
        .collect::<Result<_, _>>()?;
    let compiled_state = coords
        .iter()
        .map(|c| match independent.iter().position(|i| i == c) {
            Some(k) => Ok(StateSlot::Independent(k)),
            None => {
                let e = &chain.iter().find(|(v, _)| v == c).expect("designated coordinate").1;
                compile_over(e, &independent, &params).map(StateSlot::Chained)
            }
        })
        .collect::<Result<_, _>>()?;
    let compiled_constraints = constraints
        .iter()
        .map(|e| compile_over(e, &coords, &params))
        .collect::<Result<_, _>>()?;
    Ok(ReducedSystem {
        coords,
        independent,
        rhs,
        chain,
        params,
        constraints,
        compiled_rhs,
        compiled_state,
        compiled_constraints,
    })
}

impl ReducedSystem {
    pub fn derivative(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.compiled_rhs) {
            *o = f.eval(x);
        }
    }

    /// Full unified state from independent values.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        self.compiled_state
            .iter()
            .map(|s| match s {
                StateSlot::Independent(k) => x[*k],
                StateSlot::Chained(e) => e.eval(x),
            })
            .collect()
    }

    /// `|xi|` for every ladder constraint at a unified state.
    pub fn constraint_values(&self, state: &[f64]) -> Vec<f64> {
        self.compiled_constraints.iter().map(|c| c.eval(state).abs()).collect()
    }

    fn worst_constraint(&self, state: &[f64]) -> Option<(usize, f64)> {
        self.constraint_values(state)
            .into_iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
    }
}

/// Uniform time grid with the full unified state at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub coords: Vec<String>,
    pub states: Vec<Vec<f64>>,
    /// Largest `|xi|` over the ladder constraints at each node.
    pub constraint_residual: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.states.iter().map(|s| s[i]).collect())
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is non-empty")
    }

    /// CSV with header `t, coordinates..., residual names...`; 17 significant
    /// digits per value.
    pub fn write_csv<W: io::Write>(&self, report: Option<&InvariantReport>, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let families = report.map_or(&[][..], |r| &r.families[..]);
        let mut header = vec!["t".to_string()];
        header.extend(self.coords.iter().cloned());
        header.extend(families.iter().map(|f| f.name.clone()));
        w.write_record(&header)?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![format!("{:.16e}", self.time(k))];
            row.extend(s.iter().map(|v| format!("{v:.16e}")));
            row.extend(families.iter().map(|f| format!("{:.16e}", f.series[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn grid(t_final: f64, dt: f64) -> Result<(usize, f64), DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidGrid(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(DynamicsError::InvalidGrid(format!("t_final must be non-negative, got {t_final}")));
    }
    let steps = (t_final / dt).round() as usize;
    if steps == 0 {
        return Ok((0, dt));
    }
    Ok((steps, t_final / steps as f64))
}

fn rk4_step(f: &dyn Fn(&[f64], &mut [f64]), x: &mut [f64], h: f64) {
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(&tmp, &mut k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn check_finite(state: &[f64], coords: &[String], t: f64) -> Result<(), DynamicsError> {
    match state.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DynamicsError::NonFiniteState { t, coordinate: coords[i].clone() }),
        None => Ok(()),
    }
}

/// Classical RK4 with `round(t_final / dt)` equal steps. Independent
/// coordinates missing from `init` start at zero; designated ones given in
/// `init` must agree with the constraints.
pub fn integrate(rs: &ReducedSystem, init: &Binding, t_final: f64, dt: f64) -> Result<Trajectory, DynamicsError> {
    let (steps, h) = grid(t_final, dt)?;
    for name in init.keys() {
        if !rs.coords.contains(name) {
            return Err(DynamicsError::UnknownInitName(name.clone()));
        }
    }
    let mut x: Vec<f64> = rs.independent.iter().map(|c| init.get(c).copied().unwrap_or(0.0)).collect();
    let mut given = rs.lift(&x);
    for (i, c) in rs.coords.iter().enumerate() {
        if let Some(v) = init.get(c) {
            given[i] = *v;
        }
    }
    check_finite(&given, &rs.coords, 0.0)?;
    if let Some((k, r)) = rs.worst_constraint(&given) {
        if r.is_nan() || r > CONSTRAINT_TOLERANCE {
            return Err(DynamicsError::InitOffConstraint { constraint: rs.constraints[k].to_string(), residual: r });
        }
    }

    let f = |s: &[f64], out: &mut [f64]| rs.derivative(s, out);
    let mut states = Vec::with_capacity(steps + 1);
    let mut drift = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            rk4_step(&f, &mut x, h);
        }
        let state = rs.lift(&x);
        check_finite(&state, &rs.coords, h * k as f64)?;
        drift.push(rs.constraint_values(&state).into_iter().fold(0.0, f64::max));
        states.push(state);
    }
    Ok(Trajectory { t0: 0.0, dt: h, coords: rs.coords.clone(), states, constraint_residual: drift })
}

/// Centered differences inside, second-order one-sided at the ends.
pub fn finite_difference(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => {
            let d = (y[1] - y[0]) / h;
            vec![d, d]
        }
        _ => (0..n)
            .map(|k| {
                if k == 0 {
                    (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
                } else if k == n - 1 {
                    (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h)
                } else {
                    (y[k + 1] - y[k - 1]) / (2.0 * h)
                }
            })
            .collect(),
    }
}

/// One monitored residual along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFamily {
    pub name: String,
    pub series: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    pub threshold: f64,
}

impl ResidualFamily {
    fn new(name: impl Into<String>, series: Vec<f64>, threshold: f64) -> Self {
        let max = series.iter().copied().fold(0.0, f64::max);
        let mean = if series.is_empty() { 0.0 } else { series.iter().sum::<f64>() / series.len() as f64 };
        ResidualFamily { name: name.into(), series, max, mean, threshold }
    }

    pub fn passes(&self) -> bool {
        self.max.is_finite() && self.max <= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub families: Vec<ResidualFamily>,
}

impl InvariantReport {
    pub fn family(&self, name: &str) -> Option<&ResidualFamily> {
        self.families.iter().find(|f| f.name == name)
    }

    /// Largest max over the families whose name starts with `prefix`.
    pub fn max_of(&self, prefix: &str) -> f64 {
        self.families
            .iter()
            .filter(|f| f.name.starts_with(prefix))
            .map(|f| f.max)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.families.iter().all(ResidualFamily::passes)
    }

    pub fn summary(&self) -> String {
        self.families
            .iter()
            .map(|f| {
                let verdict = if f.passes() { "ok" } else { "FAIL" };
                format!("{}: max={:.3e} mean={:.3e} threshold={:.1e} {verdict}\n", f.name, f.max, f.mean, f.threshold)
            })
            .collect()
    }
}

/// Largest third difference quotient of a uniformly sampled series.
fn max_third_derivative(y: &[f64], h: f64) -> f64 {
    y.windows(4)
        .map(|w| ((w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) / (h * h * h)).abs())
        .fold(0.0, f64::max)
}

/// Threshold of a finite-difference family whose differentiated series is
/// `y`: `dt^2 * (FD_BASE + max |y'''|)`. The truncation error of
/// [`finite_difference`] is at most `dt^2 |y'''| / 3`.
pub fn fd_threshold(y: &[f64], dt: f64) -> f64 {
    dt * dt * (FD_BASE + max_third_derivative(y, dt))
}

const FD_BASE: f64 = 10.0;
const DECAY_TOLERANCE: f64 = 1e-5;

fn eval_series(e: &Expr, traj: &Trajectory, params: &Binding) -> Result<Vec<f64>, ExprError> {
    let c = compile_over(e, &traj.coords, params)?;
    Ok(traj.states.iter().map(|s| c.eval(s)).collect())
}

/// Residual families along `traj`:
/// `holonomy.<q>` = |dq/dt - v|, `action` = |dz/dt - L|,
/// `herglotz.<q>` = |d/dt L_v - L_q - L_z L_v|, `constraint.<k>` = |xi_k|, and
/// `hamiltonian_decay` = |H(t) - H(0) exp(-c t)| when `dH/dz = c` is constant.
pub fn verify(traj: &Trajectory, sol: &UnifiedSolution) -> Result<InvariantReport, DynamicsError> {
    let sys = &sol.space.system;
    let params = sys.param_binding();
    let l = &sys.lagrangian;
    let h = traj.dt;
    let mut families = Vec::new();

    let fd_family = |name: String, lhs: &[f64], rhs: &[f64]| {
        let res = finite_difference(lhs, h).iter().zip(rhs).map(|(a, b)| (a - b).abs()).collect();
        ResidualFamily::new(name, res, fd_threshold(lhs, h))
    };
    for (q, v) in sys.q.iter().zip(sys.v()) {
        let (qs, vs) = (traj.column(q).expect("q column"), traj.column(&v).expect("v column"));
        families.push(fd_family(format!("holonomy.{q}"), &qs, &vs));
    }
    let lz = traj.column(Z).expect("z column");
    families.push(fd_family("action".into(), &lz, &eval_series(l, traj, &params)?));

    let dl_dz = differentiate(l, Z);
    for (q, v) in sys.q.iter().zip(sys.v()) {
        let lv = differentiate(l, &v);
        let rhs = differentiate(l, q) + &dl_dz * &lv;
        let (lhs, rhs) = (eval_series(&lv, traj, &params)?, eval_series(&rhs, traj, &params)?);
        families.push(fd_family(format!("herglotz.{q}"), &lhs, &rhs));
    }

    for (k, c) in sol.ladder.constraints().enumerate() {
        let series = eval_series(&c.expr, traj, &params)?.into_iter().map(f64::abs).collect();
        families.push(ResidualFamily::new(format!("constraint.{}", k + 1), series, CONSTRAINT_TOLERANCE));
    }

    if let Some(c) = constant_dissipation(&sol.space) {
        let rate = c.eval(&params)?;
        let ham = eval_series(&sol.space.hamiltonian, traj, &params)?;
        let h0 = ham[0];
        let series = ham
            .iter()
            .enumerate()
            .map(|(k, hk)| (hk - h0 * (-rate * traj.time(k)).exp()).abs())
            .collect();
        families.push(ResidualFamily::new("hamiltonian_decay", series, DECAY_TOLERANCE * (1.0 + h0.abs())));
    }

    for f in &families {
        if f.series.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteState { t: f64::NAN, coordinate: f.name.clone() });
        }
    }
    Ok(InvariantReport { families })
}

/// Integrates a field given by `rhs` over `coords` and returns every node.
fn integrate_field(
    coords: &[String],
    rhs: &[Expr],
    params: &Binding,
    x0: Vec<f64>,
    steps: usize,
    h: f64,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    let compiled: Vec<CompiledExpr> = rhs.iter().map(|e| compile_over(e, coords, params)).collect::<Result<_, _>>()?;
    let f = |s: &[f64], out: &mut [f64]| {
        for (o, c) in out.iter_mut().zip(&compiled) {
            *o = c.eval(s);
        }
    };
    let mut x = x0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for k in 1..=steps {
        rk4_step(&f, &mut x, h);
        check_finite(&x, coords, h * k as f64)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Integrates the Lagrangian-side field from `init` and the contact
/// Hamiltonian field of the velocity-free `H` from the Legendre image of
/// `init`, and returns the largest max-norm distance between the Legendre
/// image of the first trajectory and the second.
pub fn compare_formalisms(sol: &UnifiedSolution, init: &Binding, t_final: f64, dt: f64) -> Result<f64, DynamicsError> {
    let sys = &sol.space.system;
    let momenta: BTreeSet<String> = sys.p().into_iter().collect();
    let hp = project_to_hamiltonian(sol)?.strict()?;
    let designated = sol.chain.designated();
    if !sol.free_unknowns().is_empty() || !designated.is_subset(&momenta) {
        let velocities = sys.v().into_iter().filter(|v| designated.contains(v)).collect();
        return Err(EngineError::VelocityEliminationFailure { velocities }.into());
    }
    let (steps, h) = grid(t_final, dt)?;
    let params = sys.param_binding();

    let xl = project_to_lagrangian(sol);
    let tq = sys.tq_coords();
    for name in init.keys() {
        if !tq.contains(name) {
            return Err(DynamicsError::UnknownInitName(name.clone()));
        }
    }
    let x0: Vec<f64> = tq.iter().map(|c| init.get(c).copied().unwrap_or(0.0)).collect();
    let lag = integrate_field(&tq, &xl.coeffs, &params, x0.clone(), steps, h)?;

    let xh = contact_hamiltonian_field(&hp.hamiltonian, &sys.q);
    let n = sys.n();
    let legendre: Vec<CompiledExpr> = legendre_map(sys)
        .momenta
        .iter()
        .map(|(_, e)| compile_over(e, &tq, &params))
        .collect::<Result<_, _>>()?;
    let image = |s: &[f64]| -> Vec<f64> {
        let mut out = s[..n].to_vec();
        out.extend(legendre.iter().map(|c| c.eval(s)));
        out.push(s[2 * n]);
        out
    };
    let ham = integrate_field(&xh.coords, &xh.coeffs, &params, image(&x0), steps, h)?;
    Ok(lag
        .iter()
        .zip(&ham)
        .map(|(a, b)| image(a).iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LagrangianSystem;
    use crate::unified::run_constraint_algorithm;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn pendulum(gamma: f64) -> UnifiedSolution {
        let sys = LagrangianSystem::parse(
            "pendulum",
            &["r", "theta", "lam"],
            "1/2*m*(vr^2 + r^2*vtheta^2) - m*g*r*(1-cos(theta)) + lam*(r-l) - gamma*z",
            &[("m", 1.0), ("l", 1.0), ("g", 9.81), ("gamma", gamma)],
        )
        .unwrap();
        run_constraint_algorithm(&sys).unwrap()
    }

    #[test]
    fn pendulum_reduces_to_damped_pendulum() {
        let sol = pendulum(0.1);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        assert_eq!(rs.independent, ["theta", "vtheta", "z"]);
        let t = sol.tester();
        let expected = sol.space.system.parse_expr("-g/l*sin(theta) - gamma*vtheta").unwrap();
        assert!(t.equal(&rs.rhs[1], &expected).unwrap());
        assert_eq!(rs.rhs[0], Expr::var("vtheta"));
    }

    #[test]
    fn small_oscillation_period() {
        let sol = pendulum(0.0);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("theta", 0.05)]), 5.0, 1e-3).unwrap();
        let theta = traj.column("theta").unwrap();
        let crossings: Vec<f64> = (1..theta.len())
            .filter(|&k| theta[k - 1] > 0.0 && theta[k] <= 0.0)
            .map(|k| {
                let (a, b) = (theta[k - 1], theta[k]);
                traj.time(k - 1) + traj.dt * a / (a - b)
            })
            .collect();
        let period = crossings[1] - crossings[0];
        let linear = 2.0 * std::f64::consts::PI * (1.0 / 9.81_f64).sqrt();
        assert!((period - linear).abs() / linear < 0.01, "{period} vs {linear}");
    }

    #[test]
    fn exponential_velocity_decay() {
        let sys = LagrangianSystem::parse("free", &["q"], "1/2*vq^2 - gamma*z", &[("gamma", 0.7)]).unwrap();
        let sol = run_constraint_algorithm(&sys).unwrap();
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("vq", 1.0)]), 2.0, 1e-3).unwrap();
        let v = traj.column("vq").unwrap();
        for (k, vk) in v.iter().enumerate() {
            assert!((vk - (-0.7 * traj.time(k)).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_duration_returns_init() {
        let sol = pendulum(0.1);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("theta", 0.3), ("z", 0.2)]), 0.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.column("theta").unwrap(), [0.3]);
        assert_eq!(traj.column("r").unwrap(), [1.0]);
    }

    #[test]
    fn init_off_constraint_names_it() {
        let sol = pendulum(0.1);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        match integrate(&rs, &bind(&[("theta", 0.3), ("r", 1.2)]), 1.0, 1e-3) {
            Err(DynamicsError::InitOffConstraint { constraint, residual }) => {
                assert_eq!(constraint, "-l + r");
                assert!((residual - 0.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            integrate(&rs, &bind(&[("nope", 1.0)]), 1.0, 1e-3),
            Err(DynamicsError::UnknownInitName(_))
        ));
        assert!(matches!(integrate(&rs, &Binding::new(), 1.0, 0.0), Err(DynamicsError::InvalidGrid(_))));
    }

    #[test]
    fn non_finite_state_is_reported() {
        let sys = LagrangianSystem::parse("blowup", &["q"], "1/2*vq^2 + 1/4*q^4", &[]).unwrap();
        let sol = run_constraint_algorithm(&sys).unwrap();
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let err = integrate(&rs, &bind(&[("q", 10.0)]), 100.0, 0.1).unwrap_err();
        assert!(matches!(err, DynamicsError::NonFiniteState { .. }), "{err:?}");
    }

    #[test]
    fn pendulum_invariants() {
        let sol = pendulum(0.1);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("theta", 0.3)]), 5.0, 1e-3).unwrap();
        let report = verify(&traj, &sol).unwrap();
        assert!(report.passes(), "{}", report.summary());
        assert!(report.family("hamiltonian_decay").is_some());
        assert!(traj.constraint_residual.iter().all(|r| *r <= CONSTRAINT_TOLERANCE));
    }

    #[test]
    fn constant_solution_has_no_residuals() {
        let sys = LagrangianSystem::parse("rest", &["q1", "q2"], "1/2*(v1^2 + v2^2)", &[]).unwrap();
        let sol = run_constraint_algorithm(&sys).unwrap();
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("q1", 0.4), ("q2", -0.3)]), 1.0, 1e-2).unwrap();
        let report = verify(&traj, &sol).unwrap();
        for f in &report.families {
            assert!(f.max <= 1e-12, "{}", f.name);
        }
    }

    #[test]
    fn gauge_must_name_a_free_unknown() {
        let sol = pendulum(0.1);
        let gauge: BTreeMap<String, Expr> = [("Fr".to_string(), Expr::zero())].into();
        assert!(matches!(reduce(&sol, &gauge), Err(DynamicsError::UnknownGauge(_))));
    }

    #[test]
    fn finite_differences_are_second_order() {
        let h = 1e-2;
        let y: Vec<f64> = (0..50).map(|k| (k as f64 * h).sin()).collect();
        let d = finite_difference(&y, h);
        for (k, dk) in d.iter().enumerate() {
            assert!((dk - (k as f64 * h).cos()).abs() < 1e-4);
        }
        assert_eq!(finite_difference(&[1.0], h), [0.0]);
    }

    #[test]
    fn formalisms_agree_for_regular_system() {
        let sys = LagrangianSystem::parse(
            "central",
            &["q1", "q2"],
            "1/2*m*(v1^2 + v2^2) - 1/2*k*(q1^2 + q2^2) - gamma*z",
            &[("m", 1.5), ("k", 2.0), ("gamma", 0.1)],
        )
        .unwrap();
        let sol = run_constraint_algorithm(&sys).unwrap();
        let init = bind(&[("q1", 1.0), ("v2", 1.0)]);
        assert!(compare_formalisms(&sol, &init, 2.0, 1e-3).unwrap() < 1e-9);
        assert_eq!(compare_formalisms(&sol, &init, 0.0, 1e-3).unwrap(), 0.0);
        assert!(compare_formalisms(&pendulum(0.1), &Binding::new(), 1.0, 1e-3).is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let sol = pendulum(0.1);
        let rs = reduce(&sol, &BTreeMap::new()).unwrap();
        let traj = integrate(&rs, &bind(&[("theta", 0.3)]), 0.01, 1e-3).unwrap();
        let report = verify(&traj, &sol).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(Some(&report), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,r,theta,lam,vr,vtheta,vlam,pr,ptheta,plam,z,holonomy.r"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[2].parse::<f64>().unwrap(), 0.3);
        assert_eq!(text.lines().count(), 12);
    }
}
