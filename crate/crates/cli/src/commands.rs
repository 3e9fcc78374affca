//! The `derive`, `run` and `verify` pipelines.

use std::fmt::Write as _;
use std::path::PathBuf;

use contact_sr_core::dynamics::{integrate, reduce, verify, DynamicsError, InvariantReport, Trajectory};
use contact_sr_core::expr::Expr;
use contact_sr_core::geometry::{hessian, GeometryError, HessianData, VectorField};
use contact_sr_core::unified::{
    ladder_report, project_to_hamiltonian, project_to_lagrangian, run_constraint_algorithm, HamiltonianProjection,
    UnifiedSolution,
};

use crate::golden::{check_golden, golden_path, parse_golden, VerifyReport};
use crate::sysfile::LoadedSystem;
use crate::CliError;

/// Everything `derive` computes for one system.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub solution: UnifiedSolution,
    pub hessian: Result<HessianData, GeometryError>,
    pub lagrangian_field: VectorField,
    pub hamiltonian: HamiltonianProjection,
}

pub fn derive(loaded: &LoadedSystem) -> Result<Derivation, CliError> {
    let solution = run_constraint_algorithm(&loaded.system)?;
    let lagrangian_field = project_to_lagrangian(&solution);
    let hamiltonian = project_to_hamiltonian(&solution)?;
    Ok(Derivation { hessian: hessian(&loaded.system), solution, lagrangian_field, hamiltonian })
}

fn names(items: &[String]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.join("; ")
    }
}

fn exprs(items: &[Expr]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.iter().map(Expr::to_string).collect::<Vec<_>>().join("; ")
    }
}

/// `key: value` report; every line is checkable by [`check_golden`].
pub fn cmd_derive(loaded: &LoadedSystem) -> Result<String, CliError> {
    let d = derive(loaded)?;
    Ok(derivation_report(&d))
}

pub fn derivation_report(d: &Derivation) -> String {
    let sol = &d.solution;
    let sys = &sol.space.system;
    let mut out = String::new();
    let _ = writeln!(out, "system: {}", sys.name);
    match &d.hessian {
        Ok(h) => {
            let _ = writeln!(out, "hessian.rank: {} of {}", h.rank, sys.n());
            let _ = writeln!(out, "regular: {}", h.is_regular());
        }
        Err(e) => {
            let _ = writeln!(out, "# hessian: {e}");
        }
    }
    out.push_str(&ladder_report(sol));
    for (c, e) in sol.resolved_field().pairs() {
        let _ = writeln!(out, "field.{c}: {e}");
    }
    for (c, e) in d.lagrangian_field.pairs() {
        let _ = writeln!(out, "X_L.{c}: {e}");
    }
    for (c, e) in d.hamiltonian.field.pairs() {
        let _ = writeln!(out, "X_H.{c}: {e}");
    }
    let _ = writeln!(out, "hamiltonian: {}", d.hamiltonian.hamiltonian);
    let _ = writeln!(out, "hamiltonian_constraints: {}", exprs(&d.hamiltonian.constraints));
    let _ = writeln!(out, "residual_velocities: {}", names(&d.hamiltonian.residual_velocities));
    out
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub init: Vec<(String, f64)>,
    pub gauge: Vec<(String, String)>,
}

pub const DEFAULT_T_FINAL: f64 = 10.0;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub report: InvariantReport,
    pub csv_path: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passes() {
            crate::EXIT_OK
        } else {
            crate::EXIT_RESIDUALS
        }
    }
}

/// Adds to an [`DynamicsError::InitOffConstraint`] the value the designated
/// variable of the violated constraint must take.
fn repair_hint(sol: &UnifiedSolution, init: &contact_sr_core::expr::Binding, err: &DynamicsError) -> Option<String> {
    let DynamicsError::InitOffConstraint { constraint, .. } = err else { return None };
    let c = sol.ladder.constraints().find(|c| c.expr.to_string() == *constraint)?;
    let rhs = sol.chain.get(&c.variable)?;
    let mut b = sol.space.system.param_binding();
    b.extend(init.iter().map(|(k, v)| (k.clone(), *v)));
    let value = rhs.eval(&b).ok()?;
    Some(format!("set {} = {rhs} = {value}", c.variable))
}

/// Integrates the reduced final field, writes the trajectory CSV and
/// returns the invariant report.
pub fn cmd_run(loaded: &LoadedSystem, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let sol = run_constraint_algorithm(&loaded.system)?;
    let mut gauge = loaded.gauge.clone();
    for (u, src) in &opts.gauge {
        let e = loaded
            .system
            .parse_expr(src)
            .map_err(|source| CliError::Syntax { key: format!("--gauge {u}"), source })?;
        gauge.insert(u.clone(), e);
    }
    let mut init = loaded.init.clone();
    init.extend(opts.init.iter().cloned());
    let rs = reduce(&sol, &gauge)?;
    let t_final = opts.t_final.unwrap_or(DEFAULT_T_FINAL);
    let dt = opts.dt.unwrap_or(DEFAULT_DT);
    let trajectory = integrate(&rs, &init, t_final, dt).map_err(|e| match repair_hint(&sol, &init, &e) {
        Some(hint) => CliError::OffConstraint { source: e, hint },
        None => e.into(),
    })?;
    let report = verify(&trajectory, &sol)?;
    let csv_path = opts.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", loaded.system.name)));
    let file = std::fs::File::create(&csv_path)
        .map_err(|e| CliError::Io { path: csv_path.clone(), message: e.to_string() })?;
    trajectory
        .write_csv(Some(&report), std::io::BufWriter::new(file))
        .map_err(|e| CliError::Io { path: csv_path.clone(), message: e.to_string() })?;
    Ok(RunOutcome { trajectory, report, csv_path })
}

/// Checks the derivation against the `.golden` sidecar of the system file.
pub fn cmd_verify(loaded: &LoadedSystem) -> Result<VerifyReport, CliError> {
    let path = golden_path(&loaded.path);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::MissingGolden { path }),
        Err(e) => return Err(CliError::Io { path, message: e.to_string() }),
    };
    let entries = parse_golden(&text)?;
    let d = derive(loaded)?;
    Ok(check_golden(&d, &entries))
}

/// Parses `NAME=VALUE` flag arguments.
pub fn split_assignment(arg: &str) -> Result<(String, String), CliError> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::InvalidArgument(format!("expected NAME=VALUE, got `{arg}`"))),
    }
}
