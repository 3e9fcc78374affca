//! Contact-geometric objects built from a Lagrangian `L(q, v, z)`: the
//! velocity Hessian, Lagrangian energy, contact Lagrangian form, its Reeb
//! field, the Legendre map, and the closed-form Lagrangian and Hamiltonian
//! vector fields.
//!
//! Forms are coefficient arrays over a named coordinate list. Only the
//! operations the engine needs exist: `d` of a 1-form and contraction of 1-
//! and 2-forms with a vector field.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{
    differentiate, simplify, solve_linear, Binding, DomainBox, Expr, ExprError, ZeroTester,
    DEFAULT_SEED,
};

/// Name of the action coordinate.
pub const Z: &str = "z";

const DEFAULT_Q_INTERVAL: (f64, f64) = (-2.0, 2.0);
const DEFAULT_V_INTERVAL: (f64, f64) = (-2.0, 2.0);
const DEFAULT_Z_INTERVAL: (f64, f64) = (-1.0, 1.0);
const DEFAULT_P_INTERVAL: (f64, f64) = (-2.0, 2.0);
const RANK_SAMPLES: usize = 16;
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("the velocity Hessian is singular (rank {rank} of {n})")]
    SingularLagrangian { rank: usize, n: usize },
    #[error("Hessian rank varies over the domain: observed {ranks:?}")]
    RankVariesOverDomain { ranks: Vec<usize> },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn suffix(q: &str) -> &str {
    match q.strip_prefix('q') {
        Some(s) if !s.is_empty() => s,
        _ => q,
    }
}

/// `q1 -> v1`, `theta -> vtheta`.
pub fn velocity_name(q: &str) -> String {
    format!("v{}", suffix(q))
}

/// `q1 -> p1`, `theta -> ptheta`.
pub fn momentum_name(q: &str) -> String {
    format!("p{}", suffix(q))
}

/// Name of the unknown acceleration slot paired with `q`: `q1 -> F1`.
pub fn unknown_name(q: &str) -> String {
    format!("F{}", suffix(q))
}

/// Interval a parameter is sampled over during zero testing.
pub fn parameter_interval(value: f64) -> (f64, f64) {
    if value == 0.0 {
        (0.5, 1.5)
    } else {
        let (a, b) = (0.5 * value, 1.5 * value);
        (a.min(b), a.max(b))
    }
}

/// A user-declared Lagrangian system. `domain` covers every q, v and z name.
#[derive(Debug, Clone)]
pub struct LagrangianSystem {
    pub name: String,
    pub q: Vec<String>,
    pub lagrangian: Expr,
    pub params: BTreeMap<String, f64>,
    pub domain: DomainBox,
    pub seed: u64,
}

impl LagrangianSystem {
    /// Validates names and fills missing domain intervals with the defaults.
    pub fn new(
        name: &str,
        q: Vec<String>,
        lagrangian: Expr,
        params: BTreeMap<String, f64>,
        mut domain: DomainBox,
    ) -> Result<Self, GeometryError> {
        if q.is_empty() {
            return Err(GeometryError::InvalidSystem("no configuration variables".into()));
        }
        let mut seen = BTreeSet::new();
        for qi in &q {
            for derived in [qi.clone(), velocity_name(qi), momentum_name(qi), unknown_name(qi)] {
                if derived == Z || params.contains_key(&derived) || !seen.insert(derived.clone()) {
                    return Err(GeometryError::InvalidSystem(format!("name `{derived}` is used twice")));
                }
            }
        }
        if params.contains_key(Z) {
            return Err(GeometryError::InvalidSystem("`z` cannot be a parameter".into()));
        }
        for (p, v) in &params {
            if !v.is_finite() {
                return Err(GeometryError::InvalidSystem(format!("parameter `{p}` is not finite")));
            }
        }
        let names: BTreeSet<String> = params.keys().cloned().collect();
        let lagrangian = lagrangian.mark_params(&names);
        let mut sys = LagrangianSystem {
            name: name.to_string(),
            q,
            lagrangian,
            params,
            domain: DomainBox::new(),
            seed: DEFAULT_SEED,
        };
        let state: BTreeSet<String> = sys.tq_coords().into_iter().collect();
        for v in sys.lagrangian.free_vars() {
            if !state.contains(&v) {
                return Err(GeometryError::InvalidSystem(format!(
                    "the Lagrangian uses `{v}`, which is neither a state variable nor a parameter"
                )));
            }
        }
        for qi in sys.q.clone() {
            if !domain.covers(&qi) {
                domain.insert(&qi, DEFAULT_Q_INTERVAL.0, DEFAULT_Q_INTERVAL.1)?;
            }
            let vi = velocity_name(&qi);
            if !domain.covers(&vi) {
                domain.insert(&vi, DEFAULT_V_INTERVAL.0, DEFAULT_V_INTERVAL.1)?;
            }
        }
        if !domain.covers(Z) {
            domain.insert(Z, DEFAULT_Z_INTERVAL.0, DEFAULT_Z_INTERVAL.1)?;
        }
        sys.domain = domain;
        Ok(sys)
    }

    /// Builds a system from source text with default domains.
    pub fn parse(name: &str, q: &[&str], lagrangian: &str, params: &[(&str, f64)]) -> Result<Self, GeometryError> {
        let params: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let names = params.keys().cloned().collect();
        let l = crate::expr::parse_expr_with(lagrangian, &names)?;
        Self::new(name, q.iter().map(|s| s.to_string()).collect(), l, params, DomainBox::new())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn v(&self) -> Vec<String> {
        self.q.iter().map(|q| velocity_name(q)).collect()
    }

    pub fn p(&self) -> Vec<String> {
        self.q.iter().map(|q| momentum_name(q)).collect()
    }

    pub fn unknowns(&self) -> Vec<String> {
        self.q.iter().map(|q| unknown_name(q)).collect()
    }

    /// `(q, v, z)`
    pub fn tq_coords(&self) -> Vec<String> {
        [self.q.clone(), self.v(), vec![Z.to_string()]].concat()
    }

    /// `(q, p, z)`
    pub fn tstar_coords(&self) -> Vec<String> {
        [self.q.clone(), self.p(), vec![Z.to_string()]].concat()
    }

    /// `(q, v, p, z)`
    pub fn unified_coords(&self) -> Vec<String> {
        [self.q.clone(), self.v(), self.p(), vec![Z.to_string()]].concat()
    }

    pub fn coords(&self, chart: Chart) -> Vec<String> {
        match chart {
            Chart::TangentExtended => self.tq_coords(),
            Chart::CotangentExtended => self.tstar_coords(),
            Chart::Unified => self.unified_coords(),
        }
    }

    /// Parses `src` with this system's parameters marked.
    pub fn parse_expr(&self, src: &str) -> Result<Expr, ExprError> {
        crate::expr::parse_expr_with(src, &self.params.keys().cloned().collect())
    }

    /// Parameter values, for numeric evaluation.
    pub fn param_binding(&self) -> Binding {
        self.params.clone()
    }

    /// State domain plus parameter intervals around their values.
    pub fn tq_box(&self) -> DomainBox {
        let mut b = self.domain.clone();
        for (name, &value) in &self.params {
            let (lo, hi) = parameter_interval(value);
            b.insert(name, lo, hi).expect("parameter interval is non-degenerate");
        }
        b
    }

    /// [`Self::tq_box`] extended by momenta and the unknown slots.
    pub fn unified_box(&self) -> DomainBox {
        let mut b = self.tq_box();
        for name in self.p().into_iter().chain(self.unknowns()) {
            if !b.covers(&name) {
                b.insert(&name, DEFAULT_P_INTERVAL.0, DEFAULT_P_INTERVAL.1)
                    .expect("default interval is non-degenerate");
            }
        }
        b
    }

    pub fn tester(&self) -> ZeroTester {
        ZeroTester::new(self.unified_box()).with_seed(self.seed)
    }

    /// True iff `L` does not depend on `v(q)`: `q` is a multiplier-type variable.
    pub fn is_multiplier(&self, q: &str) -> bool {
        differentiate(&self.lagrangian, &velocity_name(q)).is_zero()
    }
}

/// The three coordinate models the engine works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chart {
    /// `TQ x R`, coordinates `(q, v, z)`
    TangentExtended,
    /// `T*Q x R`, coordinates `(q, p, z)`
    CotangentExtended,
    /// `TQ x_Q T*Q x R`, coordinates `(q, v, p, z)`
    Unified,
}

impl Chart {
    pub fn dimension(self, n: usize) -> usize {
        match self {
            Chart::TangentExtended | Chart::CotangentExtended => 2 * n + 1,
            Chart::Unified => 3 * n + 1,
        }
    }
}

/// One coefficient per coordinate of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub chart: Chart,
    pub coords: Vec<String>,
    pub coeffs: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: Chart, coords: Vec<String>, coeffs: Vec<Expr>) -> Self {
        assert_eq!(coords.len(), coeffs.len(), "one coefficient per coordinate");
        assert_eq!(chart.dimension((coords.len() - 1) / chart_divisor(chart)), coords.len());
        VectorField { chart, coords, coeffs }
    }

    pub fn zero(chart: Chart, coords: Vec<String>) -> Self {
        let coeffs = vec![Expr::zero(); coords.len()];
        Self::new(chart, coords, coeffs)
    }

    pub fn component(&self, name: &str) -> Option<&Expr> {
        self.coords.iter().position(|c| c == name).map(|i| &self.coeffs[i])
    }

    /// Directional derivative `X(f) = X^a df/dx^a`.
    pub fn apply(&self, f: &Expr) -> Expr {
        Expr::sum(
            self.coords
                .iter()
                .zip(&self.coeffs)
                .filter(|(c, x)| !x.is_zero() && f.contains_name(c))
                .map(|(c, x)| x * differentiate(f, c)),
        )
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        VectorField {
            chart: self.chart,
            coords: self.coords.clone(),
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Self {
        self.map(|c| c.substitute(map))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&String, &Expr)> {
        self.coords.iter().zip(&self.coeffs)
    }
}

fn chart_divisor(chart: Chart) -> usize {
    match chart {
        Chart::Unified => 3,
        _ => 2,
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, x) in self.pairs() {
            writeln!(f, "{c}: {x}")?;
        }
        Ok(())
    }
}

/// `theta = theta_a dx^a`
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub coords: Vec<String>,
    pub coeffs: Vec<Expr>,
}

/// `Omega = 1/2 Omega_ab dx^a ^ dx^b` with `Omega_ab = -Omega_ba`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoForm {
    pub coords: Vec<String>,
    pub matrix: Vec<Vec<Expr>>,
}

impl OneForm {
    pub fn coefficient(&self, name: &str) -> Option<&Expr> {
        self.coords.iter().position(|c| c == name).map(|i| &self.coeffs[i])
    }

    /// `d(theta)_ab = d_a theta_b - d_b theta_a`
    pub fn exterior_derivative(&self) -> TwoForm {
        let n = self.coords.len();
        let grad: Vec<Vec<Expr>> = self
            .coeffs
            .iter()
            .map(|t| self.coords.iter().map(|c| differentiate(t, c)).collect())
            .collect();
        let matrix = (0..n)
            .map(|a| (0..n).map(|b| &grad[b][a] - &grad[a][b]).collect())
            .collect();
        TwoForm { coords: self.coords.clone(), matrix }
    }

    /// `i(X) theta`; components of `X` on coordinates outside the form vanish.
    pub fn contract(&self, x: &VectorField) -> Expr {
        Expr::sum(
            self.coords
                .iter()
                .zip(&self.coeffs)
                .filter_map(|(c, t)| x.component(c).map(|xc| xc * t)),
        )
    }
}

impl TwoForm {
    /// `(i(X) Omega)_b = X^a Omega_ab`
    pub fn contract(&self, x: &VectorField) -> OneForm {
        let xs: Vec<Expr> = self.coords.iter().map(|c| x.component(c).cloned().unwrap_or_else(Expr::zero)).collect();
        let coeffs = (0..self.coords.len())
            .map(|b| Expr::sum(xs.iter().zip(&self.matrix).map(|(xa, row)| xa * &row[b])))
            .collect();
        OneForm { coords: self.coords.clone(), coeffs }
    }
}

/// Gradient `dF` over `coords`.
pub fn differential(f: &Expr, coords: &[String]) -> OneForm {
    OneForm {
        coords: coords.to_vec(),
        coeffs: coords.iter().map(|c| differentiate(f, c)).collect(),
    }
}

/// `W_ij = d^2 L / dv^i dv^j`, its numeric rank, and its inverse when regular.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianData {
    pub w: Vec<Vec<Expr>>,
    pub inverse: Option<Vec<Vec<Expr>>>,
    pub rank: usize,
}

impl HessianData {
    pub fn is_regular(&self) -> bool {
        self.inverse.is_some()
    }
}

fn numeric_rank(m: DMatrix<f64>) -> usize {
    let sv = m.svd(false, false).singular_values;
    let scale = sv.iter().copied().fold(1.0_f64, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * scale).count()
}

pub fn hessian(sys: &LagrangianSystem) -> Result<HessianData, GeometryError> {
    let v = sys.v();
    let n = sys.n();
    let first: Vec<Expr> = v.iter().map(|vi| differentiate(&sys.lagrangian, vi)).collect();
    let w: Vec<Vec<Expr>> = first
        .iter()
        .map(|d| v.iter().map(|vj| differentiate(d, vj)).collect())
        .collect();

    let mut sampler = ZeroTester::new(sys.domain.clone()).with_seed(sys.seed);
    for (name, value) in &sys.params {
        sampler.domain.set_pinned(name, *value);
    }
    let mut ranks = BTreeSet::new();
    for b in sampler.bindings(RANK_SAMPLES, 1) {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = w[i][j].eval(&b)?;
            }
        }
        ranks.insert(numeric_rank(m));
    }
    if ranks.len() > 1 {
        return Err(GeometryError::RankVariesOverDomain { ranks: ranks.into_iter().collect() });
    }
    let rank = ranks.into_iter().next().unwrap_or(0);
    let inverse = if rank == n { Some(symbolic_inverse(&w, &sys.tester())?) } else { None };
    Ok(HessianData { w, inverse, rank })
}

/// Solves `W X = I` column by column and checks `W X = I` by zero testing.
fn symbolic_inverse(w: &[Vec<Expr>], tester: &ZeroTester) -> Result<Vec<Vec<Expr>>, GeometryError> {
    let n = w.len();
    let unknowns: Vec<String> = (0..n).map(|j| format!("x#{j}")).collect();
    let mut columns = Vec::with_capacity(n);
    for k in 0..n {
        let eqs: Vec<Expr> = (0..n)
            .map(|i| {
                let row = Expr::sum((0..n).map(|j| &w[i][j] * Expr::var(&unknowns[j])));
                row - Expr::int(i64::from(i == k))
            })
            .collect();
        let sol = solve_linear(&eqs, &unknowns, tester)?;
        if !sol.free.is_empty() || !sol.residuals.is_empty() {
            return Err(GeometryError::SingularLagrangian { rank: n - sol.free.len(), n });
        }
        let map = sol.solved_map();
        columns.push(unknowns.iter().map(|u| map[u].clone()).collect::<Vec<_>>());
    }
    let inv: Vec<Vec<Expr>> = (0..n).map(|i| (0..n).map(|j| columns[j][i].clone()).collect()).collect();
    for i in 0..n {
        for k in 0..n {
            let entry = Expr::sum((0..n).map(|j| &w[i][j] * &inv[j][k])) - Expr::int(i64::from(i == k));
            if !tester.is_zero(&entry)? {
                return Err(GeometryError::SingularLagrangian { rank: n, n });
            }
        }
    }
    Ok(inv)
}

/// `E_L = v^i dL/dv^i - L`
pub fn lagrangian_energy(sys: &LagrangianSystem) -> Expr {
    let l = &sys.lagrangian;
    Expr::sum(sys.v().iter().map(|vi| Expr::var(vi) * differentiate(l, vi))) - l
}

/// `eta_L = dz - (dL/dv^i) dq^i` over `(q, v, z)`.
pub fn contact_lagrangian_form(sys: &LagrangianSystem) -> OneForm {
    let n = sys.n();
    let mut coeffs = Vec::with_capacity(2 * n + 1);
    coeffs.extend(sys.v().iter().map(|vi| -differentiate(&sys.lagrangian, vi)));
    coeffs.extend(std::iter::repeat_n(Expr::zero(), n));
    coeffs.push(Expr::one());
    OneForm { coords: sys.tq_coords(), coeffs }
}

fn require_inverse(sys: &LagrangianSystem) -> Result<Vec<Vec<Expr>>, GeometryError> {
    let h = hessian(sys)?;
    let rank = h.rank;
    h.inverse.ok_or(GeometryError::SingularLagrangian { rank, n: sys.n() })
}

/// `R_L = d/dz - W^{ij} (d^2 L / dz dv^j) d/dv^i`
pub fn reeb_lagrangian(sys: &LagrangianSystem) -> Result<VectorField, GeometryError> {
    let inv = require_inverse(sys)?;
    let n = sys.n();
    let v = sys.v();
    let lzv: Vec<Expr> = v
        .iter()
        .map(|vj| differentiate(&differentiate(&sys.lagrangian, Z), vj))
        .collect();
    let mut coeffs = vec![Expr::zero(); n];
    for i in 0..n {
        coeffs.push(-Expr::sum((0..n).map(|j| &inv[i][j] * &lzv[j])));
    }
    coeffs.push(Expr::one());
    Ok(VectorField::new(Chart::TangentExtended, sys.tq_coords(), coeffs))
}

/// Fiber derivative: `p_i = dL/dv^i`, identity on `q` and `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreMap {
    pub momenta: Vec<(String, Expr)>,
}

impl LegendreMap {
    pub fn substitution(&self) -> BTreeMap<String, Expr> {
        self.momenta.iter().cloned().collect()
    }

    pub fn momentum(&self, p: &str) -> Option<&Expr> {
        self.momenta.iter().find(|(n, _)| n == p).map(|(_, e)| e)
    }
}

pub fn legendre_map(sys: &LagrangianSystem) -> LegendreMap {
    LegendreMap {
        momenta: sys
            .q
            .iter()
            .map(|q| (momentum_name(q), differentiate(&sys.lagrangian, &velocity_name(q))))
            .collect(),
    }
}

/// `X_H = H_p d/dq - (H_q + p H_z) d/dp + (p H_p - H) d/dz` for `H(q, p, z)`.
pub fn contact_hamiltonian_field(h: &Expr, q: &[String]) -> VectorField {
    let p: Vec<String> = q.iter().map(|s| momentum_name(s)).collect();
    let hz = differentiate(h, Z);
    let hp: Vec<Expr> = p.iter().map(|pi| differentiate(h, pi)).collect();
    let mut coeffs = hp.clone();
    for (qi, pi) in q.iter().zip(&p) {
        coeffs.push(-(differentiate(h, qi) + Expr::var(pi) * &hz));
    }
    coeffs.push(Expr::sum(p.iter().zip(&hp).map(|(pi, d)| Expr::var(pi) * d)) - h);
    let coords = [q.to_vec(), p, vec![Z.to_string()]].concat();
    VectorField::new(Chart::CotangentExtended, coords, coeffs)
}

/// Closed-form Euler-Lagrange field of a regular Lagrangian:
/// `X_L = v d/dq + W^{ik}(L_{q^k} - L_{q^j v^k} v^j - L L_{z v^k} + L_z L_{v^k}) d/dv^i + L d/dz`.
pub fn euler_lagrange_field(sys: &LagrangianSystem) -> Result<VectorField, GeometryError> {
    let inv = require_inverse(sys)?;
    let l = &sys.lagrangian;
    let (q, v) = (&sys.q, sys.v());
    let n = sys.n();
    let lz = differentiate(l, Z);
    let rhs: Vec<Expr> = (0..n)
        .map(|k| {
            let lv = differentiate(l, &v[k]);
            let mixed = Expr::sum((0..n).map(|j| differentiate(&lv, &q[j]) * Expr::var(&v[j])));
            differentiate(l, &q[k]) - mixed - l * differentiate(&lv, Z) + &lz * &lv
        })
        .collect();
    let mut coeffs: Vec<Expr> = v.iter().map(|vi| Expr::var(vi)).collect();
    for i in 0..n {
        coeffs.push(Expr::sum((0..n).map(|k| &inv[i][k] * &rhs[k])));
    }
    coeffs.push(l.clone());
    Ok(VectorField::new(Chart::TangentExtended, sys.tq_coords(), coeffs))
}

/// Simplifies every coefficient; canonical constructors already normalize, so
/// this only matters for fields assembled from raw trees.
pub fn simplify_field(x: &VectorField) -> VectorField {
    x.map(simplify)
}
