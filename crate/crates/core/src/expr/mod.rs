//! Minimal computer-algebra substrate.
//!
//! Every [`Expr`] is kept in canonical form: the public constructors in
//! [`simplify`] normalize as they build, so two expressions that are equal
//! under the rewrite set compare equal structurally and serialize to the same
//! text. The only way to obtain a non-canonical tree is [`parse::parse_raw`],
//! which exists so [`simplify::simplify`] can be exercised on literal input.

pub mod diff;
pub mod eval;
pub mod linsolve;
pub mod number;
pub mod parse;
pub mod simplify;
pub mod zero;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use diff::differentiate;
pub use eval::{Binding, CompiledExpr};
pub use linsolve::{solve_linear, Residual, SolveResult};
pub use number::Number;
pub use parse::{parse_expr, parse_expr_with};
pub use simplify::simplify;
pub use zero::{prob_is_zero, DomainBox, ZeroTester, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown function `{name}` at {line}:{column}")]
    UnknownFunction {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("domain box does not cover `{0}`")]
    Uncovered(String),
    #[error("invalid domain interval for `{name}`: [{lo}, {hi}]")]
    InvalidInterval { name: String, lo: f64, hi: f64 },
    #[error("equation {index} is not affine in unknown `{unknown}`")]
    NonlinearInUnknowns { index: usize, unknown: String },
    #[error("inconsistent system: equation {index} reduces to the nonzero constant {value}")]
    InconsistentSystem { index: usize, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Exp,
    Ln,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            _ => return None,
        })
    }
}

/// Expression node. Negation is `Mul([-1, x])` and division is `Pow(x, -1)`.
#[derive(Debug, Clone)]
pub enum Node {
    Num(Number),
    Param(Arc<str>),
    Var(Arc<str>),
    Func(Func, Expr),
    Pow(Expr, i64),
    Mul(Vec<Expr>),
    Add(Vec<Expr>),
}

/// Immutable, cheaply clonable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub(crate) fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn zero() -> Expr {
        Expr::num(Number::ZERO)
    }

    pub fn one() -> Expr {
        Expr::num(Number::ONE)
    }

    pub fn num(n: Number) -> Expr {
        Expr::from_node(Node::Num(n))
    }

    pub fn int(i: i64) -> Expr {
        Expr::num(Number::int(i))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::num(Number::ratio(num, den))
    }

    pub fn float(f: f64) -> Expr {
        Expr::num(Number::float(f))
    }

    pub fn var(name: &str) -> Expr {
        Expr::from_node(Node::Var(Arc::from(name)))
    }

    pub fn param(name: &str) -> Expr {
        Expr::from_node(Node::Param(Arc::from(name)))
    }

    pub fn as_num(&self) -> Option<Number> {
        match self.node() {
            Node::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num().is_some_and(|n| n.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_num().is_some_and(|n| n.is_one())
    }

    /// Variable and parameter names appearing in the tree.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out, true);
        out
    }

    /// Variable names only; parameters are excluded.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out, false);
        out
    }

    pub fn contains_name(&self, name: &str) -> bool {
        match self.node() {
            Node::Num(_) => false,
            Node::Var(n) | Node::Param(n) => &**n == name,
            Node::Func(_, a) | Node::Pow(a, _) => a.contains_name(name),
            Node::Mul(xs) | Node::Add(xs) => xs.iter().any(|x| x.contains_name(name)),
        }
    }

    fn collect_names(&self, out: &mut BTreeSet<String>, params: bool) {
        match self.node() {
            Node::Num(_) => {}
            Node::Var(n) => {
                out.insert(n.to_string());
            }
            Node::Param(n) => {
                if params {
                    out.insert(n.to_string());
                }
            }
            Node::Func(_, a) | Node::Pow(a, _) => a.collect_names(out, params),
            Node::Mul(xs) | Node::Add(xs) => {
                for x in xs {
                    x.collect_names(out, params);
                }
            }
        }
    }

    /// Top-level additive terms (a single-element slice for non-sums).
    pub fn terms(&self) -> Vec<Expr> {
        match self.node() {
            Node::Add(xs) => xs.clone(),
            _ => vec![self.clone()],
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Num(_) | Node::Var(_) | Node::Param(_) => 1,
            Node::Func(_, a) | Node::Pow(a, _) => 1 + a.size(),
            Node::Mul(xs) | Node::Add(xs) => 1 + xs.iter().map(Expr::size).sum::<usize>(),
        }
    }

    /// Replaces names by expressions, then re-canonicalizes.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        simplify::rebuild(self, &|name| map.get(name).cloned())
    }

    pub fn substitute_one(&self, name: &str, value: &Expr) -> Expr {
        if !self.contains_name(name) {
            return self.clone();
        }
        simplify::rebuild(self, &|n| (n == name).then(|| value.clone()))
    }

    /// Turns every `Var` whose name is in `params` into a `Param`.
    pub fn mark_params(&self, params: &BTreeSet<String>) -> Expr {
        simplify::rebuild(self, &|name| params.contains(name).then(|| Expr::param(name)))
    }

    fn kind_rank(&self) -> u8 {
        match self.node() {
            Node::Num(_) => 0,
            Node::Param(_) => 1,
            Node::Var(_) => 2,
            Node::Func(..) => 3,
            Node::Pow(..) => 4,
            Node::Mul(_) => 5,
            Node::Add(_) => 6,
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Products order by their non-numeric factors first and their coefficient
/// last, so `2*a` sorts next to `a` rather than next to `2*x`.
impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (fa, ca) = self.factor_key();
        let (fb, cb) = other.factor_key();
        if fa.len() == 1 && fb.len() == 1 && ca.is_none() && cb.is_none() {
            return self.cmp_atom(other);
        }
        fa.iter()
            .zip(fb)
            .map(|(x, y)| x.cmp_atom(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| fa.len().cmp(&fb.len()))
            .then_with(|| ca.unwrap_or(Number::ONE).cmp(&cb.unwrap_or(Number::ONE)))
    }
}

impl Expr {
    fn factor_key(&self) -> (&[Expr], Option<Number>) {
        match self.node() {
            Node::Mul(fs) => match fs[0].as_num() {
                Some(c) => (&fs[1..], Some(c)),
                None => (&fs[..], None),
            },
            _ => (std::slice::from_ref(self), None),
        }
    }

    fn cmp_atom(&self, other: &Self) -> Ordering {
        match (self.node(), other.node()) {
            (Node::Num(a), Node::Num(b)) => a.cmp(b),
            (Node::Param(a), Node::Param(b)) | (Node::Var(a), Node::Var(b)) => a.cmp(b),
            (Node::Func(f, a), Node::Func(g, b)) => f.cmp(g).then_with(|| a.cmp(b)),
            (Node::Pow(a, j), Node::Pow(b, k)) => a.cmp(b).then_with(|| j.cmp(k)),
            (Node::Mul(xs), Node::Mul(ys)) | (Node::Add(xs), Node::Add(ys)) => xs.cmp(ys),
            _ => self.kind_rank().cmp(&other.kind_rank()),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

/// Deterministic text form in the same grammar [`parse_expr`] accepts.
pub fn serialize(e: &Expr) -> String {
    match e.node() {
        Node::Add(terms) => {
            let mut out = String::new();
            for (i, t) in terms.iter().enumerate() {
                let (neg, mag) = split_sign(t);
                match (i, neg) {
                    (0, true) => out.push('-'),
                    (0, false) => {}
                    (_, true) => out.push_str(" - "),
                    (_, false) => out.push_str(" + "),
                }
                out.push_str(&serialize_product(&mag));
            }
            out
        }
        _ => serialize_product(e),
    }
}

/// Splits off a leading negative sign so sums print as `a - b`.
fn split_sign(t: &Expr) -> (bool, Expr) {
    match t.node() {
        Node::Num(n) if n.is_negative() => (true, Expr::num(n.neg())),
        Node::Mul(fs) => match fs[0].as_num() {
            Some(c) if c.is_negative() => {
                let mut rest = fs.clone();
                rest[0] = Expr::num(c.neg());
                (true, simplify::mul(rest))
            }
            _ => (false, t.clone()),
        },
        _ => (false, t.clone()),
    }
}

fn serialize_product(e: &Expr) -> String {
    let factors: Vec<Expr> = match e.node() {
        Node::Mul(fs) => fs.clone(),
        Node::Pow(_, k) if *k < 0 => vec![e.clone()],
        _ => return serialize_factor(e),
    };
    let mut coeff = Number::ONE;
    let mut numer = Vec::new();
    let mut denom = Vec::new();
    for f in &factors {
        match f.node() {
            Node::Num(n) => coeff = *n,
            Node::Pow(b, k) if *k < 0 => denom.push(if *k == -1 {
                serialize_factor(b)
            } else {
                format!("{}^{}", serialize_base(b), -k)
            }),
            _ => numer.push(serialize_factor(f)),
        }
    }
    let mut out = String::new();
    if coeff.is_one() {
        if numer.is_empty() {
            out.push('1');
        }
    } else if coeff == Number::int(-1) && !numer.is_empty() {
        out.push('-');
    } else {
        out.push_str(&coeff.to_string());
        if !numer.is_empty() {
            out.push('*');
        }
    }
    out.push_str(&numer.join("*"));
    // one `/` per factor: a grouped denominator would re-canonicalize differently
    for d in &denom {
        out.push('/');
        out.push_str(d);
    }
    out
}

/// A factor inside a product: sums get parentheses.
fn serialize_factor(e: &Expr) -> String {
    match e.node() {
        Node::Add(_) => format!("({})", serialize(e)),
        Node::Num(n) if n.is_negative() => format!("({n})"),
        Node::Pow(b, k) if *k > 0 => format!("{}^{}", serialize_base(b), k),
        Node::Pow(..) | Node::Mul(_) => format!("({})", serialize(e)),
        Node::Num(n) => n.to_string(),
        Node::Var(n) | Node::Param(n) => n.to_string(),
        Node::Func(f, a) => format!("{}({})", f.name(), serialize(a)),
    }
}

/// A power base: anything but an atom gets parentheses.
fn serialize_base(e: &Expr) -> String {
    match e.node() {
        Node::Var(_) | Node::Param(_) | Node::Func(..) => serialize_factor(e),
        Node::Num(n) if n.as_integer().is_some_and(|i| i >= 0) => n.to_string(),
        _ => format!("({})", serialize(e)),
    }
}
