//! Symbolic Gauss-Jordan elimination for systems affine in a set of unknowns.

use std::collections::{BTreeMap, BTreeSet};

use super::simplify::{add, mul, neg};
use super::{differentiate, Expr, ExprError, Node, Number, ZeroTester};

/// An unknown-free equation left over after elimination. `source` is the
/// index of the input equation it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub expr: Expr,
    pub source: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveResult {
    /// Unknown -> expression in the remaining symbols and the free unknowns.
    pub solved: Vec<(String, Expr)>,
    pub residuals: Vec<Residual>,
    /// Unknowns no equation determines.
    pub free: Vec<String>,
}

impl SolveResult {
    pub fn solved_map(&self) -> BTreeMap<String, Expr> {
        self.solved.iter().cloned().collect()
    }
}

/// Polynomial degree in `unknowns`, `None` where an unknown sits inside a
/// function or a negative power.
fn degree(e: &Expr, unknowns: &BTreeSet<&str>) -> Option<u32> {
    match e.node() {
        Node::Num(_) | Node::Param(_) => Some(0),
        Node::Var(n) => Some(u32::from(unknowns.contains(&**n))),
        Node::Add(ts) => ts.iter().try_fold(0, |acc, t| Some(acc.max(degree(t, unknowns)?))),
        Node::Mul(fs) => fs.iter().try_fold(0, |acc, f| Some(acc + degree(f, unknowns)?)),
        Node::Pow(b, k) => match degree(b, unknowns)? {
            0 => Some(0),
            d if *k > 0 => Some(d * (*k as u32)),
            _ => None,
        },
        Node::Func(_, a) => (degree(a, unknowns)? == 0).then_some(0),
    }
}

/// Divides out an overall numeric factor: the coefficient of a product, or of
/// the first term of a sum.
pub fn normalize_constant_factor(e: &Expr) -> Expr {
    let lead = match e.node() {
        Node::Num(n) if !n.is_zero() => return Expr::one(),
        Node::Mul(fs) => fs[0].as_num(),
        Node::Add(ts) => match ts[0].node() {
            Node::Num(n) => Some(*n),
            Node::Mul(fs) => fs[0].as_num(),
            _ => None,
        },
        _ => None,
    };
    match lead {
        Some(c) if !c.is_zero() && !c.is_one() => mul(vec![Expr::num(recip(c)), e.clone()]),
        _ => e.clone(),
    }
}

fn recip(c: Number) -> Number {
    c.powi(-1).unwrap_or(Number::float(f64::NAN))
}

struct Row {
    coeffs: Vec<Expr>,
    constant: Expr,
    source: usize,
}

/// Replaces a symbolic expression that vanishes identically by zero, so that
/// cancelled entries do not keep growing through later elimination steps.
fn prune(e: Expr, tester: &ZeroTester) -> Result<Expr, ExprError> {
    if e.as_num().is_some() || !tester.is_zero(&e)? {
        return Ok(e);
    }
    Ok(Expr::zero())
}

/// Solves `equations[i] = 0` for `unknowns`. Pivots are chosen by zero
/// testing, so symbolic coefficients that vanish identically are never used.
pub fn solve_linear(
    equations: &[Expr],
    unknowns: &[String],
    tester: &ZeroTester,
) -> Result<SolveResult, ExprError> {
    let unknown_set: BTreeSet<&str> = unknowns.iter().map(String::as_str).collect();
    let zero_unknowns: BTreeMap<String, Expr> =
        unknowns.iter().map(|u| (u.clone(), Expr::zero())).collect();

    let mut rows = Vec::with_capacity(equations.len());
    for (index, eq) in equations.iter().enumerate() {
        if degree(eq, &unknown_set).is_none_or(|d| d > 1) {
            let culprit = unknowns
                .iter()
                .find(|u| {
                    let one: BTreeSet<&str> = [u.as_str()].into();
                    eq.contains_name(u) && degree(eq, &one).is_none_or(|d| d > 1)
                })
                .or_else(|| unknowns.iter().find(|u| eq.contains_name(u)))
                .cloned()
                .unwrap_or_default();
            return Err(ExprError::NonlinearInUnknowns { index, unknown: culprit });
        }
        rows.push(Row {
            coeffs: unknowns.iter().map(|u| differentiate(eq, u)).collect(),
            constant: eq.substitute(&zero_unknowns),
            source: index,
        });
    }

    let mut pivot_of_col: Vec<Option<usize>> = vec![None; unknowns.len()];
    let mut is_pivot_row = vec![false; rows.len()];
    for col in 0..unknowns.len() {
        let mut best: Option<(usize, bool, usize)> = None;
        for (r, row) in rows.iter().enumerate() {
            if is_pivot_row[r] || row.coeffs[col].is_zero() {
                continue;
            }
            if tester.is_zero(&row.coeffs[col])? {
                continue;
            }
            let numeric = row.coeffs[col].as_num().is_some();
            let size = row.coeffs[col].size();
            let better = match best {
                None => true,
                Some((_, bn, bs)) => (numeric && !bn) || (numeric == bn && size < bs),
            };
            if better {
                best = Some((r, numeric, size));
            }
        }
        let Some((p, _, _)) = best else { continue };
        is_pivot_row[p] = true;
        pivot_of_col[col] = Some(p);

        let inv = rows[p].coeffs[col].recip();
        let pivot_row = Row {
            coeffs: rows[p]
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| if j == col { Expr::one() } else { c * &inv })
                .collect(),
            constant: &rows[p].constant * &inv,
            source: rows[p].source,
        };
        for (r, row) in rows.iter_mut().enumerate() {
            if r == p || row.coeffs[col].is_zero() {
                continue;
            }
            let factor = row.coeffs[col].clone();
            for j in 0..unknowns.len() {
                row.coeffs[j] = if j == col {
                    Expr::zero()
                } else {
                    prune(&row.coeffs[j] - &factor * &pivot_row.coeffs[j], tester)?
                };
            }
            row.constant = prune(&row.constant - &factor * &pivot_row.constant, tester)?;
        }
        rows[p] = pivot_row;
    }

    let free: Vec<String> = unknowns
        .iter()
        .enumerate()
        .filter(|(c, _)| pivot_of_col[*c].is_none())
        .map(|(_, u)| u.clone())
        .collect();

    let mut solved = Vec::new();
    for (col, pivot) in pivot_of_col.iter().enumerate() {
        let Some(p) = *pivot else { continue };
        let row = &rows[p];
        let mut terms = vec![row.constant.clone()];
        for (j, u) in unknowns.iter().enumerate() {
            if pivot_of_col[j].is_none() && !tester.is_zero(&row.coeffs[j])? {
                terms.push(&row.coeffs[j] * Expr::var(u));
            }
        }
        solved.push((unknowns[col].clone(), neg(add(terms))));
    }

    let mut residuals = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if is_pivot_row[r] || tester.is_zero(&row.constant)? {
            continue;
        }
        if row.constant.free_names().is_empty() {
            return Err(ExprError::InconsistentSystem {
                index: row.source,
                value: row.constant.to_string(),
            });
        }
        residuals.push(Residual {
            expr: normalize_constant_factor(&row.constant),
            source: row.source,
        });
    }

    Ok(SolveResult { solved, residuals, free })
}
