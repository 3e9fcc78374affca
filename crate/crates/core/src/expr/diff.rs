use super::simplify::{add, func, mul, pow};
use super::{Expr, Func, Node};

/// Exact partial derivative with respect to `var`, in canonical form.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    if !e.contains_name(var) {
        return Expr::zero();
    }
    match e.node() {
        Node::Num(_) => Expr::zero(),
        Node::Var(n) | Node::Param(n) => {
            if &**n == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(ts) => add(ts.iter().map(|t| differentiate(t, var)).collect()),
        Node::Mul(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for (i, f) in fs.iter().enumerate() {
                let df = differentiate(f, var);
                if df.is_zero() {
                    continue;
                }
                let mut parts: Vec<Expr> = fs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, g)| g.clone())
                    .collect();
                parts.push(df);
                terms.push(mul(parts));
            }
            add(terms)
        }
        Node::Pow(b, k) => mul(vec![Expr::int(*k), pow(b.clone(), k - 1), differentiate(b, var)]),
        Node::Func(f, a) => {
            let da = differentiate(a, var);
            let outer = match f {
                Func::Sin => func(Func::Cos, a.clone()),
                Func::Cos => mul(vec![Expr::int(-1), func(Func::Sin, a.clone())]),
                Func::Sqrt => mul(vec![Expr::rational(1, 2), pow(e.clone(), -1)]),
                Func::Exp => e.clone(),
                Func::Ln => pow(a.clone(), -1),
            };
            mul(vec![outer, da])
        }
    }
}
