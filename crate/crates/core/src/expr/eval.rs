//! Numeric evaluation: a checked tree walk over a [`Binding`] and an
//! unchecked compiled form for integrator inner loops.

use std::collections::BTreeMap;

use super::{Expr, ExprError, Func, Node};

/// Name -> value.
pub type Binding = BTreeMap<String, f64>;

/// Unit roundoff used by the running error bound, doubled for headroom.
const ROUNDOFF: f64 = f64::EPSILON;

impl Expr {
    /// Evaluates with domain checking: `sqrt` of a negative, `ln` of a
    /// non-positive value, division by zero and non-finite results are errors.
    pub fn eval(&self, binding: &Binding) -> Result<f64, ExprError> {
        self.eval_with_error(binding).map(|(v, _)| v)
    }

    /// Value together with a first-order bound on the rounding error
    /// accumulated while computing it. Bound names are taken as exact.
    pub fn eval_with_error(&self, binding: &Binding) -> Result<(f64, f64), ExprError> {
        let (v, err) = match self.node() {
            Node::Num(n) => {
                let v = n.to_f64();
                (v, ROUNDOFF * v.abs())
            }
            Node::Var(n) | Node::Param(n) => {
                (*binding.get(&**n).ok_or_else(|| ExprError::Unbound(n.to_string()))?, 0.0)
            }
            Node::Add(ts) => {
                let (mut s, mut err) = (0.0, 0.0);
                for t in ts {
                    let (v, e) = t.eval_with_error(binding)?;
                    s += v;
                    err += e + ROUNDOFF * s.abs();
                }
                (s, err)
            }
            Node::Mul(fs) => {
                let (mut p, mut err) = (1.0_f64, 0.0);
                for f in fs {
                    let (v, e) = f.eval_with_error(binding)?;
                    err = err * v.abs() + p.abs() * e;
                    p *= v;
                    err += ROUNDOFF * p.abs();
                }
                (p, err)
            }
            Node::Pow(b, k) => {
                let (x, e) = b.eval_with_error(binding)?;
                if x == 0.0 && *k < 0 {
                    return Err(ExprError::Evaluation(format!("division by zero in `{self}`")));
                }
                let v = x.powi(*k as i32);
                let k = k.unsigned_abs() as f64;
                let slope = if x == 0.0 { 0.0 } else { k * (v / x).abs() };
                (v, slope * e + k * ROUNDOFF * v.abs())
            }
            Node::Func(f, a) => {
                let (x, e) = a.eval_with_error(binding)?;
                let (v, slope) = match f {
                    Func::Sin => (x.sin(), x.cos().abs()),
                    Func::Cos => (x.cos(), x.sin().abs()),
                    Func::Exp => (x.exp(), x.exp()),
                    Func::Sqrt if x < 0.0 => {
                        return Err(ExprError::Evaluation(format!("sqrt of negative value {x}")))
                    }
                    Func::Sqrt => {
                        let v = x.sqrt();
                        // |sqrt(x + e) - sqrt(x)| <= sqrt(e) covers v = 0
                        return Ok((v, (e / (2.0 * v)).min(e.sqrt()) + ROUNDOFF * v));
                    }
                    Func::Ln if x <= 0.0 => {
                        return Err(ExprError::Evaluation(format!("ln of non-positive value {x}")))
                    }
                    Func::Ln => (x.ln(), 1.0 / x),
                };
                (v, slope * e + ROUNDOFF * v.abs())
            }
        };
        if v.is_finite() {
            Ok((v, err))
        } else {
            Err(ExprError::Evaluation(format!("non-finite value in `{self}`")))
        }
    }
}

/// How a name is resolved when compiling.
#[derive(Debug, Clone, Copy)]
pub enum Slot {
    Index(usize),
    Value(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Load(usize),
    Add(Vec<Op>),
    Mul(Vec<Op>),
    Pow(Box<Op>, i32),
    Func(Func, Box<Op>),
}

/// An expression with names resolved to state indices or constants.
/// Domain violations surface as NaN.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    op: Op,
}

impl CompiledExpr {
    pub fn compile(e: &Expr, resolve: &dyn Fn(&str) -> Option<Slot>) -> Result<Self, ExprError> {
        Ok(CompiledExpr { op: compile_op(e, resolve)? })
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        run(&self.op, state)
    }
}

fn compile_op(e: &Expr, resolve: &dyn Fn(&str) -> Option<Slot>) -> Result<Op, ExprError> {
    Ok(match e.node() {
        Node::Num(n) => Op::Const(n.to_f64()),
        Node::Var(n) | Node::Param(n) => match resolve(n) {
            Some(Slot::Index(i)) => Op::Load(i),
            Some(Slot::Value(v)) => Op::Const(v),
            None => return Err(ExprError::Unbound(n.to_string())),
        },
        Node::Add(ts) => Op::Add(ts.iter().map(|t| compile_op(t, resolve)).collect::<Result<_, _>>()?),
        Node::Mul(fs) => Op::Mul(fs.iter().map(|f| compile_op(f, resolve)).collect::<Result<_, _>>()?),
        Node::Pow(b, k) => Op::Pow(Box::new(compile_op(b, resolve)?), *k as i32),
        Node::Func(f, a) => Op::Func(*f, Box::new(compile_op(a, resolve)?)),
    })
}

fn run(op: &Op, s: &[f64]) -> f64 {
    match op {
        Op::Const(c) => *c,
        Op::Load(i) => s[*i],
        Op::Add(xs) => xs.iter().map(|x| run(x, s)).sum(),
        Op::Mul(xs) => xs.iter().map(|x| run(x, s)).product(),
        Op::Pow(b, k) => run(b, s).powi(*k),
        Op::Func(f, a) => {
            let x = run(a, s);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Sqrt => x.sqrt(),
                Func::Ln => x.ln(),
            }
        }
    }
}
