//! Canonicalizing constructors.
//!
//! Rewrite set, applied bottom-up on every construction:
//!
//! 1. flattening of nested sums and products;
//! 2. constant folding (exact for rationals, floats absorb);
//! 3. `0`/`1` absorption in sums and products;
//! 4. like-term collection in sums (`2*x*y + x*y -> 3*x*y`);
//! 5. equal-base collection in products (`x^2 * x^-1 -> x`);
//! 6. distribution of products over sums, expansion of small positive powers of sums;
//! 7. `(x^a)^b -> x^(a*b)`, `(x*y)^k -> x^k*y^k`, `sqrt(u)^(2k) -> u^k`;
//! 8. `c*M*sin(a)^2 + c*M*cos(a)^2 -> c*M`;
//! 9. function folding at special or numeric arguments, `sin(-a) -> -sin(a)`, `cos(-a) -> cos(a)`.
//!
//! Operand order inside sums and products follows `Ord for Expr`, so equal
//! trees serialize identically.

use std::collections::BTreeMap;
use std::ops;

use super::{Expr, Func, Node, Number};

/// Upper bound on the number of terms produced when expanding `(a + b + ...)^k`.
const MAX_EXPANSION_TERMS: usize = 256;

pub fn simplify(e: &Expr) -> Expr {
    rebuild(e, &|_| None)
}

/// Rebuilds `e` through the canonical constructors, replacing names for which
/// `lookup` returns a value.
pub(crate) fn rebuild(e: &Expr, lookup: &dyn Fn(&str) -> Option<Expr>) -> Expr {
    match e.node() {
        Node::Num(_) => e.clone(),
        Node::Var(n) | Node::Param(n) => lookup(n).unwrap_or_else(|| e.clone()),
        Node::Func(f, a) => func(*f, rebuild(a, lookup)),
        Node::Pow(b, k) => pow(rebuild(b, lookup), *k),
        Node::Mul(fs) => mul(fs.iter().map(|f| rebuild(f, lookup)).collect()),
        Node::Add(ts) => add(ts.iter().map(|t| rebuild(t, lookup)).collect()),
    }
}

pub fn add(terms: Vec<Expr>) -> Expr {
    let mut constant = Number::ZERO;
    let mut monomials: BTreeMap<Expr, Number> = BTreeMap::new();
    let mut stack = terms;
    while let Some(t) = stack.pop() {
        match t.node() {
            Node::Num(n) => constant = constant.add(*n),
            Node::Add(ts) => stack.extend(ts.iter().cloned()),
            _ => {
                let (c, m) = split_coefficient(&t);
                let slot = monomials.entry(m).or_insert(Number::ZERO);
                *slot = slot.add(c);
            }
        }
    }
    pair_pythagorean(&mut monomials, &mut constant);

    let mut out = Vec::with_capacity(monomials.len() + 1);
    if !constant.is_zero() {
        out.push(Expr::num(constant));
    }
    for (m, c) in monomials {
        if c.is_zero() {
            continue;
        }
        out.push(attach_coefficient(c, m));
    }
    out.sort();
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::from_node(Node::Add(out)),
    }
}

/// `t = c * monomial` with `c` numeric.
fn split_coefficient(t: &Expr) -> (Number, Expr) {
    if let Node::Mul(fs) = t.node() {
        if let Some(c) = fs[0].as_num() {
            let rest = &fs[1..];
            let m = if rest.len() == 1 {
                rest[0].clone()
            } else {
                Expr::from_node(Node::Mul(rest.to_vec()))
            };
            return (c, m);
        }
    }
    (Number::ONE, t.clone())
}

fn attach_coefficient(c: Number, m: Expr) -> Expr {
    if c.is_one() {
        return m;
    }
    let mut fs = vec![Expr::num(c)];
    match m.node() {
        Node::Mul(ms) => fs.extend(ms.iter().cloned()),
        _ => fs.push(m),
    }
    Expr::from_node(Node::Mul(fs))
}

fn monomial_factors(m: &Expr) -> Vec<Expr> {
    match m.node() {
        Node::Mul(fs) => fs.clone(),
        _ => vec![m.clone()],
    }
}

fn sin_squared_arg(f: &Expr) -> Option<Expr> {
    match f.node() {
        Node::Pow(b, 2) => match b.node() {
            Node::Func(Func::Sin, a) => Some(a.clone()),
            _ => None,
        },
        _ => None,
    }
}

/// Merges `c*M*sin(a)^2` with a matching `c*M*cos(a)^2` into `c*M`.
fn pair_pythagorean(monomials: &mut BTreeMap<Expr, Number>, constant: &mut Number) {
    loop {
        let mut hit = None;
        'search: for (m, c) in monomials.iter() {
            if c.is_zero() {
                continue;
            }
            let factors = monomial_factors(m);
            for (i, f) in factors.iter().enumerate() {
                let Some(arg) = sin_squared_arg(f) else {
                    continue;
                };
                let mut cos_factors = factors.clone();
                cos_factors[i] = pow(func(Func::Cos, arg), 2);
                let cos_m = mul(cos_factors);
                if monomials.get(&cos_m) == Some(c) {
                    let mut rest = factors.clone();
                    rest.remove(i);
                    hit = Some((m.clone(), cos_m, mul(rest), *c));
                    break 'search;
                }
            }
        }
        let Some((sin_m, cos_m, rest, c)) = hit else {
            return;
        };
        monomials.remove(&sin_m);
        monomials.remove(&cos_m);
        let (rc, rm) = split_coefficient(&rest);
        match rm.as_num() {
            Some(n) => *constant = constant.add(c.mul(n).mul(rc)),
            None => {
                let slot = monomials.entry(rm).or_insert(Number::ZERO);
                *slot = slot.add(c.mul(rc));
            }
        }
    }
}

pub fn mul(factors: Vec<Expr>) -> Expr {
    let mut coeff = Number::ONE;
    let mut bases: BTreeMap<Expr, i64> = BTreeMap::new();
    let mut stack = factors;
    while let Some(f) = stack.pop() {
        match f.node() {
            Node::Num(n) => coeff = coeff.mul(*n),
            Node::Mul(fs) => stack.extend(fs.iter().cloned()),
            Node::Pow(b, k) if b.as_num().is_none() => {
                let slot = bases.entry(b.clone()).or_insert(0);
                *slot = slot.saturating_add(*k);
            }
            _ => *bases.entry(f.clone()).or_insert(0) += 1,
        }
    }
    if coeff.is_zero() {
        return Expr::zero();
    }

    let mut plain = Vec::new();
    let mut sums = Vec::new();
    let mut again = Vec::new();
    for (b, k) in bases {
        if k == 0 {
            continue;
        }
        let p = pow(b.clone(), k);
        let unchanged = match p.node() {
            Node::Pow(pb, pk) => *pb == b && *pk == k,
            _ => k == 1 && p == b,
        };
        match p.node() {
            Node::Num(n) => coeff = coeff.mul(*n),
            Node::Add(_) if unchanged => sums.push(p),
            _ if unchanged => plain.push(p),
            _ => again.push(p),
        }
    }
    if coeff.is_zero() {
        return Expr::zero();
    }
    if !again.is_empty() {
        again.extend(plain);
        again.extend(sums);
        again.push(Expr::num(coeff));
        return mul(again);
    }
    if !sums.is_empty() {
        let mut rest = plain;
        rest.push(Expr::num(coeff));
        let mut partial = vec![mul(rest)];
        for s in sums {
            partial = partial
                .iter()
                .flat_map(|acc| s.terms().into_iter().map(move |t| mul(vec![acc.clone(), t])))
                .collect();
        }
        return add(partial);
    }

    plain.sort();
    if plain.is_empty() {
        return Expr::num(coeff);
    }
    if coeff.is_one() && plain.len() == 1 {
        return plain.pop().unwrap();
    }
    let mut out = Vec::with_capacity(plain.len() + 1);
    if !coeff.is_one() {
        out.push(Expr::num(coeff));
    }
    out.extend(plain);
    Expr::from_node(Node::Mul(out))
}

pub fn pow(base: Expr, k: i64) -> Expr {
    if k == 0 {
        return Expr::one();
    }
    if k == 1 {
        return base;
    }
    match base.node() {
        Node::Num(n) => match n.powi(k) {
            Some(v) => Expr::num(v),
            None => Expr::from_node(Node::Pow(base.clone(), k)),
        },
        Node::Pow(b, j) => match j.checked_mul(k) {
            Some(jk) => pow(b.clone(), jk),
            None => Expr::from_node(Node::Pow(base.clone(), k)),
        },
        Node::Mul(fs) => mul(fs.iter().map(|f| pow(f.clone(), k)).collect()),
        Node::Func(Func::Sqrt, u) if k.abs() >= 2 => {
            let (q, r) = (k / 2, k % 2);
            mul(vec![pow(u.clone(), q), pow(base.clone(), r)])
        }
        Node::Add(ts) if k >= 2 && expansion_fits(ts.len(), k) => {
            let mut acc = base.clone();
            for _ in 1..k {
                acc = add(
                    acc.terms()
                        .iter()
                        .flat_map(|a| ts.iter().map(move |t| mul(vec![a.clone(), t.clone()])))
                        .collect(),
                );
            }
            acc
        }
        Node::Add(ts) if k <= -2 && expansion_fits(ts.len(), -k) => {
            pow(pow(base.clone(), -k), -1)
        }
        _ => Expr::from_node(Node::Pow(base, k)),
    }
}

fn expansion_fits(terms: usize, k: i64) -> bool {
    let mut total: usize = 1;
    for _ in 0..k {
        total = match total.checked_mul(terms) {
            Some(t) if t <= MAX_EXPANSION_TERMS => t,
            _ => return false,
        };
    }
    true
}

/// True when the canonical form carries a leading negative coefficient.
fn has_negative_sign(e: &Expr) -> bool {
    match e.node() {
        Node::Num(n) => n.is_negative(),
        Node::Mul(fs) => fs[0].as_num().is_some_and(|c| c.is_negative()),
        _ => false,
    }
}

pub fn func(f: Func, arg: Expr) -> Expr {
    if let Some(n) = arg.as_num() {
        if let Some(v) = fold_function(f, n) {
            return Expr::num(v);
        }
        return Expr::from_node(Node::Func(f, arg));
    }
    match f {
        Func::Sin if has_negative_sign(&arg) => neg(func(Func::Sin, neg(arg))),
        Func::Cos if has_negative_sign(&arg) => func(Func::Cos, neg(arg)),
        _ => Expr::from_node(Node::Func(f, arg)),
    }
}

fn fold_function(f: Func, n: Number) -> Option<Number> {
    let x = n.to_f64();
    match f {
        Func::Sin if n.is_zero() => Some(Number::ZERO),
        Func::Cos | Func::Exp if n.is_zero() => Some(Number::ONE),
        Func::Ln if n.is_one() => Some(Number::ZERO),
        Func::Sqrt => match n.exact_sqrt() {
            Some(r) => Some(r),
            None if x >= 0.0 => Some(Number::float(x.sqrt())),
            None => None,
        },
        Func::Sin => Some(Number::float(x.sin())),
        Func::Cos => Some(Number::float(x.cos())),
        Func::Exp => Some(Number::float(x.exp())),
        Func::Ln if x > 0.0 => Some(Number::float(x.ln())),
        Func::Ln => None,
    }
}

pub fn neg(e: Expr) -> Expr {
    mul(vec![Expr::int(-1), e])
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    add(vec![a, neg(b)])
}

pub fn div(a: Expr, b: Expr) -> Expr {
    mul(vec![a, pow(b, -1)])
}

impl Expr {
    pub fn powi(&self, k: i64) -> Expr {
        pow(self.clone(), k)
    }

    pub fn recip(&self) -> Expr {
        pow(self.clone(), -1)
    }

    pub fn apply(&self, f: Func) -> Expr {
        func(f, self.clone())
    }

    pub fn sin(&self) -> Expr {
        self.apply(Func::Sin)
    }

    pub fn cos(&self) -> Expr {
        self.apply(Func::Cos)
    }

    pub fn sqrt(&self) -> Expr {
        self.apply(Func::Sqrt)
    }

    pub fn exp(&self) -> Expr {
        self.apply(Func::Exp)
    }

    pub fn ln(&self) -> Expr {
        self.apply(Func::Ln)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        add(terms.into_iter().collect())
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        mul(factors.into_iter().collect())
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $f:expr) => {
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(self, rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(self, rhs.clone())
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(self.clone(), rhs)
            }
        }
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(self.clone(), rhs.clone())
            }
        }
    };
}

binop!(Add, add, |a, b| add(vec![a, b]));
binop!(Sub, sub, sub);
binop!(Mul, mul, |a, b| mul(vec![a, b]));
binop!(Div, div, div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::{parse_expr, parse_raw};
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn zero_and_one_absorption() {
        assert_eq!(simplify(&parse_raw("x + 0").unwrap()), Expr::var("x"));
        assert_eq!(simplify(&parse_raw("1*x*1").unwrap()), Expr::var("x"));
        assert_eq!(simplify(&parse_raw("0*sin(x)").unwrap()), Expr::zero());
    }

    #[test]
    fn pythagorean_identity() {
        assert_eq!(simplify(&parse_raw("sin(t)^2 + cos(t)^2").unwrap()), Expr::one());
        assert_eq!(p("3*a*sin(t)^2 + 3*a*cos(t)^2 - 3*a"), Expr::zero());
        // unequal coefficients are left alone
        assert_ne!(p("2*sin(t)^2 + cos(t)^2"), p("1 + sin(t)^2"));
    }

    #[test]
    fn like_terms_and_powers_collect() {
        assert_eq!(p("x*y + 2*y*x"), p("3*x*y"));
        assert_eq!(p("x^2*x^-1"), p("x"));
        assert_eq!(p("(x^2)^3"), p("x^6"));
        assert_eq!(p("(a+b)^2"), p("a^2 + 2*a*b + b^2"));
        assert_eq!(p("(a+b)/(a+b)"), Expr::one());
    }

    #[test]
    fn sqrt_powers_reduce() {
        assert_eq!(p("sqrt(u)^2"), p("u"));
        assert_eq!(p("sqrt(x^2+y^2)^-3*(x^2+y^2)"), p("sqrt(x^2+y^2)^-1"));
        assert_eq!(p("sqrt(9/4)"), Expr::rational(3, 2));
    }

    #[test]
    fn function_symmetries() {
        assert_eq!(p("sin(-x) + sin(x)"), Expr::zero());
        assert_eq!(p("cos(-2*x)"), p("cos(2*x)"));
        assert_eq!(p("cos(0) + exp(0) + ln(1)"), Expr::int(2));
    }

    #[test]
    fn derivative_like_example_is_canonical() {
        let a = p("m*g*(1-cos(theta))");
        let b = p("m*g - g*m*cos(theta)");
        assert_eq!(a, b);
    }
}
