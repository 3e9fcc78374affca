//! Numeric constants: exact rationals while they fit in `i64`, floats otherwise.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy)]
pub enum Number {
    Rational(Rational),
    Float(f64),
}

impl Number {
    pub const ZERO: Number = Number::Rational(Ratio::new_raw(0, 1));
    pub const ONE: Number = Number::Rational(Ratio::new_raw(1, 1));

    pub fn int(i: i64) -> Number {
        Number::Rational(Rational::from_integer(i))
    }

    /// Builds `num/den`; a zero denominator yields a non-finite float.
    pub fn ratio(num: i64, den: i64) -> Number {
        if den == 0 {
            return Number::Float(num as f64 / 0.0);
        }
        Number::Rational(Rational::new(num, den))
    }

    pub fn float(f: f64) -> Number {
        Number::Float(f)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Number::Float(f) => f,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => *r.numer() == 0,
            Number::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(r) => *r.numer() == 1 && *r.denom() == 1,
            Number::Float(f) => f == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        self.to_f64() < 0.0
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Number::Rational(_))
    }

    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => checked(a, b, |x, y| {
                let num = x
                    .numer()
                    .checked_mul(*y.denom())?
                    .checked_add(y.numer().checked_mul(*x.denom())?)?;
                let den = x.denom().checked_mul(*y.denom())?;
                Some(Rational::new(num, den))
            })
            .unwrap_or_else(|| Number::Float(a_f(a) + a_f(b))),
            _ => Number::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => checked(a, b, |x, y| {
                let num = x.numer().checked_mul(*y.numer())?;
                let den = x.denom().checked_mul(*y.denom())?;
                Some(Rational::new(num, den))
            })
            .unwrap_or_else(|| Number::Float(a_f(a) * a_f(b))),
            _ => Number::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => Number::Rational(-r),
            Number::Float(f) => Number::Float(-f),
        }
    }

    /// Integer power. `None` for a zero base with a negative exponent.
    pub fn powi(self, k: i64) -> Option<Number> {
        if k < 0 && self.is_zero() {
            return None;
        }
        match self {
            Number::Rational(r) => {
                let mut acc = Some(Rational::from_integer(1));
                let base = if k < 0 { r.recip() } else { r };
                for _ in 0..k.unsigned_abs() {
                    acc = acc.and_then(|a| {
                        let num = a.numer().checked_mul(*base.numer())?;
                        let den = a.denom().checked_mul(*base.denom())?;
                        Some(Rational::new(num, den))
                    });
                }
                Some(match acc {
                    Some(v) => Number::Rational(v),
                    None => Number::Float(a_f(r).powi(k as i32)),
                })
            }
            Number::Float(f) => Some(Number::Float(f.powi(k as i32))),
        }
    }

    /// Exact square root when both numerator and denominator are perfect squares.
    pub fn exact_sqrt(self) -> Option<Number> {
        match self {
            Number::Rational(r) if *r.numer() >= 0 => {
                let n = isqrt(*r.numer())?;
                let d = isqrt(*r.denom())?;
                Some(Number::Rational(Rational::new(n, d)))
            }
            _ => None,
        }
    }
}

fn a_f(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn checked<F>(a: Rational, b: Rational, f: F) -> Option<Number>
where
    F: FnOnce(Rational, Rational) -> Option<Rational>,
{
    f(a, b).map(Number::Rational)
}

fn isqrt(n: i64) -> Option<i64> {
    if n < 0 {
        return None;
    }
    let r = (n as f64).sqrt().round() as i64;
    (r.checked_mul(r) == Some(n)).then_some(r)
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Number {}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a.cmp(b),
            (Number::Float(a), Number::Float(b)) => a.total_cmp(b),
            (Number::Rational(_), Number::Float(_)) => Ordering::Less,
            (Number::Float(_), Number::Rational(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Number::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            // Debug keeps a decimal point or exponent so the literal re-parses as a float.
            Number::Float(x) => write!(f, "{:?}", x),
        }
    }
}
