//! Randomized zero testing over a box of sample values.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Binding, Expr, ExprError};

pub const DEFAULT_SEED: u64 = 0x00C0_FFEE_5EED;
pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
const MAX_RESAMPLES: usize = 10;
/// Multiple of the first-order rounding bound tolerated on top of `tolerance`.
const ERROR_ALLOWANCE: f64 = 4.0;

/// Closed sampling intervals per name, plus names pinned to a single value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainBox {
    intervals: BTreeMap<String, (f64, f64)>,
    pinned: BTreeMap<String, f64>,
}

impl DomainBox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, lo: f64, hi: f64) -> Result<Self, ExprError> {
        self.insert(name, lo, hi)?;
        Ok(self)
    }

    pub fn pin(mut self, name: &str, value: f64) -> Self {
        self.set_pinned(name, value);
        self
    }

    pub fn insert(&mut self, name: &str, lo: f64, hi: f64) -> Result<(), ExprError> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(ExprError::InvalidInterval { name: name.to_string(), lo, hi });
        }
        self.pinned.remove(name);
        self.intervals.insert(name.to_string(), (lo, hi));
        Ok(())
    }

    pub fn set_pinned(&mut self, name: &str, value: f64) {
        self.intervals.remove(name);
        self.pinned.insert(name.to_string(), value);
    }

    pub fn covers(&self, name: &str) -> bool {
        self.intervals.contains_key(name) || self.pinned.contains_key(name)
    }

    pub fn interval(&self, name: &str) -> Option<(f64, f64)> {
        self.intervals.get(name).copied()
    }

    pub fn intervals(&self) -> impl Iterator<Item = (&String, &(f64, f64))> {
        self.intervals.iter()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Binding {
        let mut b: Binding = self.pinned.clone();
        for (name, &(lo, hi)) in &self.intervals {
            b.insert(name.clone(), rng.random_range(lo..=hi));
        }
        b
    }
}

/// Seeded zero tester. Every call replays the same sample sequence, so
/// verdicts are reproducible for a given seed.
#[derive(Debug, Clone)]
pub struct ZeroTester {
    pub domain: DomainBox,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
}

impl ZeroTester {
    pub fn new(domain: DomainBox) -> Self {
        ZeroTester {
            domain,
            seed: DEFAULT_SEED,
            samples: DEFAULT_SAMPLES,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// True iff `|e| <= tol * (1 + scale) + ERROR_ALLOWANCE * err` at every
    /// sample, where `scale` is the largest magnitude among the top-level terms
    /// of `e` and `err` bounds the rounding error of evaluating `e` there. The
    /// `err` term only matters at ill-conditioned samples, such as points close
    /// to a pole where nested cancellation loses most significant digits.
    pub fn is_zero(&self, e: &Expr) -> Result<bool, ExprError> {
        if let Some(n) = e.as_num() {
            // Folded float constants carry rounding from the cancelled terms.
            return Ok(if n.is_exact() { n.is_zero() } else { n.to_f64().abs() <= self.tolerance });
        }
        for name in e.free_names() {
            if !self.domain.covers(&name) {
                return Err(ExprError::Uncovered(name));
            }
        }
        let terms = e.terms();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.samples {
            let (value, scale, err) = self.sample_terms(&terms, &mut rng)?;
            if value.abs() > self.tolerance * (1.0 + scale) + ERROR_ALLOWANCE * err {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn equal(&self, a: &Expr, b: &Expr) -> Result<bool, ExprError> {
        self.is_zero(&(a - b))
    }

    fn sample_terms(&self, terms: &[Expr], rng: &mut ChaCha8Rng) -> Result<(f64, f64, f64), ExprError> {
        let mut last = None;
        for _ in 0..MAX_RESAMPLES {
            let b = self.domain.sample(rng);
            let mut value = 0.0;
            let mut scale: f64 = 0.0;
            let mut err = 0.0;
            let mut failed = None;
            for t in terms {
                match t.eval_with_error(&b) {
                    Ok((v, e)) => {
                        value += v;
                        scale = scale.max(v.abs());
                        err += e + f64::EPSILON * value.abs();
                    }
                    Err(err) => {
                        failed = Some(err);
                        break;
                    }
                }
            }
            match failed {
                None => return Ok((value, scale, err)),
                Some(err) => last = Some(err),
            }
        }
        Err(last.unwrap_or_else(|| ExprError::Evaluation("no samples".into())))
    }

    /// Deterministic sample bindings, independent of the zero-test stream.
    pub fn bindings(&self, count: usize, stream: u64) -> Vec<Binding> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        (0..count).map(|_| self.domain.sample(&mut rng)).collect()
    }
}

/// [`ZeroTester::is_zero`] with the default seed.
pub fn prob_is_zero(e: &Expr, domain: &DomainBox) -> Result<bool, ExprError> {
    ZeroTester::new(domain.clone()).is_zero(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn trivial_identity() {
        let d = DomainBox::new().with("x", -1.0, 1.0).unwrap();
        assert!(prob_is_zero(&parse_expr("x - x").unwrap(), &d).unwrap());
    }

    #[test]
    fn non_identity_with_pinned_parameter() {
        let d = DomainBox::new().with("r", 0.5, 2.0).unwrap().pin("l", 1.0);
        assert!(!prob_is_zero(&parse_expr("r - l").unwrap(), &d).unwrap());
    }

    #[test]
    fn trig_identity_not_in_rewrite_set() {
        let d = DomainBox::new().with("t", -3.0, 3.0).unwrap();
        let e = parse_expr("cos(2*t) - cos(t)^2 + sin(t)^2").unwrap();
        assert!(!e.is_zero());
        assert!(prob_is_zero(&e, &d).unwrap());
    }

    #[test]
    fn uncovered_name_is_an_error() {
        let d = DomainBox::new().with("x", 0.0, 1.0).unwrap();
        assert_eq!(
            prob_is_zero(&parse_expr("x + y").unwrap(), &d),
            Err(ExprError::Uncovered("y".into()))
        );
    }

    #[test]
    fn persistent_domain_violation_fails() {
        let d = DomainBox::new().with("x", -2.0, -1.0).unwrap();
        assert!(matches!(
            prob_is_zero(&parse_expr("sqrt(x)").unwrap(), &d),
            Err(ExprError::Evaluation(_))
        ));
        // occasional violations are resampled
        let d = DomainBox::new().with("x", -0.01, 1.0).unwrap();
        assert!(prob_is_zero(&parse_expr("sqrt(x)^3 - x*sqrt(x)").unwrap(), &d).unwrap());
    }

    #[test]
    fn invalid_intervals_are_rejected() {
        assert!(DomainBox::new().with("x", 1.0, 1.0).is_err());
        assert!(DomainBox::new().with("x", 2.0, 1.0).is_err());
    }

    #[test]
    fn same_seed_same_verdict() {
        let d = DomainBox::new().with("x", -1.0, 1.0).unwrap();
        let e = parse_expr("x^3 - 1e-12").unwrap();
        let a = ZeroTester::new(d.clone()).with_seed(7).is_zero(&e).unwrap();
        let b = ZeroTester::new(d).with_seed(7).is_zero(&e).unwrap();
        assert_eq!(a, b);
    }
}
