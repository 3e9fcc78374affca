//! Golden files: `key: value` lines checked semantically against a
//! derivation. Expressions are compared by zero testing of their difference
//! on the final submanifold, never as text.
//!
//! Keys: `system`, `regular`, `hessian.rank`, `final_at`, `free_unknowns`,
//! `residual_velocities` (text); `W<k>.constraints` (ordered, up to sign);
//! `W<k>.origin`, `W<k>.solved_for` (text); `W<k>.determined` (`U = expr`
//! list); `chain.<var>`, `field.<coord>`, `X_L.<coord>`, `X_H.<coord>`,
//! `hamiltonian`, `primary.<coord>` (expressions); `hamiltonian_constraints`
//! (unordered, up to sign).

use std::fmt;
use std::path::{Path, PathBuf};

use contact_sr_core::expr::{Expr, ZeroTester};
use contact_sr_core::geometry::VectorField;
use contact_sr_core::unified::{extract_primary_equations, Chain};

use crate::commands::Derivation;
use crate::CliError;

pub fn golden_path(system_file: &Path) -> PathBuf {
    system_file.with_extension("golden")
}

pub fn parse_golden(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once(':') else {
            return Err(CliError::Schema { key: String::new(), message: format!("golden line {} is not `key: value`", i + 1) });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub key: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub items: Vec<CheckItem>,
}

impl VerifyReport {
    pub fn passes(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn passed_count(&self) -> usize {
        self.items.iter().filter(|i| i.passed).count()
    }

    pub fn item(&self, key: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.key == key)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            let verdict = if i.passed { "ok" } else { "MISMATCH" };
            if i.detail.is_empty() {
                writeln!(f, "{}: {verdict}", i.key)?;
            } else {
                writeln!(f, "{}: {verdict} ({})", i.key, i.detail)?;
            }
        }
        writeln!(f, "verified: {}/{}", self.passed_count(), self.items.len())
    }
}

fn split_list(value: &str) -> Vec<&str> {
    if value == "none" {
        Vec::new()
    } else {
        value.split(';').map(str::trim).filter(|s| !s.is_empty()).collect()
    }
}

struct Checker<'a> {
    d: &'a Derivation,
    tester: ZeroTester,
}

type Outcome = Result<(), String>;

impl Checker<'_> {
    fn parse(&self, src: &str) -> Result<Expr, String> {
        self.d.solution.space.system.parse_expr(src).map_err(|e| format!("`{src}`: {e}"))
    }

    fn zero(&self, e: &Expr) -> Result<bool, String> {
        self.tester.is_zero(e).map_err(|e| e.to_string())
    }

    fn same(&self, actual: &Expr, expected: &str, chain: &Chain) -> Outcome {
        let want = self.parse(expected)?;
        if self.zero(&chain.apply(&(actual - &want)))? {
            Ok(())
        } else {
            Err(format!("got `{actual}`"))
        }
    }

    fn same_up_to_sign(&self, actual: &Expr, want: &Expr) -> Result<bool, String> {
        Ok(self.zero(&(actual - want))? || self.zero(&(actual + want))?)
    }

    fn text(actual: &str, expected: &str) -> Outcome {
        let norm = |s: &str| split_list(s).join("; ");
        if norm(actual) == norm(expected) {
            Ok(())
        } else {
            Err(format!("got `{actual}`"))
        }
    }

    fn field(&self, field: &VectorField, coord: &str, expected: &str, chain: &Chain) -> Outcome {
        let actual = field.component(coord).ok_or_else(|| format!("no coordinate `{coord}`"))?;
        self.same(actual, expected, chain)
    }

    fn generation(&self, k: &str) -> Result<&contact_sr_core::unified::Generation, String> {
        let gens = &self.d.solution.ladder.generations;
        k.parse::<usize>()
            .ok()
            .and_then(|k| k.checked_sub(1))
            .and_then(|k| gens.get(k))
            .ok_or_else(|| format!("the ladder has {} generations", gens.len()))
    }

    fn check(&self, key: &str, expected: &str) -> Outcome {
        let sol = &self.d.solution;
        let sys = &sol.space.system;
        let hp = &self.d.hamiltonian;
        match key {
            "system" => return Self::text(&sys.name, expected),
            "regular" | "hessian.rank" => {
                let h = self.d.hessian.as_ref().map_err(|e| e.to_string())?;
                let actual = if key == "regular" { h.is_regular().to_string() } else { format!("{} of {}", h.rank, sys.n()) };
                return Self::text(&actual, expected);
            }
            "final_at" => return Self::text(&format!("W{}", sol.ladder.final_index()), expected),
            "free_unknowns" => return Self::text(&sol.free_unknowns().join("; "), expected),
            "residual_velocities" => return Self::text(&hp.residual_velocities.join("; "), expected),
            "hamiltonian" => return self.same(&hp.hamiltonian, expected, &hp.chain),
            "hamiltonian_constraints" => return self.unordered(&hp.constraints, expected),
            _ => {}
        }
        let (head, tail) = key.split_once('.').ok_or("unknown key")?;
        match head {
            "field" => self.field(&sol.resolved_field(), tail, expected, &sol.chain),
            "X_L" => self.field(&self.d.lagrangian_field, tail, expected, &sol.chain),
            "X_H" => self.field(&hp.field, tail, expected, &hp.chain),
            "chain" => {
                let actual = sol.chain.get(tail).ok_or_else(|| format!("`{tail}` is not designated"))?;
                self.same(actual, expected, &Chain::new())
            }
            "primary" => {
                let (field, _) = extract_primary_equations(&sol.space).map_err(|e| e.to_string())?;
                let actual = field.slot(tail).ok_or_else(|| format!("no slot `{tail}`"))?.clone();
                self.same(&actual, expected, &Chain::new())
            }
            w if w.starts_with('W') => {
                let g = self.generation(&w[1..])?;
                match tail {
                    "constraints" => {
                        let want = split_list(expected);
                        if want.len() != g.constraints.len() {
                            return Err(format!("{} constraints, expected {}", g.constraints.len(), want.len()));
                        }
                        for (c, w) in g.constraints.iter().zip(want) {
                            if !self.same_up_to_sign(&c.expr, &self.parse(w)?)? {
                                return Err(format!("got `{}`, expected `{w}`", c.expr));
                            }
                        }
                        Ok(())
                    }
                    "origin" => Self::text(g.constraints.first().map_or("tangency", |c| c.origin.label()), expected),
                    "solved_for" => {
                        let vars: Vec<String> = g.constraints.iter().map(|c| c.variable.clone()).collect();
                        Self::text(&vars.join("; "), expected)
                    }
                    "determined" => {
                        let want = split_list(expected);
                        if want.len() != g.determined.len() {
                            return Err(format!("{} determined, expected {}", g.determined.len(), want.len()));
                        }
                        for item in want {
                            let (u, e) = item.split_once('=').ok_or_else(|| format!("`{item}` is not `U = expr`"))?;
                            let actual = g
                                .determined
                                .iter()
                                .find(|(name, _)| name == u.trim())
                                .ok_or_else(|| format!("`{}` is not determined here", u.trim()))?;
                            self.same(&actual.1, e, &sol.chain)?;
                        }
                        Ok(())
                    }
                    _ => Err("unknown key".into()),
                }
            }
            _ => Err("unknown key".into()),
        }
    }

    fn unordered(&self, actual: &[Expr], expected: &str) -> Outcome {
        let want = split_list(expected);
        if want.len() != actual.len() {
            return Err(format!("{} constraints, expected {}", actual.len(), want.len()));
        }
        let mut used = vec![false; actual.len()];
        for w in want {
            let w = self.parse(w)?;
            let mut found = false;
            for (i, a) in actual.iter().enumerate() {
                if !used[i] && self.same_up_to_sign(a, &w)? {
                    used[i] = true;
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(format!("no match for `{w}`"));
            }
        }
        Ok(())
    }
}

/// One [`CheckItem`] per golden entry.
pub fn check_golden(d: &Derivation, entries: &[(String, String)]) -> VerifyReport {
    let checker = Checker { d, tester: d.solution.tester() };
    let items = entries
        .iter()
        .map(|(key, expected)| {
            let result = checker.check(key, expected);
            CheckItem { key: key.clone(), passed: result.is_ok(), detail: result.err().unwrap_or_default() }
        })
        .collect();
    VerifyReport { items }
}
