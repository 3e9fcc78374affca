//! Line-oriented system files.
//!
//! ```text
//! # comment
//! name = pendulum
//! q = r theta lam
//! lagrangian = 1/2*m*(vr^2 + r^2*vtheta^2)
//!     - m*g*r*(1 - cos(theta)) + lam*(r - l) - gamma*z
//! param.m = 1
//! domain.r = 0.5 2
//! init.theta = 0.3
//! gauge.F2 = 0
//! ```
//!
//! A line that starts with whitespace continues the previous value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use contact_sr_core::expr::{parse_expr_with, Binding, DomainBox, Expr};
use contact_sr_core::geometry::LagrangianSystem;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemFile {
    pub name: String,
    pub q: Vec<String>,
    pub lagrangian: String,
    pub params: Vec<(String, f64)>,
    pub domain: Vec<(String, f64, f64)>,
    pub init: Vec<(String, f64)>,
    pub gauge: Vec<(String, String)>,
}

/// A validated system together with its optional run inputs.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub path: PathBuf,
    pub file: SystemFile,
    pub system: LagrangianSystem,
    pub init: Binding,
    pub gauge: BTreeMap<String, Expr>,
}

fn schema(key: &str, message: impl Into<String>) -> CliError {
    CliError::Schema { key: key.to_string(), message: message.into() }
}

fn number(key: &str, text: &str) -> Result<f64, CliError> {
    let v: f64 = text.trim().parse().map_err(|_| schema(key, format!("`{}` is not a number", text.trim())))?;
    if !v.is_finite() {
        return Err(schema(key, "value is not finite"));
    }
    Ok(v)
}

fn entries(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with([' ', '\t']) {
            let Some(last) = out.last_mut() else {
                return Err(schema("", format!("line {} continues nothing", i + 1)));
            };
            last.1.push(' ');
            last.1.push_str(line.trim());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(schema("", format!("line {} is not `key = value`", i + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_system_file(text: &str) -> Result<SystemFile, CliError> {
    let mut f = SystemFile::default();
    let mut seen = BTreeSet::new();
    for (key, value) in entries(text)? {
        if !seen.insert(key.clone()) {
            return Err(schema(&key, "key appears twice"));
        }
        match key.split_once('.') {
            None => match key.as_str() {
                "name" => f.name = value,
                "q" => f.q = value.split_whitespace().map(str::to_string).collect(),
                "lagrangian" => f.lagrangian = value,
                _ => return Err(schema(&key, "unknown key")),
            },
            Some(("param", p)) => f.params.push((p.to_string(), number(&key, &value)?)),
            Some(("init", c)) => f.init.push((c.to_string(), number(&key, &value)?)),
            Some(("gauge", u)) => f.gauge.push((u.to_string(), value)),
            Some(("domain", c)) => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [lo, hi] = parts[..] else {
                    return Err(schema(&key, "expected `lo hi`"));
                };
                let (lo, hi) = (number(&key, lo)?, number(&key, hi)?);
                if lo >= hi {
                    return Err(schema(&key, format!("empty interval [{lo}, {hi}]")));
                }
                f.domain.push((c.to_string(), lo, hi));
            }
            Some(_) => return Err(schema(&key, "unknown key")),
        }
    }
    for (key, missing) in [("name", f.name.is_empty()), ("q", f.q.is_empty()), ("lagrangian", f.lagrangian.is_empty())] {
        if missing {
            return Err(schema(key, "required key is missing"));
        }
    }
    Ok(f)
}

/// Builds the system; `seed` overrides the zero-test seed.
pub fn build_system(path: &Path, file: SystemFile, seed: Option<u64>) -> Result<LoadedSystem, CliError> {
    let names: BTreeSet<String> = file.params.iter().map(|(k, _)| k.clone()).collect();
    for q in &file.q {
        if names.contains(q) {
            return Err(schema(&format!("param.{q}"), "parameter shadows a configuration variable"));
        }
    }
    let lagrangian =
        parse_expr_with(&file.lagrangian, &names).map_err(|source| CliError::Syntax { key: "lagrangian".into(), source })?;
    let mut domain = DomainBox::new();
    for (c, lo, hi) in &file.domain {
        domain.insert(c, *lo, *hi).map_err(|e| schema(&format!("domain.{c}"), e.to_string()))?;
    }
    let params: BTreeMap<String, f64> = file.params.iter().cloned().collect();
    let mut system = LagrangianSystem::new(&file.name, file.q.clone(), lagrangian, params, domain)?;
    if let Some(seed) = seed {
        system = system.with_seed(seed);
    }
    let coords: BTreeSet<String> = system.unified_coords().into_iter().collect();
    for (c, _, _) in &file.domain {
        if !coords.contains(c) {
            return Err(schema(&format!("domain.{c}"), "not a coordinate of the system"));
        }
    }
    let mut init = Binding::new();
    for (c, v) in &file.init {
        if !coords.contains(c) {
            return Err(schema(&format!("init.{c}"), "not a coordinate of the system"));
        }
        init.insert(c.clone(), *v);
    }
    let mut gauge = BTreeMap::new();
    for (u, src) in &file.gauge {
        let key = format!("gauge.{u}");
        let e = system.parse_expr(src).map_err(|source| CliError::Syntax { key, source })?;
        gauge.insert(u.clone(), e);
    }
    Ok(LoadedSystem { path: path.to_path_buf(), file, system, init, gauge })
}

pub fn load_system(path: &Path, seed: Option<u64>) -> Result<LoadedSystem, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::FileNotFound { path: path.to_path_buf() },
        _ => CliError::Io { path: path.to_path_buf(), message: e.to_string() },
    })?;
    build_system(path, parse_system_file(&text)?, seed)
}
