//! Plain-text model dump.
//!
//! ```text
//! # repeatrec model v1
//! lambda = 0.8
//! anchor_day = 12
//! normalization = l1_per_user
//! n_items = 431
//! grand_total = 57
//! user.<id>.pi = 0.61
//! user.<id>.iterations = 14
//! user.<id>.converged = true
//! user.<id>.fitted = true
//! user.<id>.total = 1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. User ids must not
//! contain whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ids::UserId;
use crate::scalar::Scalar;

use super::{CountStats, MixtureParams, ModelError, Normalization, UserFit};

pub const MODEL_HEADER: &str = "# repeatrec model v1";

#[derive(Clone, Debug, PartialEq)]
pub struct UserSummary<T = f64> {
    pub pi: T,
    pub iterations: usize,
    pub converged: bool,
    pub fitted: bool,
    pub total: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDump<T = f64> {
    pub lambda: T,
    pub anchor_day: u32,
    pub normalization: Normalization,
    pub n_items: usize,
    pub grand_total: T,
    pub users: BTreeMap<UserId, UserSummary<T>>,
}

impl<T: Scalar> ModelDump<T> {
    pub fn new(counts: &CountStats<T>, params: &MixtureParams<T>) -> Self {
        let users = params
            .users
            .iter()
            .map(|(u, fit)| {
                let summary = UserSummary {
                    pi: fit.pi,
                    iterations: fit.iterations,
                    converged: fit.converged,
                    fitted: fit.fitted,
                    total: counts.user_total(u).unwrap_or_else(T::zero),
                };
                (u.clone(), summary)
            })
            .collect();
        Self {
            lambda: counts.lambda(),
            anchor_day: counts.anchor_day(),
            normalization: counts.normalization(),
            n_items: counts.n_items(),
            grand_total: counts.total(),
            users,
        }
    }

    /// Rebuilds the per-user weights; log-likelihood traces are not stored.
    pub fn params(&self) -> MixtureParams<T> {
        let users = self
            .users
            .iter()
            .map(|(u, s)| {
                let fit = UserFit {
                    pi: s.pi,
                    iterations: s.iterations,
                    converged: s.converged,
                    fitted: s.fitted,
                    loglik: Vec::new(),
                };
                (u.clone(), fit)
            })
            .collect();
        MixtureParams { lambda: self.lambda, users }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_HEADER}");
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "anchor_day = {}", self.anchor_day);
        let _ = writeln!(out, "normalization = {}", self.normalization.as_str());
        let _ = writeln!(out, "n_items = {}", self.n_items);
        let _ = writeln!(out, "grand_total = {}", self.grand_total);
        for (u, s) in &self.users {
            let _ = writeln!(out, "user.{u}.pi = {}", s.pi);
            let _ = writeln!(out, "user.{u}.iterations = {}", s.iterations);
            let _ = writeln!(out, "user.{u}.converged = {}", s.converged);
            let _ = writeln!(out, "user.{u}.fitted = {}", s.fitted);
            let _ = writeln!(out, "user.{u}.total = {}", s.total);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let bad = |line: usize, msg: &str| ModelError::Dump { line, reason: msg.to_string() };
        let mut top: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut users: BTreeMap<UserId, BTreeMap<&str, (usize, &str)>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| bad(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("user.") {
                let (user, field) = rest.rsplit_once('.').ok_or_else(|| bad(line, "malformed user key"))?;
                users.entry(UserId::new(user)).or_default().insert(field, (line, value));
            } else {
                top.insert(key, (line, value));
            }
        }
        fn get<'a>(m: &BTreeMap<&str, (usize, &'a str)>, key: &str) -> Result<(usize, &'a str), ModelError> {
            m.get(key).copied().ok_or_else(|| ModelError::Dump { line: 0, reason: format!("missing key `{key}`") })
        }
        fn num<T: Scalar>((line, v): (usize, &str)) -> Result<T, ModelError> {
            v.parse::<f64>()
                .ok()
                .and_then(T::from_f64)
                .ok_or_else(|| ModelError::Dump { line, reason: format!("bad number `{v}`") })
        }
        fn int<N: std::str::FromStr>((line, v): (usize, &str)) -> Result<N, ModelError> {
            v.parse().map_err(|_| ModelError::Dump { line, reason: format!("bad integer `{v}`") })
        }
        fn flag((line, v): (usize, &str)) -> Result<bool, ModelError> {
            v.parse().map_err(|_| ModelError::Dump { line, reason: format!("bad flag `{v}`") })
        }
        let (nl, nv) = get(&top, "normalization")?;
        let normalization = Normalization::parse(nv).ok_or_else(|| bad(nl, "unknown normalization"))?;
        let users = users
            .into_iter()
            .map(|(u, fields)| {
                let s = UserSummary {
                    pi: num(get(&fields, "pi")?)?,
                    iterations: int(get(&fields, "iterations")?)?,
                    converged: flag(get(&fields, "converged")?)?,
                    fitted: flag(get(&fields, "fitted")?)?,
                    total: num(get(&fields, "total")?)?,
                };
                Ok((u, s))
            })
            .collect::<Result<_, ModelError>>()?;
        Ok(Self {
            lambda: num(get(&top, "lambda")?)?,
            anchor_day: int(get(&top, "anchor_day")?)?,
            normalization,
            n_items: int(get(&top, "n_items")?)?,
            grand_total: num(get(&top, "grand_total")?)?,
            users,
        })
    }
}
