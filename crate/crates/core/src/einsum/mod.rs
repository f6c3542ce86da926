//! Index-notation expressions: parsing, summation-rule checking, brute-force
//! evaluation and the three-dimensional Levi-Civita pair identity.
//!
//! Concrete syntax: `u_i v_i w_j`, `T_i^j u_j`, `eps_ijk`, `delta_ij`, with
//! additive terms joined by `+` or `-`. Labels are single lowercase letters.

mod eval;
mod parse;
mod rewrite;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, Tensor, MAX_DIM, MAX_LABELS};
pub use parse::parse;
pub use rewrite::rewrite_epsilon_pair;
pub use validate::{validate, CheckMode, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    Lower,
    Upper,
}

impl Variance {
    fn marker(self) -> char {
        match self {
            Variance::Lower => '_',
            Variance::Upper => '^',
        }
    }
}

/// One index slot: its label, variance and byte offset in the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Index {
    pub label: char,
    pub variance: Variance,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum FactorKind {
    Tensor(String),
    /// Levi-Civita symbol.
    Epsilon,
    /// Kronecker delta.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub indices: Vec<Index>,
    pub offset: usize,
}

impl Factor {
    pub fn name(&self) -> &str {
        match &self.kind {
            FactorKind::Tensor(name) => name,
            FactorKind::Epsilon => "eps",
            FactorKind::Delta => "delta",
        }
    }
}

/// A signed product of factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub negative: bool,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = &Index> {
        self.factors.iter().flat_map(|f| f.indices.iter())
    }
}

/// A sum of terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexExpr {
    pub terms: Vec<Term>,
}

impl IndexExpr {
    /// Tensor names referenced anywhere, in first-appearance order.
    pub fn tensor_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for f in self.terms.iter().flat_map(|t| &t.factors) {
            if let FactorKind::Tensor(name) = &f.kind {
                if !names.contains(&name.as_str()) {
                    names.push(name);
                }
            }
        }
        names
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        let mut current = None;
        for index in &self.indices {
            if current != Some(index.variance) {
                write!(f, "{}", index.variance.marker())?;
                current = Some(index.variance);
            }
            write!(f, "{}", index.label)?;
        }
        Ok(())
    }
}

/// Canonical form: single spaces between factors, ` + ` / ` - ` between
/// terms, a leading `-` for a negative first term.
impl fmt::Display for IndexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, term) in self.terms.iter().enumerate() {
            match (t, term.negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            for (k, factor) in term.factors.iter().enumerate() {
                if k > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{factor}")?;
            }
        }
        Ok(())
    }
}
