use serde::{Deserialize, Serialize};

use super::{FactorKind, Index, IndexExpr, Term, Variance};
use crate::tuple::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    /// Every label appears once or twice per term.
    Plain,
    /// Additionally, summed pairs must be one lower and one upper index.
    MetricAware,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
    /// Byte offsets of the offending indices or factors.
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// Free labels of the first term, by first appearance.
    pub free_indices: Vec<char>,
    pub output_order: usize,
    pub violations: Vec<Violation>,
}

pub const ONCE_OR_TWICE: &str = "once-or-twice";
pub const VARIANCE_PAIRING: &str = "variance-pairing";
pub const FREE_INDEX_MISMATCH: &str = "free-index-mismatch";
pub const EPSILON_ARITY: &str = "epsilon-arity";
pub const DELTA_ARITY: &str = "delta-arity";

/// Checks the summation rules term by term. Never fails; problems are
/// collected as violations.
pub fn validate(expr: &IndexExpr, metric: &Metric, mode: CheckMode) -> ValidationReport {
    let mut violations = Vec::new();
    let mut reference: Option<Vec<(char, Variance)>> = None;
    let mut free_indices = Vec::new();
    for (t, term) in expr.terms.iter().enumerate() {
        check_symbols(term, metric.dim, &mut violations);
        let free = check_labels(term, mode, &mut violations);
        let mut key: Vec<(char, Variance)> = free.iter().map(|i| (i.label, i.variance)).collect();
        if mode == CheckMode::Plain {
            key.iter_mut().for_each(|k| k.1 = Variance::Lower);
        }
        key.sort();
        match &reference {
            None => {
                free_indices = free.iter().map(|i| i.label).collect();
                reference = Some(key);
            }
            Some(r) if *r != key => violations.push(Violation {
                rule: FREE_INDEX_MISMATCH.into(),
                message: format!(
                    "term {} has free indices {{{}}} but term 1 has {{{}}}",
                    t + 1,
                    describe(&key),
                    describe(r)
                ),
                positions: free.iter().map(|i| i.offset).collect(),
            }),
            Some(_) => {}
        }
    }
    ValidationReport { valid: violations.is_empty(), output_order: free_indices.len(), free_indices, violations }
}

fn describe(labels: &[(char, Variance)]) -> String {
    labels.iter().map(|(c, _)| c.to_string()).collect::<Vec<_>>().join(", ")
}

/// Returns the term's free indices in first-appearance order.
fn check_labels<'a>(term: &'a Term, mode: CheckMode, violations: &mut Vec<Violation>) -> Vec<&'a Index> {
    let mut groups: Vec<(char, Vec<&Index>)> = Vec::new();
    for index in term.indices() {
        match groups.iter_mut().find(|(c, _)| *c == index.label) {
            Some((_, v)) => v.push(index),
            None => groups.push((index.label, vec![index])),
        }
    }
    let mut free = Vec::new();
    for (label, occurrences) in groups {
        match occurrences.as_slice() {
            [single] => free.push(*single),
            [a, b] => {
                if mode == CheckMode::MetricAware && a.variance == b.variance {
                    violations.push(Violation {
                        rule: VARIANCE_PAIRING.into(),
                        message: format!("summed label {label} must pair one lower with one upper index"),
                        positions: vec![a.offset, b.offset],
                    });
                }
            }
            many => violations.push(Violation {
                rule: ONCE_OR_TWICE.into(),
                message: format!("label {label} appears {} times", many.len()),
                positions: many.iter().map(|i| i.offset).collect(),
            }),
        }
    }
    free
}

fn check_symbols(term: &Term, dim: usize, violations: &mut Vec<Violation>) {
    for factor in &term.factors {
        let n = factor.indices.len();
        match factor.kind {
            FactorKind::Epsilon => {
                let mut labels: Vec<char> = factor.indices.iter().map(|i| i.label).collect();
                labels.sort_unstable();
                labels.dedup();
                if n != dim || labels.len() != n {
                    violations.push(Violation {
                        rule: EPSILON_ARITY.into(),
                        message: format!("eps needs {dim} distinct labels, has {n} with {} distinct", labels.len()),
                        positions: vec![factor.offset],
                    });
                }
            }
            FactorKind::Delta if n != 2 => violations.push(Violation {
                rule: DELTA_ARITY.into(),
                message: format!("delta needs 2 labels, has {n}"),
                positions: vec![factor.offset],
            }),
            _ => {}
        }
    }
}
