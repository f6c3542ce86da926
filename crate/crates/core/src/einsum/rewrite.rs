use super::{parse, Factor, FactorKind, Index, IndexExpr, Term};
use crate::error::{Error, Result};

/// Replaces a pair of three-index Levi-Civita symbols that share exactly one
/// label with its Kronecker expansion,
/// `eps_iab eps_icd = delta_ac delta_bd - delta_ad delta_bc`.
///
/// The expression must hold exactly two `eps` factors, in the same term,
/// and the shared label must carry the same variance in both. Every other
/// factor and term is kept as is.
pub fn rewrite_epsilon_pair(expr: &IndexExpr) -> Result<IndexExpr> {
    let located: Vec<(usize, usize)> = expr
        .terms
        .iter()
        .enumerate()
        .flat_map(|(t, term)| {
            term.factors.iter().enumerate().filter(|(_, f)| f.kind == FactorKind::Epsilon).map(move |(k, _)| (t, k))
        })
        .collect();
    let [(t1, k1), (t2, k2)] = located[..] else {
        return Err(unsupported(format!("expected exactly two eps factors, found {}", located.len())));
    };
    if t1 != t2 {
        return Err(unsupported("the two eps factors sit in different terms".into()));
    }
    let term = &expr.terms[t1];
    let (first, second) = (&term.factors[k1], &term.factors[k2]);
    if first.indices.len() != 3 || second.indices.len() != 3 {
        return Err(unsupported("only three-index eps factors can be expanded".into()));
    }
    let shared: Vec<char> =
        first.indices.iter().map(|i| i.label).filter(|c| second.indices.iter().any(|j| j.label == *c)).collect();
    if shared.len() != 1 {
        return Err(unsupported(format!("eps factors share {} labels, expected exactly one", shared.len())));
    }
    let (a, b, x) = rotate_to_front(first, shared[0]);
    let (c, d, y) = rotate_to_front(second, shared[0]);
    if x.variance != y.variance {
        return Err(unsupported("shared eps label mixes lower and upper variance".into()));
    }

    let expand = |negative: bool, pairs: [(Index, Index); 2]| {
        let mut factors = Vec::with_capacity(term.factors.len());
        for (k, f) in term.factors.iter().enumerate() {
            if k == k1 {
                factors.extend(pairs.iter().map(|&(p, q)| Factor {
                    kind: FactorKind::Delta,
                    indices: vec![p, q],
                    offset: 0,
                }));
            } else if k != k2 {
                factors.push(f.clone());
            }
        }
        Term { negative, factors }
    };
    let mut terms = Vec::with_capacity(expr.terms.len() + 1);
    for (t, original) in expr.terms.iter().enumerate() {
        if t == t1 {
            terms.push(expand(term.negative, [(a, c), (b, d)]));
            terms.push(expand(!term.negative, [(a, d), (b, c)]));
        } else {
            terms.push(original.clone());
        }
    }
    // reparse so every offset refers to the printed form
    parse(&IndexExpr { terms }.to_string())
}

/// Cyclic rotation (an even permutation) that brings `label` to the front.
fn rotate_to_front(factor: &Factor, label: char) -> (Index, Index, Index) {
    let p = factor.indices.iter().position(|i| i.label == label).expect("shared label present");
    let at = |k: usize| factor.indices[(p + k) % 3];
    (at(1), at(2), at(0))
}

fn unsupported(message: String) -> Error {
    Error::Unsupported(message)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::einsum::{evaluate, Tensor};
    use crate::rng::RngState;
    use crate::tuple::Metric;

    #[test]
    fn displayed_identity() {
        let e = parse("eps_ijk eps_imn").unwrap();
        assert_eq!(rewrite_epsilon_pair(&e).unwrap().to_string(), "delta_jm delta_kn - delta_jn delta_km");
    }

    #[test]
    fn shared_label_in_other_slots() {
        // eps_jki = eps_ijk and eps_mni = eps_imn
        let e = parse("eps_jki eps_mni").unwrap();
        assert_eq!(rewrite_epsilon_pair(&e).unwrap().to_string(), "delta_jm delta_kn - delta_jn delta_km");
        let e = parse("-u_j eps_kij w_m eps_imn").unwrap();
        assert_eq!(
            rewrite_epsilon_pair(&e).unwrap().to_string(),
            "-u_j delta_jm delta_kn w_m + u_j delta_jn delta_km w_m"
        );
    }

    #[test]
    fn unsupported_patterns() {
        for src in ["eps_ijk eps_ijm", "eps_ijk", "eps_ijk u_i + eps_imn v_i", "eps_ijk eps_lmn", "eps_ijk eps_imn eps_abc"] {
            let e = parse(src).unwrap();
            assert!(matches!(rewrite_epsilon_pair(&e), Err(Error::Unsupported(_))), "{src}");
        }
        let e = parse("eps_ij eps_ik").unwrap();
        assert!(matches!(rewrite_epsilon_pair(&e), Err(Error::Unsupported(_))));
        let e = parse("eps_ijk eps^imn").unwrap();
        assert!(matches!(rewrite_epsilon_pair(&e), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rewrite_preserves_value() {
        let original = parse("u_j v_k w_m eps_ijk eps_imn").unwrap();
        let rewritten = rewrite_epsilon_pair(&original).unwrap();
        let metric = Metric::euclidean(3);
        let mut rng = RngState::new(11);
        for _ in 0..100 {
            let bindings: BTreeMap<String, Tensor> = ["u", "v", "w"]
                .iter()
                .map(|name| (name.to_string(), Tensor::new(1, 3, rng.normals(3)).unwrap()))
                .collect();
            let lhs = evaluate(&original, &bindings, &metric).unwrap();
            let rhs = evaluate(&rewritten, &bindings, &metric).unwrap();
            assert!(lhs.max_abs_diff(&rhs) <= 1e-12, "{lhs:?} vs {rhs:?}");
        }
    }
}
