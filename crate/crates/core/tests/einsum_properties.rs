use std::collections::BTreeMap;

use equiscalar::basis::generalized_cross;
use equiscalar::einsum::{evaluate, parse, validate, CheckMode, IndexExpr, Tensor};
use equiscalar::group::{sample_orthogonal, sample_rotation};
use equiscalar::{Mat, Metric, RngState, Vector};
use proptest::prelude::*;

const D: usize = 3;

fn random_vector(rng: &mut RngState) -> Vec<f64> {
    rng.normals(D)
}

fn random_matrix(rng: &mut RngState) -> Vec<Vec<f64>> {
    (0..D).map(|_| rng.normals(D)).collect()
}

fn bindings(u: &[f64], v: &[f64], w: &[f64], a: &[Vec<f64>]) -> BTreeMap<String, Tensor> {
    let mut b = BTreeMap::new();
    for (name, x) in [("u", u), ("v", v), ("w", w)] {
        b.insert(name.to_string(), Tensor::new(1, D, x.to_vec()).unwrap());
    }
    b.insert("A".to_string(), Tensor::new(2, D, a.concat()).unwrap());
    b
}

fn levi(i: usize, j: usize, k: usize) -> f64 {
    // explicit table of the six nonzero entries
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

#[test]
fn corpus_matches_nested_loops() {
    let metric = Metric::euclidean(D);
    let mut rng = RngState::new(41);
    for _ in 0..25 {
        let (u, v, w, a) = (random_vector(&mut rng), random_vector(&mut rng), random_vector(&mut rng), random_matrix(&mut rng));
        let b = bindings(&u, &v, &w, &a);
        let eval = |src: &str| evaluate(&parse(src).unwrap(), &b, &metric).unwrap();
        let r = 0..D;

        let mut dot = 0.0;
        for i in r.clone() {
            dot += u[i] * v[i];
        }
        assert!((eval("u_i v_i").get(&[]) - dot).abs() < 1e-12);

        let got = eval("u_i v_i w_j");
        for j in r.clone() {
            assert!((got.get(&[j]) - dot * w[j]).abs() < 1e-12);
        }

        let got = eval("A_ij u_j");
        for i in r.clone() {
            let mut s = 0.0;
            for j in r.clone() {
                s += a[i][j] * u[j];
            }
            assert!((got.get(&[i]) - s).abs() < 1e-12);
        }

        let mut quad = 0.0;
        for i in r.clone() {
            for j in r.clone() {
                quad += u[i] * a[i][j] * v[j];
            }
        }
        assert!((eval("u_i A_ij v_j").get(&[]) - quad).abs() < 1e-12);

        let mut trace = 0.0;
        for i in r.clone() {
            trace += a[i][i];
        }
        assert!((eval("A_ii").get(&[]) - trace).abs() < 1e-12);

        let got = eval("u_i v_j - u_j v_i");
        for i in r.clone() {
            for j in r.clone() {
                assert!((got.get(&[i, j]) - (u[i] * v[j] - u[j] * v[i])).abs() < 1e-12);
            }
        }

        let got = eval("eps_ijk u_j v_k");
        for i in r.clone() {
            let mut s = 0.0;
            for j in r.clone() {
                for k in r.clone() {
                    s += levi(i, j, k) * u[j] * v[k];
                }
            }
            assert!((got.get(&[i]) - s).abs() < 1e-12);
        }

        let mut det = 0.0;
        for i in r.clone() {
            for j in r.clone() {
                for k in r.clone() {
                    det += levi(i, j, k) * u[i] * v[j] * w[k];
                }
            }
        }
        assert!((eval("eps_ijk u_i v_j w_k").get(&[]) - det).abs() < 1e-12);

        let got = eval("u_j v_k w_m eps_ijk eps_imn");
        for n in r.clone() {
            let mut s = 0.0;
            for i in r.clone() {
                for j in r.clone() {
                    for k in r.clone() {
                        for m in r.clone() {
                            s += u[j] * v[k] * w[m] * levi(i, j, k) * levi(i, m, n);
                        }
                    }
                }
            }
            assert!((got.get(&[n]) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn double_epsilon_is_the_vector_triple_product() {
    let metric = Metric::euclidean(D);
    let expr = parse("u_j v_k w_m eps_ijk eps_imn").unwrap();
    let mut rng = RngState::new(5);
    for _ in 0..100 {
        let (u, v, w) = (random_vector(&mut rng), random_vector(&mut rng), random_vector(&mut rng));
        let got = evaluate(&expr, &bindings(&u, &v, &w, &random_matrix(&mut rng)), &metric).unwrap();
        let uv = generalized_cross(&[Vector::new(u).unwrap(), Vector::new(v).unwrap()]).unwrap();
        let expected = generalized_cross(&[uv, Vector::new(w.clone()).unwrap()]).unwrap();
        for n in 0..D {
            assert!((got.get(&[n]) - expected.as_slice()[n]).abs() < 1e-12);
        }
    }
}

/// Builds a random valid expression over vectors u, v, w and the matrix A
/// with `free` free labels and `summed` summed labels, returning its source.
fn random_expression(rng: &mut RngState, free: usize, summed: usize, with_eps: bool) -> String {
    let labels: Vec<char> = "abcdefgh".chars().collect();
    let mut slots: Vec<char> = Vec::new();
    slots.extend(&labels[..free]);
    for &c in &labels[free..free + summed] {
        slots.push(c);
        slots.push(c);
    }
    let mut factors = Vec::new();
    if with_eps {
        // the three eps slots take distinct labels
        let mut chosen = Vec::new();
        while chosen.len() < 3 {
            let c = slots[rng.index(slots.len())];
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        for c in &chosen {
            let at = slots.iter().position(|x| x == c).unwrap();
            slots.remove(at);
        }
        factors.push(format!("eps_{}", chosen.iter().collect::<String>()));
    }
    let order = rng.permutation(slots.len());
    let mut shuffled: Vec<char> = order.into_iter().map(|k| slots[k]).collect();
    while !shuffled.is_empty() {
        if shuffled.len() >= 2 && rng.coin() {
            let (i, j) = (shuffled.remove(0), shuffled.remove(0));
            factors.push(if rng.index(4) == 0 { format!("delta_{i}{j}") } else { format!("A_{i}{j}") });
        } else {
            let i = shuffled.remove(0);
            factors.push(format!("{}_{i}", ["u", "v", "w"][rng.index(3)]));
        }
    }
    let order = rng.permutation(factors.len());
    order.into_iter().map(|k| factors[k].clone()).collect::<Vec<_>>().join(" ")
}

#[test]
fn valid_expressions_are_equivariant() {
    let metric = Metric::euclidean(D);
    let mut rng = RngState::new(2024);
    let mut checked = 0;
    while checked < 300 {
        let free = rng.index(4);
        let summed = rng.index(3);
        let with_eps = rng.coin();
        if free + summed == 0 || (with_eps && free + summed < 3) {
            continue;
        }
        let src = random_expression(&mut rng, free, summed, with_eps);
        let expr = parse(&src).unwrap();
        let report = validate(&expr, &metric, CheckMode::Plain);
        assert!(report.valid, "{src}: {:?}", report.violations);
        assert_eq!(report.output_order, free);

        // eps makes the output a pseudo-tensor, so only rotations apply
        let g = if with_eps { sample_rotation(&mut rng, D) } else { sample_orthogonal(&mut rng, D) }.unwrap();
        let q: &Mat = g.linear().unwrap();
        let (u, v, w, a) = (random_vector(&mut rng), random_vector(&mut rng), random_vector(&mut rng), random_matrix(&mut rng));
        let b = bindings(&u, &v, &w, &a);
        let moved: BTreeMap<String, Tensor> =
            b.iter().map(|(k, t)| (k.clone(), t.transform(q).unwrap())).collect();
        let out = evaluate(&expr, &b, &metric).unwrap();
        let lhs = evaluate(&expr, &moved, &metric).unwrap();
        let rhs = out.transform(q).unwrap();
        assert!(lhs.max_abs_diff(&rhs) <= 1e-9 * (1.0 + out.max_abs()), "{src}");
        checked += 1;
    }
}

fn source_strategy() -> impl Strategy<Value = String> {
    let factor = (
        prop_oneof![Just("u".to_string()), Just("eps".to_string()), Just("delta".to_string()), "[A-Z][a-z0-9]{0,2}"],
        prop::collection::vec((any::<bool>(), "[a-z]{1,3}"), 1..3),
    )
        .prop_map(|(name, groups)| {
            let mut s = name;
            for (upper, labels) in groups {
                s.push(if upper { '^' } else { '_' });
                s.push_str(&labels);
            }
            s
        });
    let term = prop::collection::vec(factor, 1..4).prop_map(|f| f.join(" "));
    (any::<bool>(), prop::collection::vec((any::<bool>(), term), 1..4)).prop_map(|(lead, terms)| {
        let mut s = String::new();
        for (k, (negative, t)) in terms.into_iter().enumerate() {
            match (k, negative || (k == 0 && lead)) {
                (0, true) => s.push_str("- "),
                (0, false) => {}
                (_, true) => s.push_str(" -  "),
                (_, false) => s.push_str("  + "),
            }
            s.push_str(&t);
        }
        s
    })
}

fn shuffle_factors(expr: &IndexExpr, seed: u64) -> IndexExpr {
    let mut rng = RngState::new(seed);
    let mut out = expr.clone();
    for term in &mut out.terms {
        let order = rng.permutation(term.factors.len());
        term.factors = order.into_iter().map(|k| term.factors[k].clone()).collect();
    }
    out
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(src in source_strategy()) {
        let expr = parse(&src).unwrap();
        let printed = expr.to_string();
        let reparsed = parse(&printed).unwrap();
        prop_assert_eq!(reparsed.to_string(), printed.clone());
        prop_assert_eq!(parse(&reparsed.to_string()).unwrap(), reparsed);
    }

    #[test]
    fn factor_order_never_changes_the_report(src in source_strategy(), seed in any::<u64>(), aware in any::<bool>()) {
        let mode = if aware { CheckMode::MetricAware } else { CheckMode::Plain };
        let metric = Metric::euclidean(3);
        let expr = parse(&src).unwrap();
        let a = validate(&expr, &metric, mode);
        // reparse so offsets refer to the same canonical text in both reports
        let canonical = parse(&expr.to_string()).unwrap();
        let shuffled = parse(&shuffle_factors(&canonical, seed).to_string()).unwrap();
        let b = validate(&shuffled, &metric, mode);
        prop_assert_eq!(a.valid, b.valid);
        prop_assert_eq!(a.output_order, b.output_order);
        let rules = |r: &equiscalar::einsum::ValidationReport| {
            let mut v: Vec<String> = r.violations.iter().map(|x| x.rule.clone()).collect();
            v.sort();
            v
        };
        prop_assert_eq!(rules(&a), rules(&b));
        let mut fa = a.free_indices.clone();
        let mut fb = b.free_indices.clone();
        fa.sort();
        fb.sort();
        prop_assert_eq!(fa, fb);
    }
}
