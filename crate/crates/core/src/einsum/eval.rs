use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::validate::{validate, CheckMode};
use super::{FactorKind, IndexExpr, Variance};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::tuple::Metric;

/// Largest supported dimension for brute-force evaluation.
pub const MAX_DIM: usize = 4;
/// Largest number of distinct labels in one term.
pub const MAX_LABELS: usize = 8;

/// A dense tensor of some order over R^dim, stored row-major. Serializes as
/// nested arrays (a bare number for order 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(value: f64) -> Self {
        Self { order: 0, dim: 0, data: vec![value] }
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        Self { order, dim, data: vec![0.0; dim.pow(order as u32)] }
    }

    pub fn new(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let expected = if order == 0 { 1 } else { dim.pow(order as u32) };
        if data.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: data.len() });
        }
        let dim = if order == 0 { 0 } else { dim };
        Ok(Self { order, dim, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat(index)]
    }

    fn flat(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.order != other.order || self.data.len() != other.data.len() {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Applies `matrix` along every axis.
    pub fn transform(&self, matrix: &Mat) -> Result<Tensor> {
        if self.order == 0 {
            return Ok(self.clone());
        }
        if matrix.rows() != self.dim || matrix.cols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: matrix.rows() });
        }
        let mut current = self.data.clone();
        let d = self.dim;
        // contract one axis at a time
        for axis in 0..self.order {
            let stride = d.pow((self.order - axis - 1) as u32);
            let mut next = vec![0.0; current.len()];
            for (flat, out) in next.iter_mut().enumerate() {
                let i = (flat / stride) % d;
                let base = flat - i * stride;
                *out = (0..d).map(|j| matrix[(i, j)] * current[base + j * stride]).sum();
            }
            current = next;
        }
        Ok(Tensor { order: self.order, dim: d, data: current })
    }
}

impl From<&Vector> for Tensor {
    fn from(v: &Vector) -> Self {
        Tensor { order: 1, dim: v.dim(), data: v.as_slice().to_vec() }
    }
}

impl From<&Mat> for Tensor {
    /// Square matrices only; the row index is the first axis.
    fn from(m: &Mat) -> Self {
        assert!(m.is_square(), "tensor from a non-square matrix");
        Tensor { order: 2, dim: m.rows(), data: m.data().to_vec() }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Nested {
    Number(f64),
    List(Vec<Nested>),
}

impl Tensor {
    fn to_nested(&self, axis: usize, offset: usize) -> Nested {
        if axis == self.order {
            return Nested::Number(self.data[offset]);
        }
        let stride = self.dim.pow((self.order - axis - 1) as u32);
        Nested::List((0..self.dim).map(|i| self.to_nested(axis + 1, offset + i * stride)).collect())
    }

    fn from_nested(nested: &Nested) -> std::result::Result<Tensor, String> {
        let mut shape = Vec::new();
        let mut probe = nested;
        while let Nested::List(items) = probe {
            shape.push(items.len());
            match items.first() {
                Some(first) => probe = first,
                None => return Err("empty array in tensor".into()),
            }
        }
        if shape.iter().any(|&s| s != shape[0]) {
            return Err(format!("tensor axes must share one length, found shape {shape:?}"));
        }
        let mut data = Vec::new();
        collect(nested, shape.len(), &shape, &mut data)?;
        Ok(Tensor { order: shape.len(), dim: shape.first().copied().unwrap_or(0), data })
    }
}

fn collect(nested: &Nested, depth: usize, shape: &[usize], out: &mut Vec<f64>) -> std::result::Result<(), String> {
    match (nested, depth) {
        (Nested::Number(x), 0) if x.is_finite() => {
            out.push(*x);
            Ok(())
        }
        (Nested::Number(_), 0) => Err("non-finite tensor entry".into()),
        (Nested::List(items), d) if d > 0 && items.len() == shape[shape.len() - d] => {
            items.iter().try_for_each(|item| collect(item, d - 1, shape, out))
        }
        _ => Err("ragged tensor".into()),
    }
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested(0, 0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let nested = Nested::deserialize(deserializer)?;
        Tensor::from_nested(&nested).map_err(serde::de::Error::custom)
    }
}

/// Brute-force evaluation over every index assignment. Upper indices pick
/// up the signature factor of their value, so a summed lower/upper pair
/// contracts through the metric. Output axes follow the first term's free
/// labels in order of appearance.
pub fn evaluate(expr: &IndexExpr, bindings: &BTreeMap<String, Tensor>, metric: &Metric) -> Result<Tensor> {
    let d = metric.dim;
    if d == 0 || d > MAX_DIM {
        return Err(Error::SizeGuard(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    let report = validate(expr, metric, CheckMode::Plain);
    if !report.valid {
        let rules: Vec<&str> = report.violations.iter().map(|v| v.rule.as_str()).collect();
        return Err(Error::InvalidArgument(format!("expression violates {}", rules.join(", "))));
    }
    for factor in expr.terms.iter().flat_map(|t| &t.factors) {
        if let FactorKind::Tensor(name) = &factor.kind {
            let tensor = bindings.get(name).ok_or_else(|| Error::Unbound(name.clone()))?;
            if tensor.order != factor.indices.len() {
                return Err(Error::InvalidArgument(format!(
                    "`{name}` has order {} but carries {} indices",
                    tensor.order,
                    factor.indices.len()
                )));
            }
            if tensor.order > 0 && tensor.dim != d {
                return Err(Error::DimensionMismatch { expected: d, found: tensor.dim });
            }
        }
    }

    let free = &report.free_indices;
    let mut out = Tensor::zeros(free.len(), d);
    if free.is_empty() {
        out.dim = 0;
    }
    for term in &expr.terms {
        let mut labels = free.clone();
        for index in term.indices() {
            if !labels.contains(&index.label) {
                labels.push(index.label);
            }
        }
        if labels.len() > MAX_LABELS {
            return Err(Error::SizeGuard(format!("{} labels in one term, limit {MAX_LABELS}", labels.len())));
        }
        // factor slots resolved to positions in `labels`
        let slots: Vec<Vec<(usize, Variance)>> = term
            .factors
            .iter()
            .map(|f| {
                f.indices
                    .iter()
                    .map(|i| (labels.iter().position(|&c| c == i.label).expect("label collected"), i.variance))
                    .collect()
            })
            .collect();
        let mut values = vec![0usize; labels.len()];
        let mut scratch = Vec::with_capacity(MAX_LABELS);
        loop {
            let mut product = term.sign();
            for (factor, slot) in term.factors.iter().zip(&slots) {
                scratch.clear();
                scratch.extend(slot.iter().map(|&(p, _)| values[p]));
                let value = match &factor.kind {
                    FactorKind::Tensor(name) => bindings[name].get(&scratch),
                    FactorKind::Delta => f64::from(u8::from(scratch[0] == scratch[1])),
                    FactorKind::Epsilon => permutation_sign(&scratch),
                };
                let signature: f64 = slot
                    .iter()
                    .filter(|(_, v)| *v == Variance::Upper)
                    .map(|&(p, _)| metric.sign(values[p]))
                    .product();
                product *= value * signature;
                if product == 0.0 {
                    break;
                }
            }
            let target = out.flat(&values[..free.len()]);
            out.data[target] += product;
            if !advance(&mut values, d) {
                break;
            }
        }
    }
    Ok(out)
}

/// Odometer increment; false after the last assignment.
fn advance(values: &mut [usize], d: usize) -> bool {
    for v in values.iter_mut().rev() {
        *v += 1;
        if *v < d {
            return true;
        }
        *v = 0;
    }
    false
}

/// Sign of the permutation `values` of `0..len`, zero on a repeat.
fn permutation_sign(values: &[usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if values[i] == values[j] {
                return 0.0;
            }
            if values[i] > values[j] {
                sign = -sign;
            }
        }
    }
    sign
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::einsum::parse;

    fn bind(pairs: &[(&str, Tensor)]) -> BTreeMap<String, Tensor> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn vec_t(xs: &[f64]) -> Tensor {
        Tensor::new(1, xs.len(), xs.to_vec()).unwrap()
    }

    #[test]
    fn dot_product() {
        let b = bind(&[("u", vec_t(&[1.0, 2.0])), ("v", vec_t(&[3.0, 4.0]))]);
        let out = evaluate(&parse("u_i v_i").unwrap(), &b, &Metric::euclidean(2)).unwrap();
        assert_eq!(out, Tensor::scalar(11.0));
    }

    #[test]
    fn delta_contraction_is_identity() {
        let b = bind(&[("u", vec_t(&[1.5, -2.0, 0.25]))]);
        let out = evaluate(&parse("delta_ij u_j").unwrap(), &b, &Metric::euclidean(3)).unwrap();
        assert_eq!(out, vec_t(&[1.5, -2.0, 0.25]));
    }

    #[test]
    fn upper_index_contracts_through_signature() {
        let b = bind(&[("u", vec_t(&[2.0, 1.0, 3.0])), ("v", vec_t(&[5.0, 7.0, 1.0]))]);
        let out = evaluate(&parse("u_i v^i").unwrap(), &b, &Metric::minkowski(3)).unwrap();
        assert_eq!(out, Tensor::scalar(10.0 - 7.0 - 3.0));
        let out = evaluate(&parse("u_i v^i").unwrap(), &b, &Metric::euclidean(3)).unwrap();
        assert_eq!(out, Tensor::scalar(20.0));
    }

    #[test]
    fn epsilon_signs() {
        assert_eq!(permutation_sign(&[0, 1, 2]), 1.0);
        assert_eq!(permutation_sign(&[1, 0, 2]), -1.0);
        assert_eq!(permutation_sign(&[1, 2, 0]), 1.0);
        assert_eq!(permutation_sign(&[0, 0, 2]), 0.0);
        assert_eq!(permutation_sign(&[3, 2, 1, 0]), 1.0);
    }

    #[test]
    fn output_axes_follow_first_appearance() {
        let b = bind(&[("u", vec_t(&[1.0, 2.0])), ("v", vec_t(&[10.0, 20.0]))]);
        let out = evaluate(&parse("v_j u_i").unwrap(), &b, &Metric::euclidean(2)).unwrap();
        // axis 0 is j
        assert_eq!(out.get(&[0, 1]), 20.0);
        assert_eq!(out.get(&[1, 0]), 20.0);
        assert_eq!(out.get(&[1, 1]), 40.0);
    }

    #[test]
    fn binding_errors() {
        let metric = Metric::euclidean(2);
        let e = parse("u_i w_i").unwrap();
        let b = bind(&[("u", vec_t(&[1.0, 2.0]))]);
        assert_eq!(evaluate(&e, &b, &metric).unwrap_err(), Error::Unbound("w".into()));
        let b = bind(&[("u", vec_t(&[1.0, 2.0])), ("w", vec_t(&[1.0, 2.0, 3.0]))]);
        assert_eq!(evaluate(&e, &b, &metric).unwrap_err(), Error::DimensionMismatch { expected: 2, found: 3 });
        let b = bind(&[("u", vec_t(&[1.0, 2.0])), ("w", Tensor::scalar(1.0))]);
        assert!(matches!(evaluate(&e, &b, &metric), Err(Error::InvalidArgument(_))));
        assert!(matches!(evaluate(&parse("u_i u_i u_i").unwrap(), &b, &metric), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn size_guard() {
        let b = bind(&[("u", vec_t(&[1.0; 5]))]);
        assert!(matches!(evaluate(&parse("u_i u_i").unwrap(), &b, &Metric::euclidean(5)), Err(Error::SizeGuard(_))));
        let b = bind(&[("u", vec_t(&[1.0; 2]))]);
        let nine = "u_a u_b u_c u_d u_e u_f u_g u_h u_k";
        assert!(matches!(evaluate(&parse(nine).unwrap(), &b, &Metric::euclidean(2)), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn json_nesting() {
        let t: Tensor = serde_json::from_str("[[1, 2], [3, 4]]").unwrap();
        assert_eq!(t.order(), 2);
        assert_eq!(t.get(&[1, 0]), 3.0);
        assert_eq!(serde_json::to_string(&t).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        assert_eq!(serde_json::from_str::<Tensor>("2.5").unwrap(), Tensor::scalar(2.5));
        assert!(serde_json::from_str::<Tensor>("[[1, 2], [3]]").is_err());
        assert!(serde_json::from_str::<Tensor>("[[1, 2, 3], [3, 4, 5]]").is_err());
    }

    #[test]
    fn transform_matches_matrix_products() {
        let q = Mat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let expected = q.matmul(&a).unwrap().matmul(&q.transpose()).unwrap();
        let got = Tensor::from(&a).transform(&q).unwrap();
        assert_eq!(got, Tensor::from(&expected));
    }
}
