//! Equivariant vector functions as invariant-weighted sums of the inputs.
//!
//! A model evaluates `h(x) = sum_t f_t v_t`, optionally with SO(d) cross
//! terms `sum_S f_S cross(v_S)`, where every coefficient is computed from a
//! [`ScalarFeatureSet`]. Coefficient functions never see raw vectors, so
//! invariance of the coefficients (and hence equivariance of `h`) holds by
//! construction.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{translation_reduce, FeatureOptions, PivotRule, ScalarFeatureSet};
use crate::group::GroupFamily;
use crate::linalg::{projection_residual, Mat, Vector};
use crate::mpnn::LearnedScalarNet;
use crate::tolerance;
use crate::tuple::{Metric, VectorTuple};

/// `x` with `<x, y> = det(v_1, .., v_{d-1}, y)` for every `y`.
///
/// Component `k` (1-based) is `(-1)^(d+k)` times the minor of the
/// `d x (d-1)` input matrix with row `k` removed.
pub fn generalized_cross(vs: &[Vector]) -> Result<Vector> {
    let d = vs.len() + 1;
    if let Some(bad) = vs.iter().find(|v| v.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.dim() });
    }
    if d == 1 {
        return Ok(Vector::basis(1, 0));
    }
    let mut out = vec![0.0; d];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut minor = Mat::zeros(d - 1, d - 1);
        for (col, v) in vs.iter().enumerate() {
            for (row, r) in (0..d).filter(|&r| r != k).enumerate() {
                minor[(row, col)] = v[r];
            }
        }
        let sign = if (d + k + 1) % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * minor.determinant()?;
    }
    Vector::new(out)
}

/// Cross product of `vectors` with the count checked against the ambient
/// dimension, for callers holding a tuple.
fn cross_of(x: &VectorTuple, subset: &[usize]) -> Result<Vector> {
    if subset.len() + 1 != x.dim() {
        return Err(Error::TooFewVectors { need: x.dim() - 1, have: subset.len() });
    }
    let vs: Vec<Vector> = subset.iter().map(|&i| x.get(i).clone()).collect();
    generalized_cross(&vs)
}

/// Output of a coefficient function.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coefficients {
    /// One weight per input slot.
    pub vector: Vec<f64>,
    /// Weights of the cross terms, aligned with [`cross_subsets`]. Empty
    /// when the function contributes no cross terms.
    pub cross: Vec<f64>,
}

/// `(d-1)`-subsets of `0..n` in lexicographic order.
pub fn cross_subsets(n: usize, d: usize) -> Vec<Vec<usize>> {
    if d == 0 || n + 1 < d {
        return Vec::new();
    }
    (0..n).combinations(d - 1).collect()
}

/// Maps invariant features to coefficients.
pub trait CoefficientFn: fmt::Debug + Send + Sync {
    fn evaluate(&self, features: &ScalarFeatureSet) -> Result<Coefficients>;

    /// Whether the function reads subdeterminant features.
    fn wants_subdets(&self) -> bool {
        false
    }

    /// True when permuting the features permutes the vector coefficients
    /// the same way (the pooled single-function form).
    fn permutation_symmetric(&self) -> bool {
        false
    }

    fn describe(&self) -> CoefficientSpec;
}

/// Serializable identity of a coefficient function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CoefficientSpec {
    Fixture { name: String },
    Learned { net: LearnedScalarNet },
    Symmetrized { inner: Box<CoefficientSpec> },
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<Arc<dyn CoefficientFn>> {
        match self {
            CoefficientSpec::Fixture { name } => fixture(name),
            CoefficientSpec::Learned { net } => Ok(Arc::new(net.clone())),
            CoefficientSpec::Symmetrized { inner } => Ok(symmetrize_permutation(inner.build()?)),
        }
    }
}

/// Names accepted by [`fixture`].
pub const FIXTURE_NAMES: &[&str] = &[
    "select-first",
    "uniform",
    "slot-index",
    "gram-nonlinear",
    "gram-asymmetric",
    "pooled-gram",
    "cross-only",
    "cross-weighted",
];

/// A fixed closed-form coefficient function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// `f_t = [t == 0]`.
    SelectFirst,
    /// `f_t = 1/n`.
    Uniform,
    /// `f_t = t + 1`, deliberately not permutation symmetric.
    SlotIndex,
    /// Smooth pooled function of the Gram matrix.
    GramNonlinear,
    /// Smooth function that treats slots differently.
    GramAsymmetric,
    /// Single-function form `f(own scalars, symmetric pool of the others)`.
    PooledGram,
    /// No vector terms, every cross term weighted by one.
    CrossOnly,
    /// Gram-dependent vector terms plus cross terms weighted by the sum of
    /// subdeterminants (a pseudo-scalar), giving a full O(d)-equivariant
    /// output that still uses cross products.
    CrossWeighted,
}

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::SelectFirst => "select-first",
            Fixture::Uniform => "uniform",
            Fixture::SlotIndex => "slot-index",
            Fixture::GramNonlinear => "gram-nonlinear",
            Fixture::GramAsymmetric => "gram-asymmetric",
            Fixture::PooledGram => "pooled-gram",
            Fixture::CrossOnly => "cross-only",
            Fixture::CrossWeighted => "cross-weighted",
        }
    }

    pub fn all() -> [Fixture; 8] {
        [
            Fixture::SelectFirst,
            Fixture::Uniform,
            Fixture::SlotIndex,
            Fixture::GramNonlinear,
            Fixture::GramAsymmetric,
            Fixture::PooledGram,
            Fixture::CrossOnly,
            Fixture::CrossWeighted,
        ]
    }

    pub fn uses_cross(self) -> bool {
        matches!(self, Fixture::CrossOnly | Fixture::CrossWeighted)
    }
}

pub fn fixture(name: &str) -> Result<Arc<dyn CoefficientFn>> {
    Fixture::all()
        .into_iter()
        .find(|f| f.name() == name)
        .map(|f| Arc::new(f) as Arc<dyn CoefficientFn>)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("unknown fixture `{name}`; known: {}", FIXTURE_NAMES.join(", ")))
        })
}

fn pooled_slot(m: &Mat, t: usize) -> f64 {
    let n = m.rows();
    let (mut cross, mut cross_sq, mut diag) = (0.0, 0.0, 0.0);
    for j in (0..n).filter(|&j| j != t) {
        cross += m[(t, j)];
        cross_sq += m[(t, j)] * m[(t, j)];
        diag += m[(j, j)];
    }
    m[(t, t)].tanh() + 0.3 * cross / (1.0 + cross_sq) + 0.1 * (diag / n as f64).tanh()
}

impl CoefficientFn for Fixture {
    fn evaluate(&self, features: &ScalarFeatureSet) -> Result<Coefficients> {
        let m = &features.gram;
        let n = m.rows();
        let dim = features.metric.dim;
        let vector: Vec<f64> = match self {
            Fixture::SelectFirst => (0..n).map(|t| if t == 0 { 1.0 } else { 0.0 }).collect(),
            Fixture::Uniform => vec![1.0 / n as f64; n],
            Fixture::SlotIndex => (0..n).map(|t| (t + 1) as f64).collect(),
            Fixture::GramNonlinear => (0..n)
                .map(|t| {
                    let pooled: f64 = (0..n).map(|j| m[(t, j)] / (1.0 + m[(j, j)] * m[(j, j)])).sum();
                    m[(t, t)].tanh() + 0.5 * pooled
                })
                .collect(),
            Fixture::GramAsymmetric => (0..n)
                .map(|t| {
                    let next = m[(t, (t + 1) % n)];
                    (-next * next / (1.0 + m[(t, t)].abs())).exp() * (t + 1) as f64 / n as f64
                })
                .collect(),
            Fixture::PooledGram => (0..n).map(|t| pooled_slot(m, t)).collect(),
            Fixture::CrossOnly => vec![0.0; n],
            Fixture::CrossWeighted => (0..n).map(|t| 0.5 * m[(t, t)] / (1.0 + m[(t, t)] * m[(t, t)])).collect(),
        };
        let subsets = cross_subsets(n, dim).len();
        let cross = match self {
            Fixture::CrossOnly => vec![1.0; subsets],
            Fixture::CrossWeighted => {
                let weight = match &features.subdets {
                    Some(list) => list.iter().map(|s| s.value).sum::<f64>().tanh(),
                    None => 0.0,
                };
                vec![weight; subsets]
            }
            _ => Vec::new(),
        };
        Ok(Coefficients { vector, cross })
    }

    fn wants_subdets(&self) -> bool {
        matches!(self, Fixture::CrossWeighted)
    }

    fn permutation_symmetric(&self) -> bool {
        matches!(self, Fixture::Uniform | Fixture::GramNonlinear | Fixture::PooledGram)
    }

    fn describe(&self) -> CoefficientSpec {
        CoefficientSpec::Fixture { name: self.name().to_string() }
    }
}

/// Orbit average of a coefficient function over `S_n`.
///
/// For a tuple of length `n`, the symmetrized weight of slot `i` is
/// `(1/n!) sum_sigma sum_{j: sigma(j) = i} f_j(features of x∘sigma)`, and
/// cross weights are averaged the same way with the orientation sign of
/// the reordered subset. The resulting model is permutation invariant.
#[derive(Debug, Clone)]
pub struct Symmetrized {
    inner: Arc<dyn CoefficientFn>,
}

pub fn symmetrize_permutation(coeffs: Arc<dyn CoefficientFn>) -> Arc<dyn CoefficientFn> {
    Arc::new(Symmetrized { inner: coeffs })
}

impl CoefficientFn for Symmetrized {
    fn evaluate(&self, features: &ScalarFeatureSet) -> Result<Coefficients> {
        let n = features.len();
        if n > tolerance::MAX_AVERAGING_N {
            if self.inner.permutation_symmetric() {
                return self.inner.evaluate(features);
            }
            return Err(Error::TooManyForAveraging { n, limit: tolerance::MAX_AVERAGING_N });
        }
        let dim = features.metric.dim;
        let subsets = cross_subsets(n, dim);
        let lookup: HashMap<&[usize], usize> =
            subsets.iter().enumerate().map(|(k, s)| (s.as_slice(), k)).collect();
        let mut vector = vec![0.0; n];
        let mut cross = vec![0.0; subsets.len()];
        let mut any_cross = false;
        let mut count = 0usize;
        for sigma in (0..n).permutations(n) {
            let permuted = features.permuted(&sigma)?;
            let c = self.inner.evaluate(&permuted)?;
            if c.vector.len() != n {
                return Err(Error::WidthMismatch { expected: n, found: c.vector.len() });
            }
            for (j, &value) in c.vector.iter().enumerate() {
                vector[sigma[j]] += value;
            }
            if !c.cross.is_empty() {
                any_cross = true;
                for (s, &value) in subsets.iter().zip(&c.cross) {
                    let mapped: Vec<usize> = s.iter().map(|&a| sigma[a]).collect();
                    let (sorted, parity) = sorted_with_parity(mapped);
                    cross[lookup[sorted.as_slice()]] += parity * value;
                }
            }
            count += 1;
        }
        let scale = 1.0 / count as f64;
        vector.iter_mut().for_each(|v| *v *= scale);
        cross.iter_mut().for_each(|v| *v *= scale);
        Ok(Coefficients { vector, cross: if any_cross { cross } else { Vec::new() } })
    }

    fn wants_subdets(&self) -> bool {
        self.inner.wants_subdets()
    }

    fn permutation_symmetric(&self) -> bool {
        true
    }

    fn describe(&self) -> CoefficientSpec {
        CoefficientSpec::Symmetrized { inner: Box::new(self.inner.describe()) }
    }
}

fn sorted_with_parity(mut v: Vec<usize>) -> (Vec<usize>, f64) {
    let mut parity = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            parity = -parity;
            j -= 1;
        }
    }
    (v, parity)
}

/// How translation-aware families treat the coefficient sum over position
/// slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslationMode {
    /// Position weights sum to 0: the output ignores translations.
    Invariant,
    /// Position weights sum to 1: the output shifts with translations.
    Equivariant,
}

/// A coefficient function bound to a symmetry family and dimension.
#[derive(Debug, Clone)]
pub struct EquivariantModel {
    pub family: GroupFamily,
    pub metric: Metric,
    pub coeffs: Arc<dyn CoefficientFn>,
    pub mode: TranslationMode,
}

/// Output and the coefficients that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub output: Vector,
    pub coefficients: Coefficients,
}

impl EquivariantModel {
    /// Families: orthogonal, rotation, euclidean, lorentz, poincare.
    /// Poincaré models always use [`TranslationMode::Equivariant`].
    pub fn new(family: GroupFamily, dim: usize, coeffs: Arc<dyn CoefficientFn>, mode: TranslationMode) -> Result<Self> {
        let mode = match family {
            GroupFamily::Orthogonal | GroupFamily::Rotation | GroupFamily::Lorentz | GroupFamily::Euclidean => mode,
            GroupFamily::Poincare => TranslationMode::Equivariant,
            other => {
                return Err(Error::Unsupported(format!("no equivariant model for the {} family", other.name())))
            }
        };
        if dim == 0 {
            return Err(Error::Empty("model dimension"));
        }
        Ok(Self { family, metric: family.metric(dim), coeffs, mode })
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            family: self.family,
            dim: self.metric.dim,
            mode: self.mode,
            coefficients: self.coeffs.describe(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        Self::new(file.family, file.dim, file.coefficients.build()?, file.mode)
    }
}

/// JSON form of an [`EquivariantModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub family: GroupFamily,
    pub dim: usize,
    pub mode: TranslationMode,
    pub coefficients: CoefficientSpec,
}

pub fn evaluate(model: &EquivariantModel, x: &VectorTuple) -> Result<Vector> {
    evaluate_detailed(model, x).map(|e| e.output)
}

pub fn evaluate_detailed(model: &EquivariantModel, x: &VectorTuple) -> Result<Evaluation> {
    let d = model.metric.dim;
    if x.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.dim() });
    }
    if x.is_empty() {
        return Err(Error::Empty("tuple"));
    }
    let n = x.len();
    let translating = matches!(model.family, GroupFamily::Euclidean | GroupFamily::Poincare);
    let feature_source = if translating {
        translation_reduce(x, PivotRule::CenterOfPositions)?
    } else {
        x.clone()
    };
    let options = FeatureOptions {
        subdets: model.family == GroupFamily::Rotation && model.coeffs.wants_subdets(),
        omega: None,
    };
    let features = ScalarFeatureSet::compute(&model.metric, &feature_source, options)?;
    let mut coefficients = model.coeffs.evaluate(&features)?;
    if coefficients.vector.len() != n {
        return Err(Error::WidthMismatch { expected: n, found: coefficients.vector.len() });
    }
    if let Some(bad) = coefficients.vector.iter().chain(&coefficients.cross).find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(if bad.is_nan() { "coefficient (NaN)" } else { "coefficient" }));
    }
    if translating {
        renormalize(&mut coefficients.vector, &x.position_indices(), model.mode);
    }

    let mut output = Vector::zeros(d);
    for (c, v) in coefficients.vector.iter().zip(x.vectors()) {
        output.axpy(*c, v);
    }
    if !coefficients.cross.is_empty() {
        if model.family != GroupFamily::Rotation {
            return Err(Error::Unsupported(format!(
                "cross terms are only equivariant for the rotation family, not {}",
                model.family.name()
            )));
        }
        let subsets = cross_subsets(n, d);
        if subsets.is_empty() {
            return Err(Error::TooFewVectors { need: d - 1, have: n });
        }
        if subsets.len() != coefficients.cross.len() {
            return Err(Error::WidthMismatch { expected: subsets.len(), found: coefficients.cross.len() });
        }
        for (s, &c) in subsets.iter().zip(&coefficients.cross) {
            if c != 0.0 {
                output.axpy(c, &cross_of(x, s)?);
            }
        }
    }
    Ok(Evaluation { output, coefficients })
}

/// Enforces the position-weight sum: subtract the mean for sum 0, spread
/// the deficit evenly for sum 1. Free-slot weights are left alone.
fn renormalize(weights: &mut [f64], positions: &[usize], mode: TranslationMode) {
    let k = positions.len() as f64;
    let sum: f64 = positions.iter().map(|&i| weights[i]).sum();
    let target = match mode {
        TranslationMode::Invariant => 0.0,
        TranslationMode::Equivariant => 1.0,
    };
    let shift = (target - sum) / k;
    for &i in positions {
        weights[i] += shift;
    }
}

/// Euclidean norm of the part of `h_out` outside `span(x)`.
pub fn span_check(x: &VectorTuple, h_out: &Vector, _metric: &Metric) -> f64 {
    if x.is_empty() {
        return h_out.norm();
    }
    projection_residual(x.vectors(), h_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{sample_orthogonal, sample_rotation, sample_translation, GroupElement};
    use crate::rng::RngState;
    use crate::tuple::Role;

    fn vec_of(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn random_tuple(rng: &mut RngState, n: usize, d: usize, role: Role) -> VectorTuple {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.normals(d)).collect();
        VectorTuple::from_rows(&rows, vec![role; n]).unwrap()
    }

    /// Cross product by solving `<x, e_k> = det(v_1..v_{d-1}, e_k)` column by column.
    fn cross_by_identity(vs: &[Vector]) -> Vector {
        let d = vs.len() + 1;
        let comps = (0..d)
            .map(|k| {
                let mut cols = vs.to_vec();
                cols.push(Vector::basis(d, k));
                Mat::from_columns(&cols).unwrap().determinant().unwrap()
            })
            .collect();
        Vector::new(comps).unwrap()
    }

    #[test]
    fn cross_examples() {
        let e1 = Vector::basis(3, 0);
        let e2 = Vector::basis(3, 1);
        assert_eq!(generalized_cross(&[e1, e2]).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(generalized_cross(&[vec_of(&[2.0, 3.0])]).unwrap().as_slice(), &[-3.0, 2.0]);
        let a = vec_of(&[1.0, 2.0, 3.0, 4.0]);
        let b = a.scale(2.0);
        let c = vec_of(&[0.0, 1.0, 0.0, 1.0]);
        assert!(generalized_cross(&[a, b, c]).unwrap().max_abs() < 1e-12);
        assert!(generalized_cross(&[vec_of(&[1.0, 2.0])]).is_ok());
        assert!(matches!(
            generalized_cross(&[vec_of(&[1.0, 2.0, 3.0])]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn cross_matches_defining_identity() {
        let mut rng = RngState::new(17);
        for d in 2..=6 {
            for _ in 0..20 {
                let vs: Vec<Vector> = (0..d - 1).map(|_| vec_of(&rng.normals(d))).collect();
                let x = generalized_cross(&vs).unwrap();
                assert!((&x - &cross_by_identity(&vs)).max_abs() < 1e-10);
                let y = vec_of(&rng.normals(d));
                let mut cols = vs.clone();
                cols.push(y.clone());
                let det = Mat::from_columns(&cols).unwrap().determinant().unwrap();
                assert!((x.dot(&y) - det).abs() < 1e-10 * (1.0 + det.abs()));
            }
        }
    }

    #[test]
    fn select_first_is_projection() {
        let mut rng = RngState::new(2);
        let x = random_tuple(&mut rng, 4, 3, Role::Free);
        for family in [GroupFamily::Orthogonal, GroupFamily::Rotation, GroupFamily::Lorentz] {
            let model =
                EquivariantModel::new(family, 3, fixture("select-first").unwrap(), TranslationMode::Equivariant).unwrap();
            assert_eq!(&evaluate(&model, &x).unwrap(), x.get(0));
        }
    }

    #[test]
    fn poincare_uniform_is_centroid() {
        let mut rng = RngState::new(4);
        let x = random_tuple(&mut rng, 5, 4, Role::Position);
        let model =
            EquivariantModel::new(GroupFamily::Poincare, 4, fixture("uniform").unwrap(), TranslationMode::Invariant)
                .unwrap();
        assert_eq!(model.mode, TranslationMode::Equivariant);
        let e = evaluate_detailed(&model, &x).unwrap();
        let centroid = crate::features::centroid(x.vectors().iter(), 4);
        assert!((&e.output - &centroid).max_abs() < 1e-12);
        assert!((e.coefficients.vector.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn euclidean_modes_follow_translations() {
        let mut rng = RngState::new(6);
        let x = random_tuple(&mut rng, 4, 3, Role::Position);
        let w = sample_translation(&mut rng, 3);
        let shift = w.shift().unwrap().clone();
        let moved = w.apply(&x).unwrap();
        for (mode, expect_shift) in [(TranslationMode::Invariant, false), (TranslationMode::Equivariant, true)] {
            let model = EquivariantModel::new(GroupFamily::Euclidean, 3, fixture("gram-nonlinear").unwrap(), mode).unwrap();
            let a = evaluate(&model, &x).unwrap();
            let b = evaluate(&model, &moved).unwrap();
            let expected = if expect_shift { &a + &shift } else { a.clone() };
            assert!((&b - &expected).max_abs() < 1e-9);
        }
    }

    #[test]
    fn pure_cross_term_picks_up_orientation() {
        let mut rng = RngState::new(12);
        let model =
            EquivariantModel::new(GroupFamily::Rotation, 3, fixture("cross-only").unwrap(), TranslationMode::Equivariant)
                .unwrap();
        for _ in 0..50 {
            let x = random_tuple(&mut rng, 2, 3, Role::Free);
            let h = evaluate(&model, &x).unwrap();
            let expected = generalized_cross(&[x.get(0).clone(), x.get(1).clone()]).unwrap();
            assert!((&h - &expected).max_abs() < 1e-12);
            for g in [sample_rotation(&mut rng, 3).unwrap(), sample_orthogonal(&mut rng, 3).unwrap()] {
                let q = g.linear().unwrap();
                let lhs = evaluate(&model, &g.apply(&x).unwrap()).unwrap();
                let rhs = q.mul_vec(&h).unwrap().scale(g.orientation().signum());
                assert!((&lhs - &rhs).max_abs() < 1e-9 * (1.0 + h.norm()));
            }
        }
    }

    #[test]
    fn slot_index_symmetrizes_to_mean() {
        let mut rng = RngState::new(1);
        let x = random_tuple(&mut rng, 5, 3, Role::Free);
        let model = EquivariantModel::new(
            GroupFamily::Orthogonal,
            3,
            symmetrize_permutation(fixture("slot-index").unwrap()),
            TranslationMode::Equivariant,
        )
        .unwrap();
        let e = evaluate_detailed(&model, &x).unwrap();
        for c in &e.coefficients.vector {
            assert!((c - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrization_fixes_symmetric_functions() {
        let mut rng = RngState::new(9);
        let x = random_tuple(&mut rng, 5, 3, Role::Free);
        for name in ["pooled-gram", "gram-nonlinear", "uniform"] {
            let plain =
                EquivariantModel::new(GroupFamily::Orthogonal, 3, fixture(name).unwrap(), TranslationMode::Equivariant)
                    .unwrap();
            let sym = EquivariantModel::new(
                GroupFamily::Orthogonal,
                3,
                symmetrize_permutation(fixture(name).unwrap()),
                TranslationMode::Equivariant,
            )
            .unwrap();
            let a = evaluate(&plain, &x).unwrap();
            let b = evaluate(&sym, &x).unwrap();
            assert!((&a - &b).max_abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn symmetrized_models_ignore_input_order() {
        let mut rng = RngState::new(10);
        for name in ["gram-asymmetric", "cross-weighted"] {
            let model = EquivariantModel::new(
                GroupFamily::Rotation,
                3,
                symmetrize_permutation(fixture(name).unwrap()),
                TranslationMode::Equivariant,
            )
            .unwrap();
            let x = random_tuple(&mut rng, 5, 3, Role::Free);
            let h = evaluate(&model, &x).unwrap();
            for _ in 0..100 {
                let p = GroupElement::permutation(rng.permutation(5)).unwrap();
                let hp = evaluate(&model, &p.apply(&x).unwrap()).unwrap();
                assert!((&hp - &h).max_abs() < 1e-9 * (1.0 + h.norm()), "{name}");
            }
        }
    }

    #[test]
    fn averaging_refuses_large_tuples() {
        let mut rng = RngState::new(3);
        let x = random_tuple(&mut rng, 9, 2, Role::Free);
        let asym = EquivariantModel::new(
            GroupFamily::Orthogonal,
            2,
            symmetrize_permutation(fixture("slot-index").unwrap()),
            TranslationMode::Equivariant,
        )
        .unwrap();
        assert_eq!(evaluate(&asym, &x).unwrap_err(), Error::TooManyForAveraging { n: 9, limit: 8 });
        let pooled = EquivariantModel::new(
            GroupFamily::Orthogonal,
            2,
            symmetrize_permutation(fixture("pooled-gram").unwrap()),
            TranslationMode::Equivariant,
        )
        .unwrap();
        assert!(evaluate(&pooled, &x).is_ok());
    }

    #[test]
    fn span_check_examples() {
        let x = VectorTuple::free(3, vec![Vector::basis(3, 0), Vector::basis(3, 1)]).unwrap();
        let inside = &x.get(0).clone() + &x.get(1).scale(2.0);
        let metric = Metric::euclidean(3);
        assert!(span_check(&x, &inside, &metric) < 1e-10);
        let cross = generalized_cross(x.vectors()).unwrap();
        assert!((span_check(&x, &cross, &metric) - 1.0).abs() < 1e-12);
        let empty = VectorTuple::free(3, vec![]).unwrap();
        assert_eq!(span_check(&empty, &Vector::zeros(3), &metric), 0.0);
    }

    #[test]
    fn translation_families_need_positions() {
        let mut rng = RngState::new(5);
        let x = random_tuple(&mut rng, 3, 3, Role::Free);
        let model =
            EquivariantModel::new(GroupFamily::Euclidean, 3, fixture("uniform").unwrap(), TranslationMode::Invariant)
                .unwrap();
        assert_eq!(evaluate(&model, &x).unwrap_err(), Error::NoPositionVectors);
    }

    #[test]
    fn model_file_round_trip() {
        let model = EquivariantModel::new(
            GroupFamily::Rotation,
            3,
            symmetrize_permutation(fixture("cross-weighted").unwrap()),
            TranslationMode::Equivariant,
        )
        .unwrap();
        let json = serde_json::to_string(&model.to_file()).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        let rebuilt = EquivariantModel::from_file(&back).unwrap();
        let mut rng = RngState::new(0);
        let x = random_tuple(&mut rng, 4, 3, Role::Free);
        assert_eq!(evaluate(&model, &x).unwrap(), evaluate(&rebuilt, &x).unwrap());
    }
}
