//! Group elements, samplers, and their actions on vector tuples.
//!
//! Orthogonal and rotation samples are Haar-distributed. Lorentz samples are
//! products `B(phi, axis) * R` of a boost with bounded rapidity and an embedded
//! spatial rotation; the Lorentz group has no finite Haar measure, so this
//! family is a deliberate test distribution rather than a uniform one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::rng::RngState;
use crate::tolerance;
use crate::tuple::{Metric, Role, VectorTuple};

/// Default bound on boost rapidity (cosh 2 ~ 3.76).
pub const DEFAULT_RAPIDITY_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupFamily {
    Orthogonal,
    Rotation,
    Lorentz,
    Translation,
    Permutation,
    Euclidean,
    Poincare,
}

impl GroupFamily {
    pub fn name(self) -> &'static str {
        match self {
            GroupFamily::Orthogonal => "orthogonal",
            GroupFamily::Rotation => "rotation",
            GroupFamily::Lorentz => "lorentz",
            GroupFamily::Translation => "translation",
            GroupFamily::Permutation => "permutation",
            GroupFamily::Euclidean => "euclidean",
            GroupFamily::Poincare => "poincare",
        }
    }

    /// The metric preserved by the linear part, if any.
    pub fn metric(self, dim: usize) -> Metric {
        match self {
            GroupFamily::Lorentz | GroupFamily::Poincare => Metric::minkowski(dim),
            _ => Metric::euclidean(dim),
        }
    }
}

/// One element of a group from the supported families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupElement {
    Orthogonal { matrix: Mat },
    Rotation { matrix: Mat },
    Lorentz { matrix: Mat },
    Translation { shift: Vector },
    /// `sigma * (v_1..v_n) = (v_sigma(1), .., v_sigma(n))`, zero-based.
    Permutation { sigma: Vec<usize> },
    Euclidean { shift: Vector, matrix: Mat },
    Poincare { shift: Vector, matrix: Mat },
}

impl GroupElement {
    pub fn orthogonal(matrix: Mat) -> Result<Self> {
        check_orthogonal(&matrix)?;
        Ok(Self::Orthogonal { matrix })
    }

    pub fn rotation(matrix: Mat) -> Result<Self> {
        check_orthogonal(&matrix)?;
        let det = matrix.determinant()?;
        if (det - 1.0).abs() > tolerance::ROTATION_DET {
            return Err(Error::InvalidArgument(format!("rotation has determinant {det}")));
        }
        Ok(Self::Rotation { matrix })
    }

    pub fn lorentz(matrix: Mat) -> Result<Self> {
        check_lorentz(&matrix)?;
        Ok(Self::Lorentz { matrix })
    }

    pub fn permutation(sigma: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; sigma.len()];
        for &s in &sigma {
            if s >= sigma.len() || seen[s] {
                return Err(Error::NotAPermutation(sigma));
            }
            seen[s] = true;
        }
        Ok(Self::Permutation { sigma })
    }

    pub fn euclidean(shift: Vector, matrix: Mat) -> Result<Self> {
        check_orthogonal(&matrix)?;
        if shift.dim() != matrix.rows() {
            return Err(Error::DimensionMismatch { expected: matrix.rows(), found: shift.dim() });
        }
        Ok(Self::Euclidean { shift, matrix })
    }

    pub fn poincare(shift: Vector, matrix: Mat) -> Result<Self> {
        check_lorentz(&matrix)?;
        if shift.dim() != matrix.rows() {
            return Err(Error::DimensionMismatch { expected: matrix.rows(), found: shift.dim() });
        }
        Ok(Self::Poincare { shift, matrix })
    }

    pub fn family(&self) -> GroupFamily {
        match self {
            GroupElement::Orthogonal { .. } => GroupFamily::Orthogonal,
            GroupElement::Rotation { .. } => GroupFamily::Rotation,
            GroupElement::Lorentz { .. } => GroupFamily::Lorentz,
            GroupElement::Translation { .. } => GroupFamily::Translation,
            GroupElement::Permutation { .. } => GroupFamily::Permutation,
            GroupElement::Euclidean { .. } => GroupFamily::Euclidean,
            GroupElement::Poincare { .. } => GroupFamily::Poincare,
        }
    }

    /// The linear part, when the element has one.
    pub fn linear(&self) -> Option<&Mat> {
        match self {
            GroupElement::Orthogonal { matrix }
            | GroupElement::Rotation { matrix }
            | GroupElement::Lorentz { matrix }
            | GroupElement::Euclidean { matrix, .. }
            | GroupElement::Poincare { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn shift(&self) -> Option<&Vector> {
        match self {
            GroupElement::Translation { shift }
            | GroupElement::Euclidean { shift, .. }
            | GroupElement::Poincare { shift, .. } => Some(shift),
            _ => None,
        }
    }

    /// Determinant of the linear part (1 for pure translations/permutations).
    pub fn orientation(&self) -> f64 {
        self.linear().map_or(1.0, |m| m.determinant().unwrap_or(f64::NAN))
    }

    /// Applies the element to a tuple. Translations move position slots only.
    pub fn apply(&self, x: &VectorTuple) -> Result<VectorTuple> {
        match self {
            GroupElement::Permutation { sigma } => {
                if sigma.len() != x.len() {
                    return Err(Error::PermutationLength { expected: x.len(), found: sigma.len() });
                }
                let vectors = sigma.iter().map(|&s| x.get(s).clone()).collect();
                let roles = sigma.iter().map(|&s| x.roles()[s]).collect();
                VectorTuple::new(x.dim(), vectors, roles)
            }
            _ => {
                let linear = self.linear();
                let shift = self.shift();
                let dim = linear.map_or_else(|| shift.map_or(0, Vector::dim), Mat::rows);
                if dim != x.dim() {
                    return Err(Error::DimensionMismatch { expected: dim, found: x.dim() });
                }
                let vectors = x
                    .vectors()
                    .iter()
                    .zip(x.roles())
                    .map(|(v, role)| {
                        let mut out = match linear {
                            Some(q) => q.mul_vec(v).expect("dimension checked"),
                            None => v.clone(),
                        };
                        if let (Some(w), Role::Position) = (shift, role) {
                            out.axpy(1.0, w);
                        }
                        out
                    })
                    .collect();
                VectorTuple::new(x.dim(), vectors, x.roles().to_vec())
            }
        }
    }

    /// Group product `self ∘ other`, acting as `other` first.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        use GroupElement::*;
        let mismatch =
            || Error::FamilyMismatch { left: self.family().name(), right: other.family().name() };
        match (self, other) {
            (Rotation { matrix: a }, Rotation { matrix: b }) => {
                Ok(Rotation { matrix: checked_product(a, b)? })
            }
            (Orthogonal { matrix: a } | Rotation { matrix: a }, Orthogonal { matrix: b } | Rotation { matrix: b }) => {
                Ok(Orthogonal { matrix: checked_product(a, b)? })
            }
            (Lorentz { matrix: a }, Lorentz { matrix: b }) => {
                Ok(Lorentz { matrix: checked_product(a, b)? })
            }
            (Translation { shift: a }, Translation { shift: b }) => {
                same_dim(a, b)?;
                Ok(Translation { shift: a + b })
            }
            (Permutation { sigma: a }, Permutation { sigma: b }) => {
                if a.len() != b.len() {
                    return Err(Error::PermutationLength { expected: a.len(), found: b.len() });
                }
                // apply(a, apply(b, x))_i = x_{b(a(i))}
                Ok(Permutation { sigma: a.iter().map(|&i| b[i]).collect() })
            }
            (Euclidean { shift: w1, matrix: q1 }, Euclidean { shift: w2, matrix: q2 }) => {
                let (shift, matrix) = semidirect(w1, q1, w2, q2)?;
                Ok(Euclidean { shift, matrix })
            }
            (Poincare { shift: w1, matrix: q1 }, Poincare { shift: w2, matrix: q2 }) => {
                let (shift, matrix) = semidirect(w1, q1, w2, q2)?;
                Ok(Poincare { shift, matrix })
            }
            _ => Err(mismatch()),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        use GroupElement::*;
        match self {
            Orthogonal { matrix } => Orthogonal { matrix: matrix.transpose() },
            Rotation { matrix } => Rotation { matrix: matrix.transpose() },
            Lorentz { matrix } => Lorentz { matrix: lorentz_inverse(matrix) },
            Translation { shift } => Translation { shift: -shift },
            Permutation { sigma } => {
                let mut inv = vec![0; sigma.len()];
                for (i, &s) in sigma.iter().enumerate() {
                    inv[s] = i;
                }
                Permutation { sigma: inv }
            }
            Euclidean { shift, matrix } => {
                let qt = matrix.transpose();
                let w = -&qt.mul_vec(shift).expect("square");
                Euclidean { shift: w, matrix: qt }
            }
            Poincare { shift, matrix } => {
                let inv = lorentz_inverse(matrix);
                let w = -&inv.mul_vec(shift).expect("square");
                Poincare { shift: w, matrix: inv }
            }
        }
    }

    /// Identity element of `family` at the given dimension (or length, for
    /// permutations).
    pub fn identity(family: GroupFamily, dim: usize) -> GroupElement {
        let eye = Mat::identity(dim);
        match family {
            GroupFamily::Orthogonal => GroupElement::Orthogonal { matrix: eye },
            GroupFamily::Rotation => GroupElement::Rotation { matrix: eye },
            GroupFamily::Lorentz => GroupElement::Lorentz { matrix: eye },
            GroupFamily::Translation => GroupElement::Translation { shift: Vector::zeros(dim) },
            GroupFamily::Permutation => GroupElement::Permutation { sigma: (0..dim).collect() },
            GroupFamily::Euclidean => {
                GroupElement::Euclidean { shift: Vector::zeros(dim), matrix: eye }
            }
            GroupFamily::Poincare => {
                GroupElement::Poincare { shift: Vector::zeros(dim), matrix: eye }
            }
        }
    }
}

fn check_orthogonal(q: &Mat) -> Result<()> {
    if !q.is_square() {
        return Err(Error::InvalidArgument("orthogonal matrix must be square".into()));
    }
    let err = (&q.transpose() * q).max_abs_diff(&Mat::identity(q.rows()));
    if err > tolerance::ORTHOGONALITY {
        return Err(Error::InvalidArgument(format!("Q^T Q deviates from I by {err:e}")));
    }
    Ok(())
}

fn check_lorentz(q: &Mat) -> Result<()> {
    if !q.is_square() || q.rows() < 2 {
        return Err(Error::InvalidArgument("Lorentz matrix must be square, dim >= 2".into()));
    }
    let err = lorentz_defect(q);
    if err > tolerance::LORENTZ_FORM {
        return Err(Error::InvalidArgument(format!("Q^T L Q deviates from L by {err:e}")));
    }
    Ok(())
}

/// `max |Q^T Λ Q - Λ|`.
pub fn lorentz_defect(q: &Mat) -> f64 {
    let lambda = Metric::minkowski(q.rows()).signature();
    (&(&q.transpose() * &lambda) * q).max_abs_diff(&lambda)
}

fn lorentz_inverse(q: &Mat) -> Mat {
    let lambda = Metric::minkowski(q.rows()).signature();
    &(&lambda * &q.transpose()) * &lambda
}

fn checked_product(a: &Mat, b: &Mat) -> Result<Mat> {
    a.matmul(b)
}

fn same_dim(a: &Vector, b: &Vector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

fn semidirect(w1: &Vector, q1: &Mat, w2: &Vector, q2: &Mat) -> Result<(Vector, Mat)> {
    same_dim(w1, w2)?;
    let matrix = q1.matmul(q2)?;
    let shift = w1 + &q1.mul_vec(w2)?;
    Ok((shift, matrix))
}

/// Haar-distributed element of O(d).
pub fn sample_orthogonal(rng: &mut RngState, d: usize) -> Result<GroupElement> {
    Ok(GroupElement::Orthogonal { matrix: haar_orthogonal(rng, d)? })
}

/// Haar-distributed element of SO(d).
pub fn sample_rotation(rng: &mut RngState, d: usize) -> Result<GroupElement> {
    Ok(GroupElement::Rotation { matrix: haar_rotation(rng, d)? })
}

/// `B(phi, axis) * diag(1, R)` with `phi ~ U(-rapidity_max, rapidity_max)`.
pub fn sample_lorentz(
    rng: &mut RngState,
    d_plus_1: usize,
    rapidity_max: f64,
) -> Result<GroupElement> {
    if d_plus_1 < 2 {
        return Err(Error::InvalidArgument(format!("Lorentz dimension {d_plus_1} < 2")));
    }
    if !(rapidity_max > 0.0 && rapidity_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("rapidity_max must be > 0, got {rapidity_max}")));
    }
    let spatial = haar_rotation(rng, d_plus_1 - 1)?;
    let phi = rng.uniform(-rapidity_max, rapidity_max);
    let axis = 1 + rng.index(d_plus_1 - 1);
    let boost = boost_matrix(d_plus_1, axis, phi);
    let mut r = Mat::identity(d_plus_1);
    for i in 1..d_plus_1 {
        for j in 1..d_plus_1 {
            r[(i, j)] = spatial[(i - 1, j - 1)];
        }
    }
    Ok(GroupElement::Lorentz { matrix: &boost * &r })
}

/// Pure boost of rapidity `phi` along spatial `axis` (1-based in the full
/// coordinate vector, since axis 0 is time).
pub fn boost_matrix(dim: usize, axis: usize, phi: f64) -> Mat {
    let mut b = Mat::identity(dim);
    let (c, s) = (phi.cosh(), phi.sinh());
    b[(0, 0)] = c;
    b[(axis, axis)] = c;
    b[(0, axis)] = s;
    b[(axis, 0)] = s;
    b
}

pub fn sample_translation(rng: &mut RngState, d: usize) -> GroupElement {
    GroupElement::Translation { shift: Vector::from_raw(rng.normals(d)) }
}

pub fn sample_permutation(rng: &mut RngState, n: usize) -> GroupElement {
    GroupElement::Permutation { sigma: rng.permutation(n) }
}

pub fn sample_euclidean(rng: &mut RngState, d: usize) -> Result<GroupElement> {
    let matrix = haar_orthogonal(rng, d)?;
    let shift = Vector::from_raw(rng.normals(d));
    Ok(GroupElement::Euclidean { shift, matrix })
}

pub fn sample_poincare(
    rng: &mut RngState,
    d_plus_1: usize,
    rapidity_max: f64,
) -> Result<GroupElement> {
    let GroupElement::Lorentz { matrix } = sample_lorentz(rng, d_plus_1, rapidity_max)? else {
        unreachable!()
    };
    let shift = Vector::from_raw(rng.normals(d_plus_1));
    Ok(GroupElement::Poincare { shift, matrix })
}

/// Samples any family. `size` is the ambient dimension, or the tuple length
/// for permutations.
pub fn sample(
    family: GroupFamily,
    size: usize,
    rapidity_max: f64,
    rng: &mut RngState,
) -> Result<GroupElement> {
    if size == 0 {
        return Err(Error::InvalidArgument("group size must be >= 1".into()));
    }
    match family {
        GroupFamily::Orthogonal => sample_orthogonal(rng, size),
        GroupFamily::Rotation => sample_rotation(rng, size),
        GroupFamily::Lorentz => sample_lorentz(rng, size, rapidity_max),
        GroupFamily::Translation => Ok(sample_translation(rng, size)),
        GroupFamily::Permutation => Ok(sample_permutation(rng, size)),
        GroupFamily::Euclidean => sample_euclidean(rng, size),
        GroupFamily::Poincare => sample_poincare(rng, size, rapidity_max),
    }
}

fn haar_orthogonal(rng: &mut RngState, d: usize) -> Result<Mat> {
    if d < 1 {
        return Err(Error::InvalidArgument("orthogonal dimension must be >= 1".into()));
    }
    let gaussian = Mat::from_raw(d, d, rng.normals(d * d));
    let (mut q, r) = gaussian.qr()?;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let flip = rng.index(d);
    for i in 0..d {
        q[(i, flip)] = -q[(i, flip)];
    }
    Ok(q)
}

fn haar_rotation(rng: &mut RngState, d: usize) -> Result<Mat> {
    let mut q = haar_orthogonal(rng, d)?;
    if q.determinant()? < 0.0 {
        for i in 0..d {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    Ok(q)
}
