//! Invariant scalar features of vector tuples.
//!
//! The Gram matrix of pairwise inner products is a complete set of O(d)
//! (or Lorentz) invariants; `d x d` subdeterminants add the orientation
//! information SO(d) needs. This module also holds the tools that go the
//! other way: Cholesky reconstruction of vectors from a Gram matrix,
//! low-rank completion from the wrap-around band `Omega(M)`, and
//! Gram–Schmidt under the Minkowski form.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, Mat, Vector};
use crate::rng::RngState;
use crate::tolerance;
use crate::tuple::{Metric, Role, VectorTuple};

/// Determinant of the `d x d` matrix with columns `v_j`, `j in indices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdeterminant {
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// The band `M[i][(i+s) mod n]`, `s = 0..=d`, in `i`-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSample {
    pub n: usize,
    pub d: usize,
    pub entries: Vec<OmegaEntry>,
}

/// Invariant features handed to coefficient functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFeatureSet {
    pub metric: Metric,
    pub gram: Mat,
    pub subdets: Option<Vec<Subdeterminant>>,
    pub omega: Option<OmegaSample>,
}

/// File form of a [`ScalarFeatureSet`]: the Gram matrix row-major, plus
/// optional subdeterminant and band records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub metric: Metric,
    pub n: usize,
    pub gram: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subdets: Option<Vec<Subdeterminant>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaSample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeatureOptions {
    pub subdets: bool,
    /// Band half-width `d` for `Omega(M)`.
    pub omega: Option<usize>,
}

impl ScalarFeatureSet {
    pub fn compute(metric: &Metric, x: &VectorTuple, options: FeatureOptions) -> Result<Self> {
        let gram = gram(metric, x)?;
        let subdets = if options.subdets && x.len() >= x.dim() {
            Some(subdeterminants(x)?)
        } else {
            None
        };
        let omega = options.omega.map(|d| omega_sample(&gram, d)).transpose()?;
        Ok(Self { metric: *metric, gram, subdets, omega })
    }

    pub fn len(&self) -> usize {
        self.gram.rows()
    }

    pub fn to_file(&self) -> FeatureFile {
        FeatureFile {
            metric: self.metric,
            n: self.len(),
            gram: self.gram.data().to_vec(),
            subdets: self.subdets.clone(),
            omega: self.omega.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Features of the permuted tuple `(v_sigma(0), .., v_sigma(n-1))`,
    /// derived without touching the vectors.
    pub fn permuted(&self, sigma: &[usize]) -> Result<Self> {
        let n = self.len();
        if sigma.len() != n {
            return Err(Error::PermutationLength { expected: n, found: sigma.len() });
        }
        let mut gram = Mat::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                gram[(a, b)] = self.gram[(sigma[a], sigma[b])];
            }
        }
        let subdets = self.subdets.as_ref().map(|list| {
            let lookup: std::collections::HashMap<&[usize], f64> =
                list.iter().map(|s| (s.indices.as_slice(), s.value)).collect();
            list.iter()
                .map(|s| {
                    // columns sigma(S) in the order of S; sort and track parity
                    let mapped: Vec<usize> = s.indices.iter().map(|&a| sigma[a]).collect();
                    let (sorted, parity) = sort_with_parity(&mapped);
                    Subdeterminant { indices: s.indices.clone(), value: parity * lookup[sorted.as_slice()] }
                })
                .collect()
        });
        let omega = self.omega.as_ref().map(|o| omega_sample(&gram, o.d)).transpose()?;
        Ok(Self { metric: self.metric, gram, subdets, omega })
    }
}

fn sort_with_parity(values: &[usize]) -> (Vec<usize>, f64) {
    let mut v = values.to_vec();
    let mut parity = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                parity = -parity;
            }
        }
    }
    (v, parity)
}

/// `M[i][j] = <v_i, v_j>`, computed for `i <= j` and mirrored.
pub fn gram(metric: &Metric, x: &VectorTuple) -> Result<Mat> {
    if x.dim() != metric.dim {
        return Err(Error::DimensionMismatch { expected: metric.dim, found: x.dim() });
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::Empty("tuple"));
    }
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let value = metric.inner_unchecked(x.get(i), x.get(j));
            m[(i, j)] = value;
            m[(j, i)] = value;
        }
    }
    Ok(m)
}

/// All `d x d` subdeterminants of the `d x n` matrix `V`, subsets in
/// lexicographic order, columns ascending.
pub fn subdeterminants(x: &VectorTuple) -> Result<Vec<Subdeterminant>> {
    let (d, n) = (x.dim(), x.len());
    if n < d {
        return Err(Error::TooFewVectors { need: d, have: n });
    }
    (0..n)
        .combinations(d)
        .map(|indices| {
            let cols: Vec<Vector> = indices.iter().map(|&j| x.get(j).clone()).collect();
            let value = Mat::from_columns(&cols)?.determinant()?;
            Ok(Subdeterminant { indices, value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// Subtract the first position vector and drop it.
    FirstPosition,
    /// Subtract the centroid of the positions and keep all of them.
    CenterOfPositions,
}

/// Quotient by translations: position slots become differences against the
/// pivot, free slots pass through, and every output slot is free.
pub fn translation_reduce(x: &VectorTuple, pivot: PivotRule) -> Result<VectorTuple> {
    let positions = x.position_indices();
    let Some(&first) = positions.first() else {
        return Err(Error::NoPositionVectors);
    };
    let anchor = match pivot {
        PivotRule::FirstPosition => x.get(first).clone(),
        PivotRule::CenterOfPositions => centroid(positions.iter().map(|&i| x.get(i)), x.dim()),
    };
    let mut vectors = Vec::with_capacity(x.len());
    for (i, (v, role)) in x.vectors().iter().zip(x.roles()).enumerate() {
        match role {
            Role::Position if pivot == PivotRule::FirstPosition && i == first => {}
            Role::Position => vectors.push(v - &anchor),
            Role::Free => vectors.push(v.clone()),
        }
    }
    VectorTuple::free(x.dim(), vectors)
}

pub(crate) fn centroid<'a>(vectors: impl Iterator<Item = &'a Vector>, dim: usize) -> Vector {
    let mut sum = Vector::zeros(dim);
    let mut count = 0usize;
    for v in vectors {
        sum.axpy(1.0, v);
        count += 1;
    }
    sum.scale(1.0 / count.max(1) as f64)
}

/// Extracts the wrap-around band `M[i][(i+s) mod n]`, `s = 0..=d`.
pub fn omega_sample(m: &Mat, d: usize) -> Result<OmegaSample> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("Omega sampling needs a square matrix".into()));
    }
    let n = m.rows();
    if n < d + 1 {
        return Err(Error::TooFewVectors { need: d + 1, have: n });
    }
    let entries = (0..n)
        .flat_map(|i| (0..=d).map(move |s| (i, (i + s) % n)))
        .map(|(i, j)| OmegaEntry { i, j, value: m[(i, j)] })
        .collect();
    Ok(OmegaSample { n, d, entries })
}

/// Result of low-rank completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub matrix: Mat,
    /// The factorization reproduces every sampled entry to relative RMS
    /// misfit `tolerance::ALS_FIT`.
    pub converged: bool,
    pub iterations: usize,
    /// Relative RMS misfit on sampled entries.
    pub residual: f64,
}

/// Completes a rank-`d` symmetric matrix from its `Omega` band by
/// alternating least squares on `M = W^T H` (`W`, `H` both `d x n`).
///
/// Sampled entries are used together with their mirror images since the
/// target is symmetric. The factors start from the leading eigenpairs of
/// the zero-filled sample. ALS converges only linearly, so its result is
/// polished with damped Gauss–Newton steps on the same objective; if that
/// still leaves a misfit, a few seeded random restarts are tried and the
/// best fit is kept.
pub fn omega_complete(sample: &OmegaSample) -> Result<Completion> {
    let (n, d) = (sample.n, sample.d);
    if d == 0 || n < d + 1 {
        return Err(Error::InvalidArgument(format!("cannot complete n={n} from rank {d}")));
    }
    // symmetric closure of the observed entries
    let mut known: Vec<Option<f64>> = vec![None; n * n];
    for e in &sample.entries {
        if !e.value.is_finite() {
            return Err(Error::NonFinite("Omega sample"));
        }
        if e.i >= n || e.j >= n {
            return Err(Error::InvalidArgument(format!("entry ({}, {}) outside {n}x{n}", e.i, e.j)));
        }
        known[e.i * n + e.j] = Some(e.value);
        known[e.j * n + e.i] = Some(e.value);
    }
    let problem = Factorization::new(&known, n, d);

    let (w, h) = spectral_start(&known, n, d)?;
    let mut best = problem.fit(w, h)?;
    let mut rng = RngState::new(0x0e9a);
    for _ in 0..COMPLETION_RESTARTS {
        if best.residual <= tolerance::ALS_FIT {
            break;
        }
        let w = (0..n).map(|_| rng.normals(d)).collect();
        let h = (0..n).map(|_| rng.normals(d)).collect();
        let candidate = problem.fit(w, h)?;
        if candidate.residual < best.residual {
            best = candidate;
        }
    }
    Ok(best)
}

const COMPLETION_RESTARTS: usize = 4;
const POLISH_ITERATIONS: usize = 100;

struct Factorization {
    n: usize,
    d: usize,
    /// `(row, column, value)` over the symmetric closure of the sample.
    observations: Vec<(usize, usize, f64)>,
    by_column: Vec<Vec<(usize, f64)>>,
    normalizer: f64,
}

impl Factorization {
    fn new(known: &[Option<f64>], n: usize, d: usize) -> Self {
        let by_column: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|c| (0..n).filter_map(|r| known[r * n + c].map(|v| (r, v))).collect())
            .collect();
        let observations = by_column
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c, v)))
            .collect();
        let energy: f64 = known.iter().flatten().map(|v| v * v).sum();
        // normalized objective keeps the stopping rule scale free
        let normalizer = if energy > 0.0 { energy } else { 1.0 };
        Self { n, d, observations, by_column, normalizer }
    }

    fn objective(&self, w: &[Vec<f64>], h: &[Vec<f64>]) -> f64 {
        self.observations
            .iter()
            .map(|&(r, c, v)| {
                let fit: f64 = (0..self.d).map(|k| w[r][k] * h[c][k]).sum();
                (v - fit) * (v - fit)
            })
            .sum::<f64>()
            / self.normalizer
    }

    fn fit(&self, mut w: Vec<Vec<f64>>, mut h: Vec<Vec<f64>>) -> Result<Completion> {
        let d = self.d;
        let mut previous = self.objective(&w, &h);
        let mut iterations = 0;
        while iterations < tolerance::ALS_MAX_ITERATIONS {
            iterations += 1;
            // the mask is symmetric, so both half-steps share neighbour lists
            for (c, col) in self.by_column.iter().enumerate() {
                h[c] = least_squares_row(col, &w, d)?;
            }
            for (r, row) in self.by_column.iter().enumerate() {
                w[r] = least_squares_row(row, &h, d)?;
            }
            let current = self.objective(&w, &h);
            let decrease = previous - current;
            previous = current;
            if decrease < tolerance::ALS_DECREASE || current == 0.0 {
                break;
            }
        }
        previous = self.polish(&mut w, &mut h, previous)?;

        let n = self.n;
        let mut matrix = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let a: f64 = (0..d).map(|k| w[i][k] * h[j][k]).sum();
                let b: f64 = (0..d).map(|k| w[j][k] * h[i][k]).sum();
                matrix[(i, j)] = 0.5 * (a + b);
            }
        }
        let residual = previous.sqrt();
        Ok(Completion { matrix, converged: residual <= tolerance::ALS_FIT, iterations, residual })
    }

    /// Levenberg–Marquardt on all factor entries at once.
    fn polish(&self, w: &mut [Vec<f64>], h: &mut [Vec<f64>], mut current: f64) -> Result<f64> {
        let (n, d) = (self.n, self.d);
        let p = 2 * n * d;
        let mut damping = 1e-3;
        for _ in 0..POLISH_ITERATIONS {
            if current <= 1e-28 {
                break;
            }
            // J^T J and J^T r with parameters ordered (W rows, H rows)
            let mut jtj = Mat::zeros(p, p);
            let mut jtr = vec![0.0; p];
            for &(r, c, v) in &self.observations {
                let fit: f64 = (0..d).map(|k| w[r][k] * h[c][k]).sum();
                let residual = v - fit;
                let mut grad: Vec<(usize, f64)> = Vec::with_capacity(2 * d);
                for k in 0..d {
                    grad.push((r * d + k, h[c][k]));
                    grad.push((n * d + c * d + k, w[r][k]));
                }
                for &(a, ga) in &grad {
                    jtr[a] += ga * residual;
                    for &(b, gb) in &grad {
                        jtj[(a, b)] += ga * gb;
                    }
                }
            }
            let mut improved = false;
            for _ in 0..10 {
                let mut system = jtj.clone();
                for a in 0..p {
                    system[(a, a)] += damping * (1.0 + jtj[(a, a)]);
                }
                let Ok(step) = system.solve(&jtr) else {
                    damping *= 10.0;
                    continue;
                };
                let mut w_try = w.to_vec();
                let mut h_try = h.to_vec();
                for i in 0..n {
                    for k in 0..d {
                        w_try[i][k] += step[i * d + k];
                        h_try[i][k] += step[n * d + i * d + k];
                    }
                }
                let trial = self.objective(&w_try, &h_try);
                if trial < current {
                    w.clone_from_slice(&w_try);
                    h.clone_from_slice(&h_try);
                    current = trial;
                    damping = (damping * 0.1).max(1e-15);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        Ok(current)
    }
}

fn spectral_start(known: &[Option<f64>], n: usize, d: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let filled = Mat::new(n, n, known.iter().map(|v| v.unwrap_or(0.0)).collect())?;
    let (values, vectors) = filled.symmetric_eigen()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut w = vec![vec![0.0; d]; n];
    let mut h = vec![vec![0.0; d]; n];
    for (k, &idx) in order.iter().take(d).enumerate() {
        let root = values[idx].abs().sqrt();
        let sign = if values[idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            w[i][k] = root * vectors[(i, idx)];
            h[i][k] = sign * root * vectors[(i, idx)];
        }
    }
    Ok((w, h))
}

/// Minimizes `sum_(r,v) (v - <factors[r], x>)^2` over `x in R^d`.
fn least_squares_row(observations: &[(usize, f64)], factors: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    let mut normal = Mat::zeros(d, d);
    let mut rhs = vec![0.0; d];
    for &(r, v) in observations {
        let f = &factors[r];
        for a in 0..d {
            rhs[a] += v * f[a];
            for b in 0..d {
                normal[(a, b)] += f[a] * f[b];
            }
        }
    }
    let trace: f64 = (0..d).map(|a| normal[(a, a)]).sum();
    if trace <= 0.0 {
        return Ok(vec![0.0; d]);
    }
    // tiny ridge keeps rank-deficient systems solvable
    let ridge = trace * 1e-13;
    for a in 0..d {
        normal[(a, a)] += ridge;
    }
    normal.solve(&rhs)
}

/// Vectors whose Euclidean Gram matrix is `m`, unique up to O(n).
///
/// Uses diagonally pivoted Cholesky so rank-deficient input yields vectors
/// whose trailing components are exactly zero. The output lives in R^n.
pub fn cholesky_reconstruct(m: &Mat) -> Result<VectorTuple> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("Gram matrix must be square".into()));
    }
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    if m.max_abs_diff(&m.transpose()) > tolerance::GRAM_SYMMETRY * scale {
        return Err(Error::InvalidArgument("Gram matrix is not symmetric".into()));
    }
    let (values, _) = m.symmetric_eigen()?;
    let min_eigenvalue = values.last().copied().unwrap_or(0.0);
    if min_eigenvalue < tolerance::PSD_EIGEN_FLOOR {
        return Err(Error::Indefinite { min_eigenvalue });
    }

    let mut s = m.clone();
    let mut l = Mat::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let stop = max_diag * 1e-14;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if s[(i, i)] > s[(p, p)] {
                p = i;
            }
        }
        if s[(p, p)] <= stop {
            break;
        }
        if p != k {
            perm.swap(k, p);
            for j in 0..n {
                let t = s[(k, j)];
                s[(k, j)] = s[(p, j)];
                s[(p, j)] = t;
            }
            for i in 0..n {
                let t = s[(i, k)];
                s[(i, k)] = s[(i, p)];
                s[(i, p)] = t;
            }
            for j in 0..k {
                let t = l[(k, j)];
                l[(k, j)] = l[(p, j)];
                l[(p, j)] = t;
            }
        }
        let pivot = s[(k, k)].sqrt();
        l[(k, k)] = pivot;
        for i in k + 1..n {
            l[(i, k)] = s[(i, k)] / pivot;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                s[(i, j)] -= l[(i, k)] * l[(j, k)];
            }
        }
    }
    let mut vectors = vec![Vector::zeros(n); n];
    for (row, &original) in perm.iter().enumerate() {
        vectors[original] = Vector::from_raw(l.row(row).to_vec());
    }
    VectorTuple::free(n, vectors)
}

/// Output of Minkowski Gram–Schmidt.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzBasis {
    /// Mutually Minkowski-orthogonal, non-lightlike vectors.
    pub basis: VectorTuple,
    /// The inputs actually orthogonalized: the originals, or a random
    /// re-mixing of them after a lightlike restart. Each `basis[j]` lies in
    /// the span of `inputs[..=j]`.
    pub inputs: VectorTuple,
    pub restarts: usize,
}

/// Gram–Schmidt with the Minkowski inner product.
///
/// A lightlike intermediate vector (`|<u,u>| < 1e-10 |u|^2`) triggers a
/// restart with the remaining inputs replaced by random linear
/// combinations of themselves; if the offending vector is the last one the
/// whole input set is re-mixed.
pub fn lorentz_orthogonalize(x: &VectorTuple, rng: &mut RngState) -> Result<LorentzBasis> {
    let metric = Metric::minkowski(x.dim());
    let n = x.len();
    if n == 0 {
        return Err(Error::Empty("tuple"));
    }
    for j in 0..n {
        if orthonormal_basis(&x.vectors()[..=j], tolerance::LINEAR_DEPENDENCE).len() <= j {
            return Err(Error::LinearlyDependent { index: j });
        }
    }
    let mut inputs: Vec<Vector> = x.vectors().to_vec();
    let mut restarts = 0;
    'restart: loop {
        let mut basis: Vec<Vector> = Vec::with_capacity(n);
        let mut norms: Vec<f64> = Vec::with_capacity(n);
        for j in 0..n {
            let mut u = inputs[j].clone();
            // second pass re-orthogonalizes against rounding
            for _ in 0..2 {
                for (k, prev) in basis.iter().enumerate() {
                    let c = metric.inner_unchecked(&u, prev) / norms[k];
                    u.axpy(-c, prev);
                }
            }
            let self_product = metric.inner_unchecked(&u, &u);
            if self_product.abs() < tolerance::LIGHTLIKE * u.norm_squared() {
                restarts += 1;
                if restarts > tolerance::MAX_LIGHTLIKE_RESTARTS {
                    return Err(Error::LightlikeDegeneracy { restarts: restarts - 1 });
                }
                let start = if n - j >= 2 { j } else { 0 };
                remix(&mut inputs[start..], rng);
                continue 'restart;
            }
            basis.push(u);
            norms.push(self_product);
        }
        return Ok(LorentzBasis {
            basis: VectorTuple::free(x.dim(), basis)?,
            inputs: VectorTuple::free(x.dim(), inputs)?,
            restarts,
        });
    }
}

fn remix(block: &mut [Vector], rng: &mut RngState) {
    let k = block.len();
    let original = block.to_vec();
    for target in block.iter_mut() {
        let mut mixed = Vector::zeros(original[0].dim());
        for source in &original {
            mixed.axpy(rng.normal(), source);
        }
        *target = mixed;
    }
    debug_assert_eq!(block.len(), k);
}
