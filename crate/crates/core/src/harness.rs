//! Randomized symmetry certification.
//!
//! A [`SymmetrySpec`] describes the input layout (slots of role-tagged
//! vectors plus per-slot invariant scalars), the group to sample from, and how
//! the output should transform. [`certify`] draws random inputs and group
//! elements and reports how far `f(g.x)` strays from `g.f(x)`, measured as
//! `|f(g.x) - g.f(x)| / (1 + |f(x)|)` per output entry.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{self, EquivariantModel};
use crate::einsum::{self, IndexExpr, Tensor};
use crate::error::{Error, Result};
use crate::features::gram;
use crate::group::{self, GroupElement, GroupFamily, DEFAULT_RAPIDITY_MAX};
use crate::linalg::Vector;
use crate::mpnn::MpnnModel;
use crate::physics::{em_forces, total_energy, ForceForm, Particle};
use crate::rng::RngState;
use crate::tolerance;
use crate::tuple::{Metric, Role, VectorTuple};

/// How a per-slot scalar is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    /// Uniform on `[0.5, 2]`, e.g. a mass.
    Positive,
    /// `+-1`, e.g. a charge.
    Sign,
    Gaussian,
}

/// How the output is expected to transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputLaw {
    /// Unchanged by the linear part and by translations.
    ScalarInvariant,
    /// `v -> L v + w`: moves with the linear part and with translations.
    VectorEquivariant,
    /// `v -> L v`.
    VectorTranslationInvariant,
    /// `v -> det(L) L v`.
    PseudoVector,
    /// Every axis of a tensor output transforms by `L`.
    TensorEquivariant,
}

fn default_layout() -> Vec<Role> {
    vec![Role::Free]
}

fn default_rapidity() -> f64 {
    DEFAULT_RAPIDITY_MAX
}

/// A symmetry to certify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySpec {
    pub family: GroupFamily,
    /// Ambient dimension of every vector.
    pub dim: usize,
    /// Number of slots. Permutations reorder slots.
    pub slots: usize,
    /// Roles of the vectors carried by each slot.
    #[serde(default = "default_layout")]
    pub layout: Vec<Role>,
    /// Invariant scalars carried by each slot.
    #[serde(default)]
    pub scalars: Vec<ScalarKind>,
    pub output: OutputLaw,
    /// Outputs are indexed by slot and permute with the inputs.
    #[serde(default)]
    pub per_slot: bool,
    #[serde(default = "default_rapidity")]
    pub rapidity_max: f64,
}

impl SymmetrySpec {
    pub fn new(family: GroupFamily, dim: usize, slots: usize, output: OutputLaw) -> Self {
        Self {
            family,
            dim,
            slots,
            layout: default_layout(),
            scalars: Vec::new(),
            output,
            per_slot: false,
            rapidity_max: DEFAULT_RAPIDITY_MAX,
        }
    }

    /// Particle layout: each slot holds `(position, velocity)` with scalars
    /// `(mass, charge)`; see [`Input::particles`].
    pub fn particles(family: GroupFamily, dim: usize, n: usize, output: OutputLaw, per_slot: bool) -> Self {
        Self {
            layout: vec![Role::Position, Role::Free],
            scalars: vec![ScalarKind::Positive, ScalarKind::Sign],
            per_slot,
            ..Self::new(family, dim, n, output)
        }
    }

    pub fn with_layout(mut self, layout: Vec<Role>) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_per_slot(mut self, per_slot: bool) -> Self {
        self.per_slot = per_slot;
        self
    }

    /// Default pass threshold for this family.
    pub fn tolerance(&self) -> f64 {
        match self.family {
            GroupFamily::Lorentz | GroupFamily::Poincare => tolerance::EQUIVARIANCE_LORENTZ,
            _ => tolerance::EQUIVARIANCE_EUCLIDEAN,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.slots == 0 || self.layout.is_empty() {
            return Err(Error::InvalidArgument("spec needs dim, slots and layout >= 1".into()));
        }
        if !(self.rapidity_max >= 0.0) {
            return Err(Error::InvalidArgument("rapidity_max must be >= 0".into()));
        }
        Ok(())
    }

    fn same_layout(&self, other: &SymmetrySpec) -> bool {
        self.dim == other.dim
            && self.slots == other.slots
            && self.layout == other.layout
            && self.scalars == other.scalars
            && self.output == other.output
            && self.per_slot == other.per_slot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub vectors: Vec<Vector>,
    pub scalars: Vec<f64>,
}

/// One sampled input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub slots: Vec<Slot>,
    pub layout: Vec<Role>,
}

impl Input {
    /// All vectors in slot order, with their roles.
    pub fn tuple(&self) -> Result<VectorTuple> {
        let dim = self.slots.first().and_then(|s| s.vectors.first()).map_or(0, Vector::dim);
        let vectors = self.slots.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
        let roles = self.slots.iter().flat_map(|_| self.layout.iter().copied()).collect();
        VectorTuple::new(dim, vectors, roles)
    }

    /// Reads each slot as a particle: vectors `(position, velocity)`, scalars
    /// `(mass, charge)`.
    pub fn particles(&self) -> Result<Vec<Particle>> {
        self.slots
            .iter()
            .map(|s| match (&s.vectors[..], &s.scalars[..]) {
                ([r, v], [m, q]) => Particle::new(*m, *q, r.clone(), v.clone()),
                _ => Err(Error::InvalidArgument("particle slots need 2 vectors and 2 scalars".into())),
            })
            .collect()
    }

    /// The particle layout of [`SymmetrySpec::particles`].
    pub fn from_particles(particles: &[Particle]) -> Input {
        Input {
            slots: particles
                .iter()
                .map(|p| Slot { vectors: vec![p.position.clone(), p.velocity.clone()], scalars: vec![p.mass, p.charge] })
                .collect(),
            layout: vec![Role::Position, Role::Free],
        }
    }

    fn sample(spec: &SymmetrySpec, near_lightlike: bool, rng: &mut RngState) -> Input {
        let mut slots: Vec<Slot> = (0..spec.slots)
            .map(|_| Slot {
                vectors: spec.layout.iter().map(|_| Vector::from_raw(rng.normals(spec.dim))).collect(),
                scalars: spec
                    .scalars
                    .iter()
                    .map(|kind| match kind {
                        ScalarKind::Positive => rng.uniform(0.5, 2.0),
                        ScalarKind::Sign if rng.coin() => 1.0,
                        ScalarKind::Sign => -1.0,
                        ScalarKind::Gaussian => rng.normal(),
                    })
                    .collect(),
            })
            .collect();
        if near_lightlike && spec.dim >= 2 {
            // timelike + 0.999 * spacelike of equal magnitude
            let scale = rng.normal().abs() + 0.5;
            let spatial = rng.normals(spec.dim - 1);
            let norm = spatial.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let mut v = vec![scale];
            v.extend(spatial.iter().map(|x| 0.999 * scale * x / norm));
            slots[0].vectors[0] = Vector::from_raw(v);
        }
        Input { slots, layout: spec.layout.clone() }
    }

    fn act(&self, g: &GroupElement) -> Result<Input> {
        if let GroupElement::Permutation { sigma } = g {
            if sigma.len() != self.slots.len() {
                return Err(Error::PermutationLength { expected: self.slots.len(), found: sigma.len() });
            }
            return Ok(Input { slots: sigma.iter().map(|&s| self.slots[s].clone()).collect(), layout: self.layout.clone() });
        }
        let slots = self
            .slots
            .iter()
            .map(|slot| {
                let vectors = slot
                    .vectors
                    .iter()
                    .zip(&self.layout)
                    .map(|(v, role)| {
                        let mut out = match g.linear() {
                            Some(m) => m.mul_vec(v)?,
                            None => v.clone(),
                        };
                        if let (Some(w), Role::Position) = (g.shift(), role) {
                            out.axpy(1.0, w);
                        }
                        Ok(out)
                    })
                    .collect::<Result<_>>()?;
                Ok(Slot { vectors, scalars: slot.scalars.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(Input { slots, layout: self.layout.clone() })
    }
}

/// A function value: scalars, vectors or tensors, each list possibly
/// indexed by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum Output {
    Scalars(Vec<f64>),
    Vectors(Vec<Vector>),
    Tensors(Vec<Tensor>),
}

impl Output {
    fn len(&self) -> usize {
        match self {
            Output::Scalars(s) => s.len(),
            Output::Vectors(v) => v.len(),
            Output::Tensors(t) => t.len(),
        }
    }

    fn entry_norm(&self, k: usize) -> f64 {
        match self {
            Output::Scalars(s) => s[k].abs(),
            Output::Vectors(v) => v[k].norm(),
            Output::Tensors(t) => t[k].data().iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    fn entry_distance(&self, other: &Output, k: usize) -> Result<f64> {
        match (self, other) {
            (Output::Scalars(a), Output::Scalars(b)) => Ok((a[k] - b[k]).abs()),
            (Output::Vectors(a), Output::Vectors(b)) if a[k].dim() == b[k].dim() => Ok((&a[k] - &b[k]).norm()),
            (Output::Tensors(a), Output::Tensors(b)) if a[k].data().len() == b[k].data().len() => {
                Ok(a[k].data().iter().zip(b[k].data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            }
            _ => Err(Error::InvalidArgument("output shape changed under the group action".into())),
        }
    }

    fn permuted(&self, sigma: &[usize]) -> Result<Output> {
        if sigma.len() != self.len() {
            return Err(Error::PermutationLength { expected: self.len(), found: sigma.len() });
        }
        Ok(match self {
            Output::Scalars(s) => Output::Scalars(sigma.iter().map(|&i| s[i]).collect()),
            Output::Vectors(v) => Output::Vectors(sigma.iter().map(|&i| v[i].clone()).collect()),
            Output::Tensors(t) => Output::Tensors(sigma.iter().map(|&i| t[i].clone()).collect()),
        })
    }

    /// The output law applied to `self` for element `g`.
    fn act(&self, g: &GroupElement, law: OutputLaw, per_slot: bool) -> Result<Output> {
        if let GroupElement::Permutation { sigma } = g {
            return if per_slot { self.permuted(sigma) } else { Ok(self.clone()) };
        }
        let linear = |v: &Vector| -> Result<Vector> {
            match g.linear() {
                Some(m) => m.mul_vec(v),
                None => Ok(v.clone()),
            }
        };
        let incompatible = || Error::InvalidArgument(format!("output kind does not fit the {law:?} law"));
        match (law, self) {
            (OutputLaw::ScalarInvariant, Output::Scalars(_)) => Ok(self.clone()),
            (OutputLaw::VectorEquivariant, Output::Vectors(vs)) => Ok(Output::Vectors(
                vs.iter()
                    .map(|v| {
                        let mut out = linear(v)?;
                        if let Some(w) = g.shift() {
                            out.axpy(1.0, w);
                        }
                        Ok(out)
                    })
                    .collect::<Result<_>>()?,
            )),
            (OutputLaw::VectorTranslationInvariant, Output::Vectors(vs)) => {
                Ok(Output::Vectors(vs.iter().map(linear).collect::<Result<_>>()?))
            }
            (OutputLaw::PseudoVector, Output::Vectors(vs)) => {
                let det = g.orientation();
                Ok(Output::Vectors(vs.iter().map(|v| Ok(linear(v)?.scale(det))).collect::<Result<_>>()?))
            }
            (OutputLaw::TensorEquivariant, Output::Tensors(ts)) => Ok(Output::Tensors(
                ts.iter().map(|t| g.linear().map_or_else(|| Ok(t.clone()), |m| t.transform(m))).collect::<Result<_>>()?,
            )),
            (OutputLaw::TensorEquivariant, Output::Vectors(vs)) => {
                Ok(Output::Vectors(vs.iter().map(linear).collect::<Result<_>>()?))
            }
            _ => Err(incompatible()),
        }
    }
}

/// A function under test.
pub trait Target: Sync {
    fn call(&self, input: &Input) -> Result<Output>;
}

impl<F> Target for F
where
    F: Fn(&Input) -> Result<Output> + Sync,
{
    fn call(&self, input: &Input) -> Result<Output> {
        self(input)
    }
}

/// Per-component statistics (components are split by `det` of the linear
/// part).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub trials: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub residual: f64,
    pub input: Input,
    pub elements: Vec<GroupElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub trial: usize,
    pub message: String,
    pub input: Input,
    pub elements: Vec<GroupElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub trials: usize,
    /// Over trials that evaluated successfully.
    pub max_residual: f64,
    pub mean_residual: f64,
    pub worst: Option<TrialRecord>,
    pub components: BTreeMap<String, ComponentStats>,
    pub failures: Vec<FailureRecord>,
}

impl CertReport {
    /// No failed evaluations and every residual within `tolerance`.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.failures.is_empty() && self.max_residual <= tolerance
    }

    /// Statistics for `"det=+1"` or `"det=-1"`.
    pub fn component(&self, name: &str) -> Option<&ComponentStats> {
        self.components.get(name)
    }
}

/// Certifies one symmetry.
pub fn certify(target: &dyn Target, spec: &SymmetrySpec, trials: usize, rng: &RngState) -> Result<CertReport> {
    certify_joint(target, std::slice::from_ref(spec), trials, rng)
}

fn stage(family: GroupFamily) -> u8 {
    match family {
        GroupFamily::Permutation => 0,
        GroupFamily::Translation => 1,
        _ => 2,
    }
}

/// Certifies several symmetries at once: each trial samples one element per
/// spec and applies them in the order permutation, translation, linear.
/// Specs must share their layout and output law.
pub fn certify_joint(target: &dyn Target, specs: &[SymmetrySpec], trials: usize, rng: &RngState) -> Result<CertReport> {
    run(target, specs, None, trials, rng)
}

/// Like [`certify_joint`], but every trial acts on the given input instead
/// of a sampled one.
pub fn certify_at(
    target: &dyn Target,
    specs: &[SymmetrySpec],
    input: &Input,
    trials: usize,
    rng: &RngState,
) -> Result<CertReport> {
    run(target, specs, Some(input), trials, rng)
}

fn run(
    target: &dyn Target,
    specs: &[SymmetrySpec],
    fixed: Option<&Input>,
    trials: usize,
    rng: &RngState,
) -> Result<CertReport> {
    let Some(first) = specs.first() else {
        return Err(Error::Empty("symmetry specs"));
    };
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    for spec in specs {
        spec.validate()?;
        if !spec.same_layout(first) {
            return Err(Error::InvalidArgument("joint specs must share dim, slots, layout and output".into()));
        }
    }
    if let Some(input) = fixed {
        let matches = input.slots.len() == first.slots
            && input.layout == first.layout
            && input.slots.iter().all(|s| {
                s.vectors.len() == first.layout.len()
                    && s.scalars.len() == first.scalars.len()
                    && s.vectors.iter().all(|v| v.dim() == first.dim)
            });
        if !matches {
            return Err(Error::InvalidArgument("input does not match the symmetry layout".into()));
        }
    }
    let mut ordered: Vec<&SymmetrySpec> = specs.iter().collect();
    ordered.sort_by_key(|s| stage(s.family));
    let lorentzian = specs.iter().any(|s| matches!(s.family, GroupFamily::Lorentz | GroupFamily::Poincare));

    let outcomes: Vec<(String, std::result::Result<TrialRecord, FailureRecord>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng.split(trial as u64);
            let input = match fixed {
                Some(input) => input.clone(),
                None => Input::sample(first, lorentzian && trial % 2 == 1, &mut rng),
            };
            let mut elements = Vec::with_capacity(ordered.len());
            for spec in &ordered {
                let size = if spec.family == GroupFamily::Permutation { spec.slots } else { spec.dim };
                match group::sample(spec.family, size, spec.rapidity_max, &mut rng) {
                    Ok(g) => elements.push(g),
                    Err(e) => {
                        let fail = FailureRecord { trial, message: e.to_string(), input, elements };
                        return ("sampling".to_string(), Err(fail));
                    }
                }
            }
            let det: f64 = elements.iter().map(GroupElement::orientation).product();
            let component = if det < 0.0 { "det=-1" } else { "det=+1" }.to_string();
            match run_trial(target, first, &input, &elements) {
                Ok(residual) => (component, Ok(TrialRecord { trial, residual, input, elements })),
                Err(e) => (component, Err(FailureRecord { trial, message: e.to_string(), input, elements })),
            }
        })
        .collect();

    let mut report = CertReport {
        trials,
        max_residual: 0.0,
        mean_residual: 0.0,
        worst: None,
        components: BTreeMap::new(),
        failures: Vec::new(),
    };
    let mut sum = 0.0;
    let mut ok = 0usize;
    for (component, outcome) in outcomes {
        let stats = report.components.entry(component).or_default();
        stats.trials += 1;
        match outcome {
            Ok(record) => {
                ok += 1;
                sum += record.residual;
                stats.mean_residual += record.residual;
                stats.max_residual = stats.max_residual.max(record.residual);
                if report.worst.as_ref().is_none_or(|w| record.residual > w.residual) {
                    report.max_residual = record.residual;
                    report.worst = Some(record);
                }
            }
            Err(failure) => {
                stats.failures += 1;
                report.failures.push(failure);
            }
        }
    }
    for stats in report.components.values_mut() {
        let evaluated = stats.trials - stats.failures;
        if evaluated > 0 {
            stats.mean_residual /= evaluated as f64;
        }
    }
    if ok > 0 {
        report.mean_residual = sum / ok as f64;
    }
    Ok(report)
}

fn run_trial(target: &dyn Target, spec: &SymmetrySpec, input: &Input, elements: &[GroupElement]) -> Result<f64> {
    let base = target.call(input)?;
    let mut moved = input.clone();
    let mut expected = base.clone();
    // the original entries, reordered only, give the normalizers
    let mut reference = base.clone();
    for g in elements {
        moved = moved.act(g)?;
        expected = expected.act(g, spec.output, spec.per_slot)?;
        if let (GroupElement::Permutation { sigma }, true) = (g, spec.per_slot) {
            reference = reference.permuted(sigma)?;
        }
    }
    let got = target.call(&moved)?;
    if got.len() != expected.len() {
        return Err(Error::InvalidArgument(format!(
            "output length changed from {} to {} under the group action",
            expected.len(),
            got.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for k in 0..got.len() {
        let r = got.entry_distance(&expected, k)? / (1.0 + reference.entry_norm(k));
        if r.is_nan() {
            return Err(Error::NonFinite("residual"));
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Ready-made targets.
pub mod targets {
    use super::*;

    /// Gram matrix entries of all vectors, row-major.
    pub fn gram_entries(metric_kind: crate::tuple::MetricKind) -> impl Target {
        move |input: &Input| {
            let x = input.tuple()?;
            let metric = Metric { kind: metric_kind, dim: x.dim() };
            Ok(Output::Scalars(gram(&metric, &x)?.data().to_vec()))
        }
    }

    /// Total energy of the particles in each slot.
    pub fn energy(g: f64) -> impl Target {
        move |input: &Input| Ok(Output::Scalars(vec![total_energy(&input.particles()?, g)?]))
    }

    /// Per-particle electromagnetic forces.
    pub fn em_force(k: f64, c: f64, form: ForceForm) -> impl Target {
        move |input: &Input| Ok(Output::Vectors(em_forces(&input.particles()?, k, c, form)?))
    }

    /// An equivariant basis model applied to all vectors of the input.
    pub fn equivariant_model(model: EquivariantModel) -> impl Target {
        move |input: &Input| Ok(Output::Vectors(vec![basis::evaluate(&model, &input.tuple()?)?]))
    }

    /// Per-particle network predictions.
    pub fn mpnn(model: MpnnModel) -> impl Target {
        move |input: &Input| Ok(Output::Vectors(model.predict(&input.particles()?)?))
    }

    /// An index expression whose tensor names bind, in order of first
    /// appearance, to the first vector of successive slots.
    pub fn einsum(expr: IndexExpr, metric_kind: crate::tuple::MetricKind) -> impl Target {
        move |input: &Input| {
            let names = expr.tensor_names();
            if names.len() > input.slots.len() {
                return Err(Error::InvalidArgument(format!(
                    "expression names {} tensors but the input has {} slots",
                    names.len(),
                    input.slots.len()
                )));
            }
            let bindings: BTreeMap<String, Tensor> =
                names.iter().zip(&input.slots).map(|(n, s)| (n.to_string(), Tensor::from(&s.vectors[0]))).collect();
            let dim = input.slots[0].vectors[0].dim();
            let out = einsum::evaluate(&expr, &bindings, &Metric { kind: metric_kind, dim })?;
            Ok(match out.order() {
                0 => Output::Scalars(vec![out.data()[0]]),
                1 => Output::Vectors(vec![Vector::new(out.data().to_vec())?]),
                _ => Output::Tensors(vec![out]),
            })
        }
    }
}

/// Wraps a target with a deliberate symmetry violation of relative size
/// `epsilon`, for calibrating the certifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plant {
    /// Adds `epsilon (1 + |f|)` along a fixed coordinate axis.
    FixedAxis,
    /// Scales slot `k`'s output by `1 + epsilon k`.
    SlotWeight,
    /// Adds `epsilon (1 + |f|)` times the raw first position along axis 0,
    /// which moves under translations.
    TranslationLeak,
}

pub fn planted<'a>(inner: &'a dyn Target, plant: Plant, epsilon: f64) -> impl Target + 'a {
    move |input: &Input| {
        let out = inner.call(input)?;
        let size = |o: &Output| (0..o.len()).map(|k| o.entry_norm(k)).fold(0.0, f64::max);
        let scale = epsilon * (1.0 + size(&out));
        Ok(match (plant, out) {
            (Plant::FixedAxis, Output::Scalars(mut s)) => {
                let leak = input.slots[0].vectors[0].as_slice()[0];
                s.iter_mut().for_each(|x| *x += scale * leak);
                Output::Scalars(s)
            }
            (Plant::FixedAxis, Output::Vectors(mut v)) => {
                let axis = Vector::basis(v[0].dim(), 0);
                v.iter_mut().for_each(|x| x.axpy(scale, &axis));
                Output::Vectors(v)
            }
            (Plant::SlotWeight, Output::Vectors(v)) => {
                Output::Vectors(v.iter().enumerate().map(|(k, x)| x.scale(1.0 + epsilon * k as f64)).collect())
            }
            (Plant::SlotWeight, Output::Scalars(s)) => {
                Output::Scalars(s.iter().enumerate().map(|(k, x)| x * (1.0 + epsilon * k as f64)).collect())
            }
            (Plant::TranslationLeak, Output::Vectors(mut v)) => {
                let leak = input.slots[0].vectors[0].as_slice()[0];
                let axis = Vector::basis(v[0].dim(), 0);
                v.iter_mut().for_each(|x| x.axpy(scale * leak, &axis));
                Output::Vectors(v)
            }
            (Plant::TranslationLeak, Output::Scalars(mut s)) => {
                let leak = input.slots[0].vectors[0].as_slice()[0];
                s.iter_mut().for_each(|x| *x += scale * leak);
                Output::Scalars(s)
            }
            (_, Output::Tensors(_)) => return Err(Error::Unsupported("planted violations on tensor outputs".into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::basis::{fixture, TranslationMode};
    use crate::tuple::MetricKind;

    fn rng() -> RngState {
        RngState::new(17)
    }

    #[test]
    fn gram_is_certified_invariant() {
        let target = targets::gram_entries(MetricKind::Euclidean);
        for d in [2, 3, 5] {
            let spec = SymmetrySpec::new(GroupFamily::Orthogonal, d, 4, OutputLaw::ScalarInvariant);
            let report = certify(&target, &spec, 1000, &rng()).unwrap();
            assert!(report.passed(1e-9), "d={d}: {}", report.max_residual);
            assert_eq!(report.trials, 1000);
        }
    }

    #[test]
    fn unrotated_output_fails() {
        // returns the first input vector as it was before any action
        let target = |input: &Input| {
            let d = input.slots[0].vectors[0].dim();
            Ok(Output::Vectors(vec![Vector::basis(d, 0).scale(input.slots[0].vectors[0].norm())]))
        };
        let spec = SymmetrySpec::new(GroupFamily::Orthogonal, 3, 2, OutputLaw::VectorEquivariant);
        let report = certify(&target, &spec, 200, &rng()).unwrap();
        assert!(report.max_residual > 0.1);
        assert!(!report.passed(1e-9));
        let worst = report.worst.as_ref().unwrap();
        assert_eq!(worst.residual, report.max_residual);
    }

    #[test]
    fn pure_cross_term_splits_by_orientation() {
        let model = EquivariantModel::new(GroupFamily::Rotation, 3, fixture("cross-only").unwrap(), TranslationMode::Invariant)
            .unwrap();
        let target = targets::equivariant_model(model);
        let spec = SymmetrySpec::new(GroupFamily::Orthogonal, 3, 3, OutputLaw::VectorEquivariant);
        let report = certify(&target, &spec, 400, &rng()).unwrap();
        assert!(report.component("det=+1").unwrap().max_residual <= 1e-9);
        assert!(report.component("det=-1").unwrap().max_residual >= 0.1);
        // as a pseudo-vector it is certified on both components
        let spec = SymmetrySpec { output: OutputLaw::PseudoVector, ..spec };
        assert!(certify(&target, &spec, 400, &rng()).unwrap().passed(1e-9));
    }

    #[test]
    fn errors_become_failures_with_inputs() {
        let target = |input: &Input| {
            if input.slots[0].vectors[0].as_slice()[0] > 0.0 {
                Err(Error::InvalidArgument("planted failure".into()))
            } else {
                Ok(Output::Scalars(vec![input.slots[0].vectors[0].norm()]))
            }
        };
        let spec = SymmetrySpec::new(GroupFamily::Orthogonal, 2, 1, OutputLaw::ScalarInvariant);
        let report = certify(&target, &spec, 100, &rng()).unwrap();
        assert!(!report.failures.is_empty());
        assert!(report.failures.len() < 100);
        assert!(!report.passed(1.0));
        for f in &report.failures {
            assert!(f.message.contains("planted failure"));
            assert_eq!(f.input.slots.len(), 1);
        }
        let counted: usize = report.components.values().map(|c| c.failures).sum();
        assert_eq!(counted, report.failures.len());
    }

    #[test]
    fn reports_are_deterministic() {
        let target = targets::em_force(1.0, 1.0, ForceForm::Scalar);
        let spec = SymmetrySpec::particles(GroupFamily::Euclidean, 3, 4, OutputLaw::VectorTranslationInvariant, true);
        let a = certify(&target, &spec, 50, &rng()).unwrap();
        let b = certify(&target, &spec, 50, &rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn physics_passes_joint_specs() {
        let forces = targets::em_force(1.0, 1.0, ForceForm::Scalar);
        let specs: Vec<SymmetrySpec> = [GroupFamily::Orthogonal, GroupFamily::Translation, GroupFamily::Permutation]
            .into_iter()
            .map(|f| SymmetrySpec::particles(f, 3, 5, OutputLaw::VectorTranslationInvariant, true))
            .collect();
        let report = certify_joint(&forces, &specs, 300, &rng()).unwrap();
        assert!(report.passed(1e-9), "{}", report.max_residual);

        let energy = targets::energy(1.0);
        let specs: Vec<SymmetrySpec> =
            specs.iter().map(|s| SymmetrySpec { output: OutputLaw::ScalarInvariant, per_slot: false, ..s.clone() }).collect();
        assert!(certify_joint(&energy, &specs, 300, &rng()).unwrap().passed(1e-9));
    }

    #[test]
    fn forgetting_per_slot_is_caught() {
        let forces = targets::em_force(1.0, 1.0, ForceForm::Scalar);
        let spec = SymmetrySpec::particles(GroupFamily::Permutation, 3, 4, OutputLaw::VectorTranslationInvariant, false);
        assert!(certify(&forces, &spec, 50, &rng()).unwrap().max_residual > 1e-3);
    }

    #[test]
    fn lorentz_gram_with_near_lightlike_inputs() {
        let target = targets::gram_entries(MetricKind::Minkowski);
        let spec = SymmetrySpec::new(GroupFamily::Lorentz, 4, 3, OutputLaw::ScalarInvariant);
        let report = certify(&target, &spec, 500, &rng()).unwrap();
        assert!(report.passed(1e-8), "{}", report.max_residual);
        // the Euclidean Gram is not Lorentz invariant
        let target = targets::gram_entries(MetricKind::Euclidean);
        assert!(certify(&target, &spec, 100, &rng()).unwrap().max_residual > 1e-3);
    }

    #[test]
    fn poincare_position_output_moves_with_translation() {
        let model = EquivariantModel::new(
            GroupFamily::Poincare,
            4,
            Arc::clone(&fixture("uniform").unwrap()),
            TranslationMode::Equivariant,
        )
        .unwrap();
        let target = targets::equivariant_model(model);
        let spec = SymmetrySpec::new(GroupFamily::Poincare, 4, 3, OutputLaw::VectorEquivariant)
            .with_layout(vec![Role::Position]);
        let report = certify(&target, &spec, 300, &rng()).unwrap();
        assert!(report.passed(1e-8), "{}", report.max_residual);
    }

    #[test]
    fn einsum_target_tensor_law() {
        let expr = crate::einsum::parse("u_i v_j").unwrap();
        let target = targets::einsum(expr, MetricKind::Euclidean);
        let spec = SymmetrySpec::new(GroupFamily::Orthogonal, 3, 2, OutputLaw::TensorEquivariant);
        assert!(certify(&target, &spec, 200, &rng()).unwrap().passed(1e-9));
    }

    #[test]
    fn incompatible_joint_specs_are_rejected() {
        let target = targets::gram_entries(MetricKind::Euclidean);
        let a = SymmetrySpec::new(GroupFamily::Orthogonal, 3, 2, OutputLaw::ScalarInvariant);
        let b = SymmetrySpec::new(GroupFamily::Permutation, 3, 3, OutputLaw::ScalarInvariant);
        assert!(matches!(certify_joint(&target, &[a.clone(), b], 10, &rng()), Err(Error::InvalidArgument(_))));
        assert!(matches!(certify(&target, &a, 0, &rng()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fixed_input_certification() {
        let particles = vec![
            Particle::new(1.0, 1.0, Vector::from_raw(vec![0.0, 0.0, 0.0]), Vector::from_raw(vec![0.1, 0.0, 0.0])).unwrap(),
            Particle::new(2.0, -1.0, Vector::from_raw(vec![1.0, 0.5, 0.0]), Vector::from_raw(vec![0.0, 0.2, 0.0])).unwrap(),
            Particle::new(1.0, 1.0, Vector::from_raw(vec![0.0, 1.0, -1.0]), Vector::from_raw(vec![0.0, 0.0, 0.3])).unwrap(),
        ];
        let input = Input::from_particles(&particles);
        assert_eq!(input.particles().unwrap(), particles);
        let spec = SymmetrySpec::particles(GroupFamily::Euclidean, 3, 3, OutputLaw::VectorTranslationInvariant, true);
        let forces = targets::em_force(1.0, 1.0, ForceForm::Scalar);
        let report = certify_at(&forces, std::slice::from_ref(&spec), &input, 100, &rng()).unwrap();
        assert!(report.passed(1e-9));
        assert!(report.worst.unwrap().input == input);
        let wrong = SymmetrySpec { slots: 4, ..spec };
        assert!(certify_at(&forces, &[wrong], &input, 10, &rng()).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SymmetrySpec =
            serde_json::from_str(r#"{"family":"rotation","dim":3,"slots":2,"output":"pseudo-vector"}"#).unwrap();
        assert_eq!(spec, SymmetrySpec::new(GroupFamily::Rotation, 3, 2, OutputLaw::PseudoVector));
    }
}
