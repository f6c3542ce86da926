//! Worked physical targets: Newtonian energy and the electromagnetic force
//! between moving charges, the latter in cross-product and scalar form.

use serde::{Deserialize, Serialize};

use crate::basis::generalized_cross;
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub charge: f64,
    pub position: Vector,
    pub velocity: Vector,
}

fn one() -> f64 {
    1.0
}

impl Particle {
    pub fn new(mass: f64, charge: f64, position: Vector, velocity: Vector) -> Result<Self> {
        if position.dim() != velocity.dim() {
            return Err(Error::DimensionMismatch { expected: position.dim(), found: velocity.dim() });
        }
        if !mass.is_finite() || !charge.is_finite() {
            return Err(Error::NonFinite("particle scalar"));
        }
        if mass <= 0.0 {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
        }
        Ok(Self { mass, charge, position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.dim()
    }

    fn validate(&self) -> Result<()> {
        Particle::new(self.mass, self.charge, self.position.clone(), self.velocity.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    #[serde(rename = "G", default = "one")]
    pub gravitational: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "one")]
    pub c: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self { gravitational: 1.0, k: 1.0, c: 1.0 }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("G", self.gravitational), ("k", self.k), ("c", self.c)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!("constant {name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Input file for the physics demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    #[serde(default)]
    pub constants: PhysConstants,
    pub particles: Vec<Particle>,
}

impl ParticleSystem {
    pub fn from_json(text: &str) -> Result<Self> {
        let system: ParticleSystem =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        system.constants.validate()?;
        if system.particles.is_empty() {
            return Err(Error::Empty("particle list"));
        }
        let dim = system.particles[0].dim();
        for p in &system.particles {
            p.validate()?;
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
        }
        Ok(system)
    }
}

fn separation(a: &Particle, b: &Particle, i: usize, j: usize) -> Result<(Vector, f64)> {
    let diff = &a.position - &b.position;
    let dist = diff.norm();
    if dist == 0.0 {
        return Err(Error::CoincidentPositions { i, j });
    }
    Ok((diff, dist))
}

/// Kinetic energy minus the gravitational double sum over ordered pairs,
/// `sum_i sum_{j != i} G m_i m_j / |r_i - r_j|`, so each unordered pair
/// contributes twice.
pub fn total_energy(particles: &[Particle], g: f64) -> Result<f64> {
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for (i, p) in particles.iter().enumerate() {
        kinetic += 0.5 * p.mass * p.velocity.norm_squared();
        for (j, q) in particles.iter().enumerate() {
            if i == j {
                continue;
            }
            let (_, dist) = separation(p, q, i, j)?;
            potential += g * p.mass * q.mass / dist;
        }
    }
    Ok(kinetic - potential)
}

fn check_three(test: &Particle, sources: &[Particle]) -> Result<()> {
    for p in std::iter::once(test).chain(sources) {
        if p.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, found: p.dim() });
        }
    }
    Ok(())
}

/// Force on `test` from `sources`, magnetic part written with nested
/// cross products `v x (v_i x (r - r_i))`.
pub fn em_force_cross(test: &Particle, sources: &[Particle], k: f64, c: f64) -> Result<Vector> {
    check_three(test, sources)?;
    let mut force = Vector::zeros(3);
    for (i, s) in sources.iter().enumerate() {
        let (diff, dist) = separation(test, s, usize::MAX, i)?;
        let strength = k * test.charge * s.charge / (dist * dist * dist);
        let inner = generalized_cross(&[s.velocity.clone(), diff.clone()])?;
        let magnetic = generalized_cross(&[test.velocity.clone(), inner])?;
        force.axpy(strength, &diff);
        force.axpy(strength / (c * c), &magnetic);
    }
    Ok(force)
}

/// The same force from inner products only:
/// `(1 - v.v_i/c^2)(r - r_i) + (v.(r - r_i)) v_i / c^2`, per source.
pub fn em_force_scalar(test: &Particle, sources: &[Particle], k: f64, c: f64) -> Result<Vector> {
    check_three(test, sources)?;
    let mut force = Vector::zeros(3);
    for (i, s) in sources.iter().enumerate() {
        let (diff, dist) = separation(test, s, usize::MAX, i)?;
        let strength = k * test.charge * s.charge / (dist * dist * dist);
        let c2 = c * c;
        force.axpy(strength * (1.0 - test.velocity.dot(&s.velocity) / c2), &diff);
        force.axpy(strength * test.velocity.dot(&diff) / c2, &s.velocity);
    }
    Ok(force)
}

/// Which expression of the electromagnetic force to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceForm {
    Cross,
    Scalar,
}

/// Force on every particle from all the others.
pub fn em_forces(particles: &[Particle], k: f64, c: f64, form: ForceForm) -> Result<Vec<Vector>> {
    (0..particles.len())
        .map(|i| {
            let others: Vec<Particle> =
                particles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p.clone()).collect();
            match form {
                ForceForm::Cross => em_force_cross(&particles[i], &others, k, c),
                ForceForm::Scalar => em_force_scalar(&particles[i], &others, k, c),
            }
            .map_err(|e| match e {
                Error::CoincidentPositions { j, .. } => {
                    Error::CoincidentPositions { i, j: if j >= i { j + 1 } else { j } }
                }
                other => other,
            })
        })
        .collect()
}

/// Max-norm of `a x (b x c) - ((a.c) b - (a.b) c)`.
pub fn triple_product_check(a: &Vector, b: &Vector, c: &Vector) -> Result<f64> {
    let lhs = generalized_cross(&[a.clone(), generalized_cross(&[b.clone(), c.clone()])?])?;
    let mut rhs = b.scale(a.dot(c));
    rhs.axpy(-a.dot(b), c);
    Ok((&lhs - &rhs).max_abs())
}
