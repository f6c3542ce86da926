//! Charged n-body force regression data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::physics::{em_forces, ForceForm, Particle, PhysConstants};
use crate::rng::RngState;

/// Minimum pairwise distance enforced by rejection sampling.
pub const MIN_SEPARATION: f64 = 0.1;
/// Attempts per sample before giving up.
pub const MAX_ATTEMPTS: usize = 10_000;
pub const VELOCITY_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub particles: Vec<Particle>,
    /// Force on each particle from all others.
    pub forces: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `train_count` samples and the rest.
    pub fn split(&self, train_count: usize) -> (Dataset, Dataset) {
        let k = train_count.min(self.len());
        (
            Dataset { samples: self.samples[..k].to_vec() },
            Dataset { samples: self.samples[k..].to_vec() },
        )
    }
}

/// Positions uniform in `[-1, 1]^3` with pairwise distance at least
/// [`MIN_SEPARATION`], Gaussian velocities, charges `+-1`; targets are the
/// scalar-form electromagnetic forces.
pub fn generate_dataset(rng: &mut RngState, n_particles: usize, n_samples: usize, constants: &PhysConstants) -> Result<Dataset> {
    if n_particles < 2 {
        return Err(Error::TooFewVectors { need: 2, have: n_particles });
    }
    constants.validate()?;
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let positions = sample_positions(rng, n_particles)?;
        let particles = positions
            .into_iter()
            .map(|position| {
                let velocity = Vector::new(rng.normals(3).into_iter().map(|x| VELOCITY_SIGMA * x).collect())?;
                let charge = if rng.coin() { 1.0 } else { -1.0 };
                Particle::new(1.0, charge, position, velocity)
            })
            .collect::<Result<Vec<_>>>()?;
        let forces = em_forces(&particles, constants.k, constants.c, ForceForm::Scalar)?;
        samples.push(Sample { particles, forces });
    }
    Ok(Dataset { samples })
}

fn sample_positions(rng: &mut RngState, n: usize) -> Result<Vec<Vector>> {
    for _ in 0..MAX_ATTEMPTS {
        let positions: Vec<Vector> = (0..n)
            .map(|_| Vector::new((0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()))
            .collect::<Result<_>>()?;
        let separated = (0..n).all(|i| (0..i).all(|j| (&positions[i] - &positions[j]).norm() >= MIN_SEPARATION));
        if separated {
            return Ok(positions);
        }
    }
    Err(Error::RejectionFailed { attempts: MAX_ATTEMPTS })
}
