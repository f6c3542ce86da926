//! Scalars-only message passing network for charged n-body forces, and a
//! learned coefficient function for the equivariant basis.

pub mod data;
pub mod model;
pub mod net;
pub mod train;

use serde::{Deserialize, Serialize};

pub use data::{generate_dataset, Dataset, Sample};
pub use model::{
    edge_features, squared_error, EdgeChannels, EdgeFeatures, ForwardTrace, MessageMode, MpnnConfig, MpnnLayer,
    MpnnModel, RadialBasis, Readout,
};
pub use net::{Activation, ScalarNet};
pub use train::{run_experiment, train, EpochRow, TrainConfig, TrainingOutcome, TrainingReport};

use crate::basis::{CoefficientFn, CoefficientSpec, Coefficients};
use crate::error::Result;
use crate::features::ScalarFeatureSet;
use crate::rng::RngState;

/// Per-slot descriptor width used by [`LearnedScalarNet`].
pub const SLOT_DESCRIPTOR_WIDTH: usize = 4;

/// A scalar network applied to each slot's pooled Gram descriptor
/// `(M_tt, sum_j M_tj, sum_j M_tj^2, sum_j M_jj)` over `j != t`. The pooling
/// makes the coefficients permutation symmetric for any tuple length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedScalarNet {
    pub net: ScalarNet,
}

impl LearnedScalarNet {
    pub fn random(hidden: &[usize], activation: Activation, rng: &mut RngState) -> Self {
        Self { net: ScalarNet::random(SLOT_DESCRIPTOR_WIDTH, hidden, activation, 1.0, rng) }
    }

    pub fn descriptor(features: &ScalarFeatureSet, t: usize) -> [f64; SLOT_DESCRIPTOR_WIDTH] {
        let m = &features.gram;
        let mut d = [m[(t, t)], 0.0, 0.0, 0.0];
        for j in (0..m.rows()).filter(|&j| j != t) {
            d[1] += m[(t, j)];
            d[2] += m[(t, j)] * m[(t, j)];
            d[3] += m[(j, j)];
        }
        d
    }
}

impl CoefficientFn for LearnedScalarNet {
    fn evaluate(&self, features: &ScalarFeatureSet) -> Result<Coefficients> {
        let vector = (0..features.len())
            .map(|t| self.net.forward(&Self::descriptor(features, t)))
            .collect::<Result<_>>()?;
        Ok(Coefficients { vector, cross: Vec::new() })
    }

    fn permutation_symmetric(&self) -> bool {
        true
    }

    fn describe(&self) -> CoefficientSpec {
        CoefficientSpec::Learned { net: self.clone() }
    }
}
