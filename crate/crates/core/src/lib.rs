//! Equivariant functions of vector tuples built from invariant scalars.
//!
//! Any function that is equivariant under O(d), SO(d), the Lorentz group or
//! their translation/permutation extensions can be written as a sum of the
//! input vectors weighted by invariant scalar functions. This crate provides
//! the pieces: group sampling, invariant features, the equivariant basis,
//! worked physics targets, an index-expression checker, a scalars-only
//! message passing network, and a randomized equivariance certifier.

pub mod basis;
pub mod einsum;
pub mod error;
pub mod features;
pub mod group;
pub mod harness;
pub mod linalg;
pub mod mpnn;
pub mod physics;
pub mod rng;
pub mod tolerance;
pub mod tuple;

pub use error::{Error, Result};
pub use features::{
    cholesky_reconstruct, gram, lorentz_orthogonalize, omega_complete, omega_sample, subdeterminants,
    translation_reduce, Completion, FeatureFile, FeatureOptions, LorentzBasis, OmegaEntry, OmegaSample, PivotRule,
    ScalarFeatureSet, Subdeterminant,
};
pub use group::{GroupElement, GroupFamily};
pub use harness::{certify, certify_at, certify_joint, CertReport, OutputLaw, SymmetrySpec};
pub use linalg::{Mat, Vector};
pub use rng::RngState;
pub use tuple::{inner, Metric, MetricKind, Role, VectorTuple};
