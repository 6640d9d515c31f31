//! Wasserstein barycenters on pixel grids, constrained to a prior manifold by
//! ADMM, and the tools to build and score image morphs with them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below pin the common choices.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod barycenter;
pub mod error;
pub mod exact;
pub mod io;
mod kernel;
pub mod measure;
pub mod morph;
pub mod priors;
pub mod scalar;
pub mod transport;

pub use admm::{constrained_barycenter, resume, AdmmConfig, AdmmState};
pub use barycenter::{entropic_barycenter, prox_barycenter_step, BarycenterWeights, ProxTerm};
pub use error::{Error, Result};
pub use exact::exact_lp_transport;
pub use measure::{normalize_to_measure, GridMeasure, GridShape, GroundCost};
pub use morph::{evaluate, morph, morph4, MorphMethod, MorphSequence, TransitionReport};
pub use priors::{
    learn_dictionary, omp, project_external, project_sparse, Dictionary, ExternalProjector,
    Projector, SparseCode,
};
pub use scalar::Scalar;
pub use transport::{
    barycentric_displacement, sinkhorn, DualPotentials, SinkhornMode, SinkhornOptions,
    SymmetricResult, TransportResult, TransportSolver,
};

pub type GridMeasure64 = GridMeasure<f64>;
pub type GridMeasure32 = GridMeasure<f32>;
pub type GroundCost64 = GroundCost<f64>;
pub type GroundCost32 = GroundCost<f32>;
pub type Dictionary64 = Dictionary<f64>;
pub type Dictionary32 = Dictionary<f32>;
pub type Projector64 = Projector<f64>;
pub type Projector32 = Projector<f32>;
pub type AdmmConfig64 = AdmmConfig<f64>;
pub type AdmmConfig32 = AdmmConfig<f32>;
pub type MorphSequence64 = MorphSequence<f64>;
pub type MorphSequence32 = MorphSequence<f32>;
pub type TransitionReport64 = TransitionReport<f64>;
pub type TransitionReport32 = TransitionReport<f32>;
