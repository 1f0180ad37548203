//! Desk-scale laboratory for measuring and steering demographic bias in a
//! toy generative pipeline: a synthetic world with planted attribute rates,
//! a conditional diffusion model trained on it, association tests over its
//! embeddings, and sampling-time guidance that moves outcome proportions to
//! a chosen target.

pub mod audit;
pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod ieat;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod textio;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the shipped pipeline.
pub type Real = f64;
/// Dense matrix over the pipeline scalar.
pub type Tensor = tensor::Tensor2<Real>;
/// Network over the pipeline scalar.
pub type Network = mlp::Mlp<Real>;
/// Variance schedule over the pipeline scalar.
pub type Schedule = diffusion::NoiseSchedule<Real>;
