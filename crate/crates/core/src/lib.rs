//! Knowledge-graph embeddings that combine translational structure vectors
//! with encoded entity descriptions through learned per-entity gates.

pub mod config;
pub mod dataset;
pub mod diffmath;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod scalar;
pub mod trainer;

#[cfg(test)]
mod fixtures;

pub use dataset::{Dataset, EntityId, RelationId, Triple, WordId};
pub use encoders::EncoderKind;
pub use error::{Error, Result};
pub use model::{Dissimilarity, GateMode, JointModel, ModelConfig};
pub use scalar::Scalar;

pub use config::RunConfig;
pub use trainer::{train, TrainConfig};

/// The seeded generator used for initialisation, sampling and shuffling.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    <SeededRng as rand::SeedableRng>::seed_from_u64(seed)
}

pub type JointModel64 = JointModel<f64>;
pub type JointModel32 = JointModel<f32>;
