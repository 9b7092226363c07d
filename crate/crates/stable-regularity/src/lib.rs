//! Finite, checkable machinery around stability of bounded functions on
//! bipartite domains: half-graph witness search, exact homogeneity checking,
//! homogeneous-partition search, constructive equipartition refinement, the
//! structured/pseudorandom/error decomposition, rectangle-pseudorandomness
//! measurement, and seeded generators of test corpora.
//!
//! All core types are immutable after construction; no operation mutates its
//! inputs, and everything is safe to share across threads read-only.

pub mod decay;
pub mod decomposition;
pub mod definable;
pub mod error;
pub mod generators;
pub mod homogeneity;
pub mod io;
pub mod matrix;
pub mod norms;
pub mod num_util;
pub mod params;
pub mod partition;
pub mod stability;
pub mod witness;

pub use decay::DecayFn;
pub use error::{Error, Result};
pub use matrix::{Range, ValueMatrix};
pub use params::Params;
pub use witness::{HalfGraphWitness, HomogeneityWitness, WitnessKind};
