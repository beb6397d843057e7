//! Golden-mean circle homeomorphisms, their nonsingular Markov measures, and
//! the fibered maps of the two-torus built on top of them.

pub mod error;
pub mod numerics;
pub mod symbolic;
pub mod markov;
pub mod schedule;
pub mod homeo1d;
pub mod density;
pub mod anosov2d;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::{Backend, Dual, FieldElement, GoldenInt, HpFloat, Real, Scalar};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
