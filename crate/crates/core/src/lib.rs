//! Local relaxation of bosonic lattice systems under quadratic hopping on a ring:
//! exact propagators, phase-space moments, rigorous bound evaluators, Gaussian reference
//! states, Fock-space reconstruction and a small-system exact oracle.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod phase_space;
pub mod propagator;
pub mod special;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
pub use propagator::C64;
