//! Exact p-adic model of the symmetric space U(2n)/U(n)×U(n), its relative
//! endoscopy, and lattice-counting evaluation of unit orbital integrals.

pub mod dynamics;
pub mod endoscopy;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod matalg;
pub mod orbital;
pub mod padic;
pub mod symspace;

pub use error::{Error, Result};
pub use padic::{EScalar, FScalar, PrecisionContext};
