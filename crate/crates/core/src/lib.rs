//! Numerical laboratory for differential inclusions into quasiconformal
//! envelopes in the plane.
//!
//! The crate builds the objects involved at desk scale (target sets Γ and
//! their envelopes, Beltrami coefficients, Monge–Ampère solutions, the Minty
//! transform, Muckenhoupt weights) and checks the identities, inclusions and
//! inequalities that connect them.

pub mod error;
pub mod field;
pub mod gamma;
pub mod matalg;
pub mod minty;
pub mod mongeampere;
pub mod weights;

pub use error::{Error, Result};
pub use matalg::{ConformalCoords, Mat2, SymSpectrum};
