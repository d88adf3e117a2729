//! Boundary-integral spectral solver for Dirac operators with electrostatic and
//! Lorentz-scalar δ-shell interactions on closed surfaces.

pub mod assembly;
pub mod dirac;
pub mod error;
pub mod linalg;
pub mod oracles;
pub mod quadrature;
pub mod search;
pub mod spectral;
pub mod surface;
pub mod verify;

pub use error::{Error, Result};
pub use faer::c64;
