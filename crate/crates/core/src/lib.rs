//! Finsler-Laplace operators on surfaces.

pub mod error;
pub mod field;
pub mod hilbert;
pub mod jet;
pub mod katok_ziller;
pub mod laplace;
pub mod legendre;
pub mod measures;
pub mod metric;
pub mod quadrature;
pub mod randers;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
