//! Spectral laboratory for the stability of Kolmogorov flow on a non-square torus.
//!
//! The crate is organised bottom-up: [`spectral`] holds the Fourier substrate,
//! [`operators`] realizes the operator algebra at fixed x-wavenumber as
//! truncated matrices, and the remaining modules build the numerical checks
//! on top of them.

pub mod coercivity;
pub mod dd;
pub mod dns;
pub mod error;
pub mod fft;
pub mod fit;
pub mod harness;
pub mod linalg;
pub mod linear_euler;
pub mod ode;
pub mod par;
pub mod quadrature;
pub mod quasilinear;
pub mod resolvent;
pub mod shear;
pub mod operators;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Field2D, ModeFunction, TorusGrid, C64};

#[cfg(test)]
pub(crate) mod testing;
