//! Constructs the momentum-space mass-shell representation of truncated
//! correlation functions for Euclidean covariant vector models whose
//! covariance is a rational function of |k|^2 with a positive mass spectrum,
//! cross-validates it against directly computed Euclidean convolution
//! integrals, and evaluates and diagnoses the scattering amplitudes of the
//! associated relativistic theory.
//!
//! Modules follow the pipeline:
//! - [`spectrum`]: mass spectrum and partial-fraction coefficients
//! - [`polyalg`]: momentum polynomials, covariance, Wick rotation, tensors
//! - [`green`]: position-space kernels and convolution integrals
//! - [`wightman`]: structured mass-shell terms and the Fourier-Laplace check
//! - [`scattering`]: wave packets, finite-time overlaps, amplitudes, and
//!   polynomial-divergence scans

pub mod dd;
pub mod error;
pub mod green;
pub mod polyalg;
pub mod quad;
pub mod scattering;
pub mod special;
pub mod spectrum;
pub mod wightman;

pub use error::{GreenError, PolyError, ScatteringError, SpectrumError, WightmanError};
