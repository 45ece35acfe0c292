//! Numerical laboratory for one-dimensional aggregation equations with
//! nonlocal attraction and power-law nonlinear diffusion,
//!
//! ```text
//!   ∂ₜρ = ∂ₓ( ρ ∂ₓ( ν ρ^{m-1} - G∗ρ ) ).
//! ```
//!
//! The crate computes compactly supported equilibria by an eigenvalue
//! iteration ([`steady`]), evaluates semi-analytic and limiting profiles
//! ([`closed_form`]), evolves the PDE with a positivity-preserving,
//! energy-dissipating finite-volume scheme ([`evolution`]), simulates the
//! underlying particle system ([`particles`]) and measures energies,
//! dissipation and metastable plateaus ([`diagnostics`]).

pub mod closed_form;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod particles;
pub mod presets;
pub mod quadrature;
pub mod runner;
pub mod steady;

pub use error::{LabError, Result};
pub use grid::{Grid, GridFunction, Layout};
pub use kernels::{AttractionKernel, Kernel};
