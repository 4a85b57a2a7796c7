//! Mean-field laboratory for log/Riesz interacting particle systems.
//!
//! The crate covers the interaction kernels, the self-similar change of
//! variables, thermal equilibria, grid solvers for the mean-field PDE,
//! particle ensembles and the modulated-energy functionals.

pub mod conv;
pub mod equilibrium;
pub mod error;
pub mod fft;
pub mod functionals;
pub mod fv;
pub mod grid;
pub mod kernels;
pub mod meanfield;
pub mod par;
pub mod particles;
pub mod quad;
pub mod radial;
pub mod transforms;

pub use error::{MfclError, Result};
pub use grid::{GridDensity, GridGeometry};
pub use kernels::{Drift, InteractionSpec};
