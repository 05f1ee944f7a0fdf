//! Interpolatory and H2-optimal model reduction for linear systems with
//! function-valued inputs and outputs.
//!
//! The full-order system is the Dirichlet heat equation on the unit square,
//! controlled on one rectangular patch and observed on another. Reduced models
//! come from three routes that are checked against each other:
//!
//! * [`loewner::assemble`] builds `(E_r, A_r, B_r, C_r)` from tangential samples only;
//! * [`projection_oracle::project_explicit`] builds the same pencil by Petrov–Galerkin projection in modal coordinates;
//! * [`irka::run`] iterates interpolation at mirrored reduced poles toward H2 optimality.

pub mod error;
pub mod expint;
pub mod funcspace;
pub mod h2;
pub mod heat2d;
pub mod irka;
pub mod linalg;
pub mod loewner;
pub mod projection_oracle;
pub mod rom;
pub mod samples;
pub mod system;
pub mod timeseries;

pub use error::{MorError, Result};
pub use funcspace::{FunctionVector, Patch, QuadratureGrid};
pub use heat2d::{FullModel, HeatConfig};
pub use rom::{PoleResidue, ReducedModel};
pub use samples::TangentialDataset;
pub use system::TransferFunction;
pub use timeseries::TimeSeries;

pub use num_complex::Complex64;
