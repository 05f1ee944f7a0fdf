use std::sync::Arc;

use num_complex::Complex64;

use crate::error::Result;
use crate::funcspace::{FunctionVector, QuadratureGrid};

/// An operator-valued transfer function `G(s): U -> Y` between two
/// discretized L2 spaces.
///
/// Implemented by the full heat model, reduced pencils and pole-residue sums,
/// so that sampling, error functionals and the fixed-point iteration can run
/// against any of them.
pub trait TransferFunction: Sync {
    fn input_grid(&self) -> &Arc<QuadratureGrid>;

    fn output_grid(&self) -> &Arc<QuadratureGrid>;

    /// `G(s)[p]`
    fn apply(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector>;

    /// `G(s)^dagger[q]`, the Hilbert adjoint.
    fn apply_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector>;

    /// `dG/ds(s)[p]`
    fn apply_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector>;

    /// Squared Hilbert–Schmidt norm of `G(s)`.
    fn hs_norm_squared(&self, s: Complex64) -> Result<f64>;

    /// Squared H2 norm from a closed form (no frequency quadrature).
    fn h2_norm_squared_closed(&self) -> Result<f64>;

    /// Characteristic frequency used to scale the imaginary-axis quadrature.
    fn frequency_scale(&self) -> f64;
}
