//! Damping-controller tuning for linearized power systems under uncertain
//! disturbance distributions.
//!
//! The crate is organised as a pipeline:
//!
//! * [`sslin`]: eigenanalysis, participation factors, residues, lead-lag
//!   controller realization, feedback interconnection and step responses.
//! * [`testbed`]: a single-machine infinite-bus plant whose critical-mode
//!   damping depends nonlinearly on the injected-power error `e`.
//! * [`sobol`]: Saltelli designs with first-order and Jansen total indices.
//! * [`pce`]: Hermite polynomial-chaos surrogates with analytic moments.
//! * [`dro`]: Wasserstein ambiguity sets and the DRDOC / SO / RO solvers.
//! * [`pipeline`]: file formats and the batch driver behind the `drdamp` binary.

pub mod dro;
pub mod error;
pub mod pce;
pub mod pipeline;
pub mod poly;
pub mod sobol;
pub mod sslin;
pub mod testbed;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Formats a float for CSV output with 17 significant digits.
pub fn fmt_csv_f64(x: f64) -> String {
    format!("{x:.16e}")
}
