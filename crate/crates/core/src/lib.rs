//! Planar optics of a vacuum / chiral-film / substrate stack and the
//! decoherence statistics of a fast electron passing above the film.
//!
//! The computational chain is
//!
//! 1. dispersive material models ε(E), κ(E) ([`materials`]),
//! 2. exact 2×2 reflection matrix of the stack with S–P mixing ([`slab`]),
//! 3. the reflected Green's-kernel combination Υ(E, k∥) ([`greens`]),
//! 4. the two-point interaction integrals Δ_S, Δ_A, the elastic phase Φ and
//!    their analytic derivative kernels ([`response`]),
//! 5. the electron decoherence factor γ and mirror-asymmetry degree
//!    ([`electron`]),
//! 6. measurable outputs: lateral-momentum and energy-loss distributions and
//!    moments ([`observables`]).
//!
//! All formulas are evaluated in (eV, nm) working units; see [`units`].

pub mod config;
pub mod electron;
pub mod greens;
pub mod materials;
pub mod observables;
pub mod oracles;
pub mod output;
pub mod quadrature;
pub mod response;
pub mod slab;
pub mod units;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge: {context} (best error estimate {error_estimate:.3e})")]
    QuadratureNonConvergence {
        context: String,
        error_estimate: f64,
    },
    #[error("singular 2x2 system: |det| = {det_magnitude:.3e} below guard at entry scale {entry_scale:.3e}")]
    SingularMatrix { det_magnitude: f64, entry_scale: f64 },
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    ConfigValidation(Vec<String>),
    #[error("configuration parse error: {0}")]
    ConfigParse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
