//! Numerical laboratory for semiclassical Schrödinger operators `P(h) = -h²Δ_G + V`
//! on 1-D and 2-D tensor grids.
//!
//! The crate measures, at desk scale, how much mass an `O(e^{-β/h})`-accurate
//! quasimode must leave in a given interior window or push through a boundary
//! component, and builds the weighted-operator machinery (exponential weights,
//! bracket certificates, Morse weight functions) that explains those rates.
//!
//! Module map:
//! - [`field`]: analytic scalar/metric fields with exact gradients and Hessians;
//! - [`grid`]: tensor-product grids, quadrature, subregions, boundary pieces;
//! - [`operator`]: flux-form finite-difference assembly of `P` and of the
//!   weight-conjugated operator `P_φ`, norms, traces, commutators;
//! - [`eigen`]: symmetric eigensolver (dense below a size threshold,
//!   shift-invert Lanczos above it);
//! - [`quasimode`]: Agmon distances, cutoff quasimodes, precision checks;
//! - [`carleman`]: conjugated-symbol brackets, weight certificates, Morse
//!   weight construction/relocation, and the weighted-estimate falsification test;
//! - [`rates`]: h-sweeps, exponential rate fits, verdicts, Rellich flux checks;
//! - [`zonal`]: closed-form spherical-cap rate laboratory (log-domain).

pub mod carleman;
pub mod eigen;
pub mod error;
pub mod field;
pub mod grid;
pub mod operator;
pub mod quasimode;
pub mod rates;
pub mod zonal;

pub use error::QmError;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, QmError>;
