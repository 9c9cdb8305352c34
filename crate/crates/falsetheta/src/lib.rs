//! Higher-depth false theta functions, their bimodular completions, generalized
//! error functions, W-algebra vacuum characters, and SU(3) Z-hat invariants.
//!
//! The crate is organized around exact formal q-series (rational exponents,
//! rational or tagged-constant coefficients) for everything that can be done
//! exactly, and double-precision complex analysis for the completed objects
//! `psi-hat(tau, w)` that live on H x H. The main entry points:
//!
//! - [`qseries`]: eta, unary/lattice theta functions, false theta series.
//! - [`lattice`]: A_n root lattice data, Weyl groups, Kostant partition
//!   functions, point enumeration.
//! - [`generr`]: generalized error functions E_{Q,M} (real, boundary, and
//!   complex-scaled evaluation through the geodesic recursion).
//! - [`completion`]: the completed false theta function and its rescaled
//!   variant, covariant differential operators, transformation-law verifiers.
//! - [`families`]: the explicit depth 1/2/3 families on sqrt(p) A_n with
//!   boundary series, Eichler integral representations and A_2 modular data.
//! - [`characters`]: vacuum characters of W^0(p)_{A_n} for n = 1, 2, 3.
//! - [`zhat`]: SU(3) Z-hat invariants of Brieskorn spheres.

pub mod rat;

pub mod numerics;

pub mod lattice;

pub mod qseries;

pub mod generr;

pub mod completion;

pub mod families;

pub mod characters;

pub mod zhat;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("erf overflow: |Im z| = {imag} exceeds the e^(z^2) range (limit {limit})")]
    ErfOverflow { imag: f64, limit: f64 },
    #[error("quadrature did not converge: error estimate {estimate:e} > tolerance {tolerance:e}")]
    QuadratureNonConvergence { estimate: f64, tolerance: f64 },
    #[error("series tail estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    TailTooLarge { estimate: f64, tolerance: f64 },
    #[error("recursion depth cap {cap} exhausted")]
    DepthExhausted { cap: usize },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("exact arithmetic unsupported here: {0}")]
    ExactUnsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
