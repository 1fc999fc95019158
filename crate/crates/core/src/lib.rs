//! Optimal contracts for the Holmström–Milgrom principal–agent problem when
//! both parties are ambiguous about the volatility of the output.
//!
//! The crate is organised around four solvers that cross-check each other:
//!
//! - [`analytic`]: closed-form first-best and second-best contracts in the
//!   constant-band model, plus the degenerate maximising sequences that
//!   appear when the two ambiguity bands are disjoint.
//! - [`montecarlo`]: exact terminal sampling of the output under a constant
//!   volatility scenario, worst-case scans and the Gâteaux optimality residual.
//! - [`hjbi`]: an explicit finite-difference solver for the
//!   Hamilton–Jacobi–Bellman–Isaacs equation of the state-dependent model.
//! - [`harness`]: reproducible cross-verification runs tying the above
//!   together.
//!
//! Data-parallel loops go through [`exec::Execution`], which runs on rayon when
//! the `parallel` feature is enabled and falls back to plain iteration
//! otherwise.

pub mod analytic;
pub mod exec;
pub mod harness;
pub mod hjbi;
pub mod model;
pub mod montecarlo;
pub mod optimize;

pub use exec::Execution;
pub use model::{
    validate, AmbiguityBand, FbRegime, LinearQuadraticContract, ModelError, ProfileParams, RiskProfile, SbRegime,
    ValidatedModel,
};

/// Exponents are clamped to this magnitude before calling `exp`.
pub const EXP_CLAMP: f64 = 700.0;

/// `-exp(exponent)` with the exponent clamped to `±EXP_CLAMP`.
///
/// Returns the value and whether clamping happened.
pub fn neg_exp(exponent: f64) -> (f64, bool) {
    if exponent > EXP_CLAMP {
        (-EXP_CLAMP.exp(), true)
    } else if exponent < -EXP_CLAMP {
        (-(-EXP_CLAMP).exp(), true)
    } else {
        (-exponent.exp(), false)
    }
}
