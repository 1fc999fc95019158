//! Finite-difference solver for the HJBI equation of the state-dependent
//! ambiguity model.
//!
//! The unknown is `psi(t, x)` with `psi(T, x) = exp(-R_P x)`; the principal's
//! second-best value is `-exp(R_P R_0) psi(0, 0)`.

mod field;
mod hamiltonian;
mod solver;

pub use field::MarkovAmbiguityField;
pub use hamiltonian::{
    g_map, g_map_bands, hamiltonian_generic, hamiltonian_generic_at, hamiltonian_reduced, hamiltonian_reduced_at,
    GValue, GenericSearch, HamConfig, HamResult, ZDomain,
};
pub use solver::{extract_policy, solve_pde, solve_pde_with_terminal, PdeGrid, PdeOptions, ValueSurface};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbiError {
    #[error("CflViolation: dt={dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("EmptyIntersection: agent and principal bands are disjoint at t={t}, x={x}")]
    EmptyIntersection { t: f64, x: f64 },
    #[error("NonPositiveValueSurface: {clamped} of {total} node updates were clamped")]
    NonPositiveValueSurface { clamped: usize, total: usize },
    #[error("InvalidField: {0}")]
    InvalidField(String),
    #[error("InvalidGrid: {0}")]
    InvalidGrid(String),
}
