//! Closed-form evaluators and solvers for the constant-band model.
//!
//! All closed forms use a constant effort `a`; the optimal efforts of both
//! problems are constants so nothing is lost for the theorem paths.

mod first_best;
mod functionals;
mod second_best;

pub use first_best::{
    degenerate_fb_sequence, solve_first_best, solve_first_best_in_regime, DegenerateSequenceItem, FbSolution,
    GammaRange,
};
pub use functionals::{
    delta_star, f_eval, g_eval, gamma_agent, gamma_principal, h_eval, h_gamma, h_z, worst_case_utilities_q, z_star_sb,
    Clamped, FEval, WorstAlpha, WorstCase,
};
pub use second_best::{
    continuation_contract, degenerate_bound_with_m, sb_contract_in_q, sb_degenerate_bound, sb_degenerate_contract,
    solve_second_best, solve_second_best_in_regime, SbDegenerateContract, SbSolution,
};

use crate::model::RiskProfile;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("DegenerateRegime: disjoint bands, use the degenerate sequence API")]
    DegenerateRegime,
    #[error("NotDegenerate: bands intersect, no degenerate sequence exists")]
    NotDegenerate,
    #[error("GammaOutsideFamily: gamma={0} is not in the optimal family")]
    GammaOutsideFamily(f64),
}

/// Agent's best response `clip(z / k, 0, a_max)` to a constant incentive `z`.
pub fn agent_best_response(z: f64, profile: &RiskProfile) -> f64 {
    (z / profile.cost_coeff).clamp(0.0, profile.effort_cap)
}
