//! Domain types, parameter validation and regime classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("NonPositiveParameter: {name} must be > 0 (got {value})")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("EmptyBand: {which} band has lo > hi ({lo} > {hi})")]
    EmptyBand { which: &'static str, lo: f64, hi: f64 },
    #[error("NonNegativeReservation: reservation utility must be < 0 (got {0})")]
    NonNegativeReservation(f64),
}

/// User-facing risk parameters; `reservation_cert` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub r_agent: f64,
    pub r_principal: f64,
    pub cost_coeff: f64,
    pub effort_cap: f64,
    pub horizon: f64,
    pub reservation: f64,
}

impl ProfileParams {
    /// R_A = R_P = k = T = 1, a_max = 2, R = -1.
    pub fn unit() -> Self {
        ProfileParams {
            r_agent: 1.0,
            r_principal: 1.0,
            cost_coeff: 1.0,
            effort_cap: 2.0,
            horizon: 1.0,
            reservation: -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileParams")]
pub struct RiskProfile {
    pub r_agent: f64,
    pub r_principal: f64,
    pub cost_coeff: f64,
    pub effort_cap: f64,
    pub horizon: f64,
    pub reservation: f64,
    /// Certainty equivalent `-ln(-R) / R_A` of the reservation utility.
    pub reservation_cert: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonPositiveParameter { name, value })
    }
}

impl TryFrom<ProfileParams> for RiskProfile {
    type Error = ModelError;

    fn try_from(p: ProfileParams) -> Result<Self, ModelError> {
        RiskProfile::new(p)
    }
}

impl RiskProfile {
    pub fn new(p: ProfileParams) -> Result<Self, ModelError> {
        let r_agent = positive("r_agent", p.r_agent)?;
        let r_principal = positive("r_principal", p.r_principal)?;
        let cost_coeff = positive("cost_coeff", p.cost_coeff)?;
        let effort_cap = positive("effort_cap", p.effort_cap)?;
        let horizon = positive("horizon", p.horizon)?;
        if p.reservation >= 0.0 || !p.reservation.is_finite() {
            return Err(ModelError::NonNegativeReservation(p.reservation));
        }
        Ok(RiskProfile {
            r_agent,
            r_principal,
            cost_coeff,
            effort_cap,
            horizon,
            reservation: p.reservation,
            reservation_cert: -(-p.reservation).ln() / r_agent,
        })
    }

    pub fn params(&self) -> ProfileParams {
        ProfileParams {
            r_agent: self.r_agent,
            r_principal: self.r_principal,
            cost_coeff: self.cost_coeff,
            effort_cap: self.effort_cap,
            horizon: self.horizon,
            reservation: self.reservation,
        }
    }

    /// Quadratic effort cost `k a^2 / 2`.
    pub fn cost(&self, a: f64) -> f64 {
        0.5 * self.cost_coeff * a * a
    }

    /// Unconstrained minimiser of `k(a) - a`.
    pub fn first_best_effort_unclipped(&self) -> f64 {
        1.0 / self.cost_coeff
    }

    /// `R_A + R_P`.
    pub fn risk_sum(&self) -> f64 {
        self.r_agent + self.r_principal
    }
}

/// Closed variance interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct AmbiguityBand {
    pub lo: f64,
    pub hi: f64,
}

impl AmbiguityBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        Self::named("ambiguity", lo, hi)
    }

    pub(crate) fn named(which: &'static str, lo: f64, hi: f64) -> Result<Self, ModelError> {
        positive("band.lo", lo)?;
        positive("band.hi", hi)?;
        if lo > hi {
            return Err(ModelError::EmptyBand { which, lo, hi });
        }
        Ok(AmbiguityBand { lo, hi })
    }

    pub fn singleton(alpha: f64) -> Result<Self, ModelError> {
        Self::new(alpha, alpha)
    }

    pub fn contains(&self, alpha: f64) -> bool {
        self.lo <= alpha && alpha <= self.hi
    }

    pub fn intersect(&self, other: &AmbiguityBand) -> Option<AmbiguityBand> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(AmbiguityBand { lo, hi })
    }

    /// `min over alpha in band of alpha * gamma / 2`.
    pub fn min_half_gamma(&self, gamma: f64) -> f64 {
        0.5 * gamma * if gamma >= 0.0 { self.lo } else { self.hi }
    }
}

impl TryFrom<[f64; 2]> for AmbiguityBand {
    type Error = ModelError;

    fn try_from(v: [f64; 2]) -> Result<Self, ModelError> {
        AmbiguityBand::new(v[0], v[1])
    }
}

impl From<AmbiguityBand> for [f64; 2] {
    fn from(b: AmbiguityBand) -> Self {
        [b.lo, b.hi]
    }
}

/// `xi = z * B_T + (gamma / 2) * <B>_T + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearQuadraticContract {
    pub z: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl LinearQuadraticContract {
    pub fn new(z: f64, gamma: f64, delta: f64) -> Self {
        LinearQuadraticContract { z, gamma, delta }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.gamma.is_finite() && self.delta.is_finite()
    }

    /// Payment for a realised terminal output and quadratic variation.
    pub fn payoff(&self, b_t: f64, qv_t: f64) -> f64 {
        self.z * b_t + 0.5 * self.gamma * qv_t + self.delta
    }

    /// Component-wise difference, itself a linear-quadratic functional.
    pub fn minus(&self, other: &LinearQuadraticContract) -> LinearQuadraticContract {
        LinearQuadraticContract {
            z: self.z - other.z,
            gamma: self.gamma - other.gamma,
            delta: self.delta - other.delta,
        }
    }
}

/// First-best regimes, named after how the two bands sit relative to each
/// other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FbRegime {
    /// Principal band entirely below the agent band.
    DegenerateLow,
    /// Agent band entirely below the principal band.
    DegenerateHigh,
    /// `lo^A == hi^P`.
    BoundaryPA,
    /// `lo^A < hi^P < hi^A`.
    Interior,
    /// `hi^A == hi^P`.
    BoundaryTops,
    /// `lo^P == hi^A`.
    BoundaryAP,
    /// `lo^P < hi^A < hi^P`.
    InteriorRev,
}

impl FbRegime {
    pub const ALL: [FbRegime; 7] = [
        FbRegime::DegenerateLow,
        FbRegime::DegenerateHigh,
        FbRegime::BoundaryPA,
        FbRegime::Interior,
        FbRegime::BoundaryTops,
        FbRegime::BoundaryAP,
        FbRegime::InteriorRev,
    ];

    pub fn is_degenerate(self) -> bool {
        matches!(self, FbRegime::DegenerateLow | FbRegime::DegenerateHigh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SbRegime {
    /// `lo^A <= hi^P <= hi^A`.
    PrincipalTopInAgentBand,
    /// `lo^P <= hi^A <= hi^P`.
    AgentTopInPrincipalBand,
    /// Disjoint bands.
    Degenerate,
}

impl SbRegime {
    pub const ALL: [SbRegime; 3] = [
        SbRegime::PrincipalTopInAgentBand,
        SbRegime::AgentTopInPrincipalBand,
        SbRegime::Degenerate,
    ];
}

fn eq_tol(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Classifies the first-best regime. Values within `tol` count as equal;
/// when several equalities hold at once the priority is
/// `BoundaryTops > BoundaryPA > BoundaryAP`.
pub fn classify_fb(agent: &AmbiguityBand, principal: &AmbiguityBand, tol: f64) -> FbRegime {
    let (a_lo, a_hi) = (agent.lo, agent.hi);
    let (p_lo, p_hi) = (principal.lo, principal.hi);
    if p_hi < a_lo - tol {
        FbRegime::DegenerateLow
    } else if a_hi < p_lo - tol {
        FbRegime::DegenerateHigh
    } else if eq_tol(a_hi, p_hi, tol) {
        FbRegime::BoundaryTops
    } else if eq_tol(a_lo, p_hi, tol) {
        FbRegime::BoundaryPA
    } else if eq_tol(p_lo, a_hi, tol) {
        FbRegime::BoundaryAP
    } else if p_hi < a_hi {
        FbRegime::Interior
    } else {
        FbRegime::InteriorRev
    }
}

pub fn classify_sb(agent: &AmbiguityBand, principal: &AmbiguityBand, tol: f64) -> SbRegime {
    let overlap = agent.lo.max(principal.lo) <= agent.hi.min(principal.hi) + tol;
    if !overlap {
        SbRegime::Degenerate
    } else if principal.hi <= agent.hi + tol {
        SbRegime::PrincipalTopInAgentBand
    } else {
        SbRegime::AgentTopInPrincipalBand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelWarning {
    /// `a_max < 1/k`: the closed forms assume an interior effort, results use
    /// the clipped best response instead.
    EffortCapBinds { effort_cap: f64, interior_effort: f64 },
}

/// Validated bundle consumed by every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedModel {
    pub profile: RiskProfile,
    pub agent: AmbiguityBand,
    pub principal: AmbiguityBand,
    pub fb_regime: FbRegime,
    pub sb_regime: SbRegime,
    pub warnings: Vec<ModelWarning>,
}

pub fn validate(params: &ProfileParams, band_a: [f64; 2], band_p: [f64; 2]) -> Result<ValidatedModel, ModelError> {
    validate_with_tolerance(params, band_a, band_p, 0.0)
}

pub fn validate_with_tolerance(
    params: &ProfileParams,
    band_a: [f64; 2],
    band_p: [f64; 2],
    tol: f64,
) -> Result<ValidatedModel, ModelError> {
    let profile = RiskProfile::new(*params)?;
    let agent = AmbiguityBand::named("agent", band_a[0], band_a[1])?;
    let principal = AmbiguityBand::named("principal", band_p[0], band_p[1])?;
    Ok(ValidatedModel::from_parts(profile, agent, principal, tol))
}

impl ValidatedModel {
    pub fn from_parts(profile: RiskProfile, agent: AmbiguityBand, principal: AmbiguityBand, tol: f64) -> Self {
        let mut warnings = Vec::new();
        let interior = profile.first_best_effort_unclipped();
        if profile.effort_cap < interior {
            warnings.push(ModelWarning::EffortCapBinds {
                effort_cap: profile.effort_cap,
                interior_effort: interior,
            });
        }
        ValidatedModel {
            profile,
            agent,
            principal,
            fb_regime: classify_fb(&agent, &principal, tol),
            sb_regime: classify_sb(&agent, &principal, tol),
            warnings,
        }
    }
}
