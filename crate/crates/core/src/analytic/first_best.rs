use serde::{Deserialize, Serialize};

use super::functionals::{delta_star, worst_case_utilities_q, WorstAlpha};
use super::AnalyticError;
use crate::model::{classify_fb, AmbiguityBand, FbRegime, LinearQuadraticContract, RiskProfile};
use crate::neg_exp;

/// Admissible `gamma` values of the optimal family. `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRange {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl GammaRange {
    fn point(g: f64) -> Self {
        GammaRange {
            lo: Some(g),
            hi: Some(g),
        }
    }

    pub fn contains(&self, gamma: f64, tol: f64) -> bool {
        self.lo.is_none_or(|lo| gamma >= lo - tol) && self.hi.is_none_or(|hi| gamma <= hi + tol)
    }

    pub fn is_point(&self) -> bool {
        matches!((self.lo, self.hi), (Some(a), Some(b)) if a == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbSolution {
    pub regime: FbRegime,
    pub effort: f64,
    /// The effort cap bound the unconstrained optimum `1/k`.
    pub effort_clipped: bool,
    pub z_star: f64,
    pub gamma_range: GammaRange,
    /// Variance at which the optimal family is priced.
    pub reference_alpha: f64,
    pub representative_contract: LinearQuadraticContract,
    pub principal_value: f64,
    /// `ln(rho R_A / R_P) / (R_A + R_P)` for the multiplier that makes the
    /// family participation-binding.
    pub lagrange_log_term: f64,
    pub rho: f64,
    /// Worst-case variances at the representative contract, with the free
    /// side pinned to the other side's value.
    pub worst_alpha_p: f64,
    pub worst_alpha_a: f64,
    pub saturated: bool,
}

impl FbSolution {
    /// Fixed transfer that pairs with `gamma` inside the optimal family.
    pub fn delta_for_gamma(&self, gamma: f64, profile: &RiskProfile) -> Result<f64, AnalyticError> {
        if !self.gamma_range.contains(gamma, 1e-12) {
            return Err(AnalyticError::GammaOutsideFamily(gamma));
        }
        Ok(family_delta(
            gamma,
            self.effort,
            self.z_star,
            self.reference_alpha,
            profile,
        ))
    }

    pub fn contract_with_gamma(
        &self,
        gamma: f64,
        profile: &RiskProfile,
    ) -> Result<LinearQuadraticContract, AnalyticError> {
        let delta = self.delta_for_gamma(gamma, profile)?;
        Ok(LinearQuadraticContract::new(self.z_star, gamma, delta))
    }
}

fn family_delta(gamma: f64, a: f64, z: f64, alpha_ref: f64, p: &RiskProfile) -> f64 {
    let t = p.horizon;
    let s = p.risk_sum();
    t * p.cost(a) - z * t * a
        + 0.5 * alpha_ref * t * (p.r_agent * p.r_principal * p.r_principal / (s * s) - gamma)
        + p.reservation_cert
}

/// Closed-form first-best optimum over Q for intersecting bands.
pub fn solve_first_best(
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
) -> Result<FbSolution, AnalyticError> {
    solve_first_best_in_regime(profile, band_a, band_p, classify_fb(band_a, band_p, 0.0))
}

/// As [`solve_first_best`] with a regime classified elsewhere, e.g. with a
/// tolerance.
pub fn solve_first_best_in_regime(
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    regime: FbRegime,
) -> Result<FbSolution, AnalyticError> {
    let p = profile;
    let (ra, rp, t) = (p.r_agent, p.r_principal, p.horizon);
    let s = p.risk_sum();
    let z = rp / s;
    let unclipped = p.first_best_effort_unclipped();
    let effort = unclipped.min(p.effort_cap);
    let p_threshold = -rp * (1.0 - z) * (1.0 - z);
    let a_threshold = ra * z * z;

    let (gamma_range, reference_alpha) = match regime {
        FbRegime::DegenerateLow | FbRegime::DegenerateHigh => return Err(AnalyticError::DegenerateRegime),
        FbRegime::BoundaryPA => (
            GammaRange {
                lo: Some(a_threshold),
                hi: None,
            },
            band_p.hi,
        ),
        FbRegime::Interior => (GammaRange::point(a_threshold), band_p.hi),
        FbRegime::BoundaryTops => (
            GammaRange {
                lo: Some(p_threshold),
                hi: Some(a_threshold),
            },
            band_p.hi,
        ),
        FbRegime::BoundaryAP => (
            GammaRange {
                lo: None,
                hi: Some(p_threshold),
            },
            band_a.hi,
        ),
        FbRegime::InteriorRev => (GammaRange::point(p_threshold), band_a.hi),
    };

    let endpoints: Vec<f64> = [gamma_range.lo, gamma_range.hi].into_iter().flatten().collect();
    let gamma = endpoints
        .iter()
        .copied()
        .min_by(|x, y| {
            let dx = family_delta(*x, effort, z, reference_alpha, p).abs();
            let dy = family_delta(*y, effort, z, reference_alpha, p).abs();
            dx.total_cmp(&dy)
        })
        .expect("every non-degenerate family has a finite endpoint");
    let contract = LinearQuadraticContract::new(z, gamma, family_delta(gamma, effort, z, reference_alpha, p));

    let worst = worst_case_utilities_q(&contract, effort, band_a, band_p, p);
    let (worst_alpha_p, worst_alpha_a) = match (worst.alpha_p_worst, worst.alpha_a_worst) {
        (WorstAlpha::At(ap), WorstAlpha::At(aa)) => (ap, aa),
        (WorstAlpha::At(ap), WorstAlpha::Any) => (ap, ap),
        (WorstAlpha::Any, WorstAlpha::At(aa)) => (aa, aa),
        (WorstAlpha::Any, WorstAlpha::Any) => (reference_alpha, reference_alpha),
    };

    // rho enters the maximiser only through ln(rho R_A / R_P) / S.
    let log_free = delta_star(effort, z, gamma, worst_alpha_p, worst_alpha_a, rp / ra, p);
    let lagrange_log_term = contract.delta - log_free;
    let rho = (rp / ra) * (s * lagrange_log_term).exp();

    let exponent =
        -(rp / ra) * (-p.reservation).ln() + rp * t * (p.cost(effort) - effort + 0.5 * reference_alpha * ra * rp / s);
    let (principal_value, saturated) = neg_exp(exponent);

    Ok(FbSolution {
        regime,
        effort,
        effort_clipped: effort < unclipped,
        z_star: z,
        gamma_range,
        reference_alpha,
        representative_contract: contract,
        principal_value,
        lagrange_log_term,
        rho,
        worst_alpha_p,
        worst_alpha_a,
        saturated: saturated || worst.saturated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSequenceItem {
    pub n: u64,
    pub contract: LinearQuadraticContract,
    /// Effort prescribed alongside the contract (the cap).
    pub effort: f64,
    pub principal_value: f64,
    pub agent_value: f64,
    /// Principal's worst-case variance for this item.
    pub worst_alpha_p: f64,
    pub saturated: bool,
}

/// Contracts loading on quadratic variation whose principal values tend to 0
/// when the bands are disjoint.
pub fn degenerate_fb_sequence(
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    n_list: &[u64],
) -> Result<Vec<DegenerateSequenceItem>, AnalyticError> {
    let p = profile;
    let (rp, t) = (p.r_principal, p.horizon);
    let a = p.effort_cap;
    let base = t * p.cost(a) + p.reservation_cert;
    let regime = classify_fb(band_a, band_p, 0.0);
    if !regime.is_degenerate() {
        return Err(AnalyticError::NotDegenerate);
    }
    let items = n_list
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let (contract, alpha_w, exponent) = if regime == FbRegime::DegenerateLow {
                let c = LinearQuadraticContract::new(0.0, nf, base - 0.5 * t * nf * band_a.lo);
                let aw = band_p.hi;
                let e = a * t - base + 0.5 * t * nf * (band_a.lo - aw) - 0.5 * rp * t * aw;
                (c, aw, e)
            } else {
                let c = LinearQuadraticContract::new(0.0, -nf, base + 0.5 * t * nf * band_a.hi);
                let aw = if nf > rp { band_p.lo } else { band_p.hi };
                let e = a * t - base + 0.5 * t * nf * (aw - band_a.hi) - 0.5 * rp * t * aw;
                (c, aw, e)
            };
            let (principal_value, saturated) = neg_exp(-rp * exponent);
            let agent = worst_case_utilities_q(&contract, a, band_a, band_p, p);
            DegenerateSequenceItem {
                n,
                contract,
                effort: a,
                principal_value,
                agent_value: agent.u_a,
                worst_alpha_p: alpha_w,
                saturated: saturated || agent.saturated,
            }
        })
        .collect();
    Ok(items)
}
