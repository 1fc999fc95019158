use serde::{Deserialize, Serialize};

use super::functionals::{h_eval, z_star_sb};
use super::{agent_best_response, AnalyticError};
use crate::model::{classify_sb, AmbiguityBand, LinearQuadraticContract, RiskProfile, SbRegime};
use crate::neg_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbSolution {
    pub regime: SbRegime,
    pub z_star: f64,
    pub gamma_star: f64,
    /// Initial value of the continuation utility, the reservation certainty
    /// equivalent.
    pub y0: f64,
    pub effort: f64,
    pub principal_value: f64,
    pub worst_alpha: f64,
    pub saturated: bool,
}

/// Closed-form second-best optimum. Disjoint bands give the supremum 0,
/// approached by [`sb_degenerate_contract`].
pub fn solve_second_best(profile: &RiskProfile, band_a: &AmbiguityBand, band_p: &AmbiguityBand) -> SbSolution {
    solve_second_best_in_regime(profile, band_a, band_p, classify_sb(band_a, band_p, 0.0))
}

pub fn solve_second_best_in_regime(
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    regime: SbRegime,
) -> SbSolution {
    let p = profile;
    let (alpha, gamma_of) = match regime {
        SbRegime::PrincipalTopInAgentBand => (band_p.hi, None),
        SbRegime::AgentTopInPrincipalBand => (band_a.hi, Some(())),
        SbRegime::Degenerate => {
            return SbSolution {
                regime,
                z_star: 0.0,
                gamma_star: 0.0,
                y0: p.reservation_cert,
                effort: 0.0,
                principal_value: 0.0,
                worst_alpha: band_p.hi,
                saturated: false,
            }
        }
    };
    let z = z_star_sb(alpha, p);
    let gamma = match gamma_of {
        None => 0.0,
        Some(()) => -p.r_agent * z * z - p.r_principal * (1.0 - z) * (1.0 - z),
    };
    let h = h_eval(alpha, z, gamma, band_a, p);
    let (principal_value, saturated) = neg_exp(-p.r_principal * (p.horizon * h - p.reservation_cert));
    SbSolution {
        regime,
        z_star: z,
        gamma_star: gamma,
        y0: p.reservation_cert,
        effort: agent_best_response(z, p),
        principal_value,
        worst_alpha: alpha,
        saturated,
    }
}

/// The optimal second-best contract `Y_T` written as a member of Q:
/// `z_Q = z`, `gamma_Q = gamma + R_A z^2` and the fixed part absorbing the
/// agent's certainty-equivalent drift.
pub fn sb_contract_in_q(
    sol: &SbSolution,
    band_a: &AmbiguityBand,
    profile: &RiskProfile,
) -> Result<LinearQuadraticContract, AnalyticError> {
    if sol.regime == SbRegime::Degenerate {
        return Err(AnalyticError::DegenerateRegime);
    }
    Ok(continuation_contract(
        sol.z_star,
        sol.gamma_star,
        sol.y0,
        band_a,
        profile,
    ))
}

/// `Y_T` for constant controls `(z, gamma)` started at `y0`, expressed in Q.
pub fn continuation_contract(
    z: f64,
    gamma: f64,
    y0: f64,
    band_a: &AmbiguityBand,
    profile: &RiskProfile,
) -> LinearQuadraticContract {
    let t = profile.horizon;
    let a = agent_best_response(z, profile);
    LinearQuadraticContract::new(
        z,
        gamma + profile.r_agent * z * z,
        y0 - t * band_a.min_half_gamma(gamma) - t * (z * a - profile.cost(a)),
    )
}

/// Lower bound `-exp(-R_P n + R_P^2 T M / 2)` on the principal's value of
/// the `n`-th degenerate contract, with `M` the principal's top variance.
pub fn sb_degenerate_bound(
    n: u64,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
) -> Result<f64, AnalyticError> {
    if classify_sb(band_a, band_p, 0.0) != SbRegime::Degenerate {
        return Err(AnalyticError::NotDegenerate);
    }
    Ok(degenerate_bound_with_m(n as f64, profile, band_p.hi))
}

pub fn degenerate_bound_with_m(n: f64, profile: &RiskProfile, m: f64) -> f64 {
    let rp = profile.r_principal;
    neg_exp(-rp * n + 0.5 * rp * rp * profile.horizon * m).0
}

/// The `n`-th contract of the degenerate second-best sequence: the agent is
/// paid the constant `on_agent_support` on paths whose quadratic variation
/// lies in the agent's band and `-n` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbDegenerateContract {
    pub n: u64,
    pub on_agent_support: f64,
    pub off_agent_support: f64,
    /// Payment seen on the principal's support, as a member of Q.
    pub principal_view: LinearQuadraticContract,
    pub effort: f64,
    pub principal_bound: f64,
}

pub fn sb_degenerate_contract(
    n: u64,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
) -> Result<SbDegenerateContract, AnalyticError> {
    let principal_bound = sb_degenerate_bound(n, profile, band_a, band_p)?;
    Ok(SbDegenerateContract {
        n,
        on_agent_support: profile.reservation_cert,
        off_agent_support: -(n as f64),
        principal_view: LinearQuadraticContract::new(0.0, 0.0, -(n as f64)),
        effort: 0.0,
        principal_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::first_best::solve_first_best;
    use crate::analytic::functionals::{gamma_agent, gamma_principal, worst_case_utilities_q};
    use crate::model::ProfileParams;
    use crate::optimize::grid_refine_max;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> RiskProfile {
        RiskProfile::new(ProfileParams::unit()).unwrap()
    }

    fn band(lo: f64, hi: f64) -> AmbiguityBand {
        AmbiguityBand::new(lo, hi).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn regime_one_example() {
        let s = solve_second_best(&unit(), &band(0.5, 1.5), &band(0.5, 1.0));
        assert_eq!(s.regime, SbRegime::PrincipalTopInAgentBand);
        assert!((s.z_star - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.gamma_star, 0.0);
        assert_eq!(s.worst_alpha, 1.0);
        assert!(rel(s.principal_value, -(-1.0f64 / 6.0).exp()) < 1e-12);
        assert_eq!(s.effort, s.z_star);
    }

    #[test]
    fn regime_two_example() {
        let s = solve_second_best(&unit(), &band(0.5, 1.5), &band(0.5, 2.0));
        assert_eq!(s.regime, SbRegime::AgentTopInPrincipalBand);
        assert!((s.z_star - 0.625).abs() < 1e-15);
        assert!((s.gamma_star + 0.53125).abs() < 1e-15);
        assert!(rel(s.principal_value, -(-0.03125f64).exp()) < 1e-12);
    }

    #[test]
    fn degenerate_example() {
        let p = unit();
        let s = solve_second_best(&p, &band(1.0, 2.0), &band(0.2, 0.5));
        assert_eq!(s.regime, SbRegime::Degenerate);
        assert_eq!(s.principal_value, 0.0);
        assert_eq!(s.effort, 0.0);
        assert!(sb_contract_in_q(&s, &band(1.0, 2.0), &p).is_err());
    }

    #[test]
    fn degenerate_bound_examples() {
        let p = unit();
        assert!(rel(degenerate_bound_with_m(0.0, &p, 1.0), -(0.5f64).exp()) < 1e-15);
        assert!(rel(degenerate_bound_with_m(10.0, &p, 1.0), -(-9.5f64).exp()) < 1e-15);
        let (a, pb) = (band(1.0, 2.0), band(0.2, 0.5));
        let mut last = sb_degenerate_bound(1, &p, &a, &pb).unwrap();
        for n in 2..60 {
            let b = sb_degenerate_bound(n, &p, &a, &pb).unwrap();
            assert!(b > last && b < 0.0);
            last = b;
        }
        assert_eq!(
            sb_degenerate_bound(1, &p, &band(0.5, 1.5), &pb),
            Err(AnalyticError::NotDegenerate)
        );
    }

    #[test]
    fn degenerate_contract_principal_side_meets_the_bound() {
        let p = unit();
        let (a, pb) = (band(1.0, 2.0), band(0.2, 0.5));
        for n in [0, 1, 5, 20] {
            let c = sb_degenerate_contract(n, &p, &a, &pb).unwrap();
            let w = worst_case_utilities_q(&c.principal_view, c.effort, &a, &pb, &p);
            assert!(w.u_p >= c.principal_bound);
        }
    }

    #[test]
    fn equality_identity_on_random_points() {
        let p = unit();
        let band_a = band(0.5, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let alpha = rng.gen_range(0.05..3.0);
            let z = rng.gen_range(-1.0..2.0);
            let g = -p.r_agent * z * z - p.r_principal * (1.0 - z) * (1.0 - z);
            let lhs = h_eval(band_a.hi, z, 0.0, &band_a, &p);
            let rhs = h_eval(alpha, z, g, &band_a, &p);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn contract_in_q_binds_participation_and_delivers_value() {
        let p = unit();
        for pb in [band(0.5, 1.0), band(0.5, 2.0), band(0.9, 1.2)] {
            let a = band(0.5, 1.5);
            let s = solve_second_best(&p, &a, &pb);
            let c = sb_contract_in_q(&s, &a, &p).unwrap();
            let w = worst_case_utilities_q(&c, s.effort, &a, &pb, &p);
            assert!(rel(w.u_a, p.reservation) < 1e-9);
            assert!(rel(w.u_p, s.principal_value) < 1e-12);
            let up = gamma_principal(s.effort, &c, s.worst_alpha, &p).value;
            assert!(rel(up, s.principal_value) < 1e-12);
            let ua = gamma_agent(s.effort, &c, a.hi, &p).value;
            assert!(rel(ua, p.reservation) < 1e-9);
        }
    }

    #[test]
    fn z_star_maximises_the_worst_case_objective() {
        // Oracle: for regime i the optimal z maximises T H(alpha_hi^P, z, 0).
        let p = unit();
        let a = band(0.5, 1.5);
        let pb = band(0.5, 1.0);
        let s = solve_second_best(&p, &a, &pb);
        let e = grid_refine_max(|z| h_eval(pb.hi, z, 0.0, &a, &p), -1.0, 2.0, 301, 1e-12);
        assert!((e.x - s.z_star).abs() < 1e-6);
    }

    #[test]
    fn second_best_never_beats_first_best() {
        let p = unit();
        let cases = [
            (band(1.0, 2.0), band(0.5, 1.0)),
            (band(0.6, 1.5), band(0.5, 1.0)),
            (band(0.7, 1.0), band(0.5, 1.0)),
            (band(0.5, 1.0), band(1.0, 2.0)),
            (band(0.5, 0.8), band(0.3, 1.0)),
            (band(0.5, 1.5), band(0.5, 2.0)),
        ];
        for (a, pb) in cases {
            let sb = solve_second_best(&p, &a, &pb);
            let fb = solve_first_best(&p, &a, &pb).unwrap();
            assert!(sb.principal_value <= fb.principal_value, "{a:?} {pb:?}");
        }
    }
}
