use serde::{Deserialize, Serialize};

use super::agent_best_response;
use crate::model::{AmbiguityBand, LinearQuadraticContract, RiskProfile};
use crate::{neg_exp, EXP_CLAMP};

/// A value computed through a clamped exponential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped {
    pub value: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FEval {
    pub gamma_p: f64,
    pub gamma_a: f64,
    pub f: f64,
    pub saturated: bool,
}

fn principal_exponent(a: f64, c: &LinearQuadraticContract, alpha_p: f64, profile: &RiskProfile) -> f64 {
    let t = profile.horizon;
    let rp = profile.r_principal;
    let one_minus_z = 1.0 - c.z;
    rp * (c.delta - one_minus_z * a * t + (0.5 * rp * one_minus_z * one_minus_z + 0.5 * c.gamma) * alpha_p * t)
}

fn agent_exponent(a: f64, c: &LinearQuadraticContract, alpha_a: f64, profile: &RiskProfile) -> f64 {
    let t = profile.horizon;
    let ra = profile.r_agent;
    ra * (t * profile.cost(a) - c.z * a * t - c.delta + (0.5 * ra * c.z * c.z - 0.5 * c.gamma) * alpha_a * t)
}

/// Principal's fixed-alpha utility of a contract in Q under constant effort.
pub fn gamma_principal(a: f64, c: &LinearQuadraticContract, alpha_p: f64, profile: &RiskProfile) -> Clamped {
    let (value, saturated) = neg_exp(principal_exponent(a, c, alpha_p, profile));
    Clamped { value, saturated }
}

/// Agent's fixed-alpha utility of a contract in Q under constant effort.
pub fn gamma_agent(a: f64, c: &LinearQuadraticContract, alpha_a: f64, profile: &RiskProfile) -> Clamped {
    let (value, saturated) = neg_exp(agent_exponent(a, c, alpha_a, profile));
    Clamped { value, saturated }
}

/// Lagrangian `Gamma_P + rho * Gamma_A` at constant effort.
pub fn f_eval(
    a: f64,
    c: &LinearQuadraticContract,
    alpha_p: f64,
    alpha_a: f64,
    rho: f64,
    profile: &RiskProfile,
) -> FEval {
    let gp = gamma_principal(a, c, alpha_p, profile);
    let ga = gamma_agent(a, c, alpha_a, profile);
    FEval {
        gamma_p: gp.value,
        gamma_a: ga.value,
        f: gp.value + rho * ga.value,
        saturated: gp.saturated || ga.saturated,
    }
}

/// Unique maximiser in `delta` of [`f_eval`].
pub fn delta_star(a: f64, z: f64, gamma: f64, alpha_p: f64, alpha_a: f64, rho: f64, profile: &RiskProfile) -> f64 {
    let t = profile.horizon;
    let (ra, rp) = (profile.r_agent, profile.r_principal);
    let one_minus_z = 1.0 - z;
    let bracket = (rho * ra / rp).ln() + t * ((rp * one_minus_z - ra * z) * a + ra * profile.cost(a))
        - 0.5 * rp * (rp * one_minus_z * one_minus_z + gamma) * alpha_p * t
        + 0.5 * ra * (ra * z * z - gamma) * alpha_a * t;
    bracket / (ra + rp)
}

/// Value of the Lagrangian maximised over `delta`.
pub fn g_eval(a: f64, z: f64, gamma: f64, alpha_p: f64, alpha_a: f64, rho: f64, profile: &RiskProfile) -> Clamped {
    let t = profile.horizon;
    let (ra, rp) = (profile.r_agent, profile.r_principal);
    let s = ra + rp;
    let one_minus_z = 1.0 - z;
    let log_prefactor = (rp / s) * rho.ln() + (s / rp).ln() - (ra / s) * (ra / rp).ln();
    let inner = t * (profile.cost(a) - a)
        + 0.5 * gamma * t * (alpha_p - alpha_a)
        + 0.5 * t * (alpha_p * rp * one_minus_z * one_minus_z + alpha_a * ra * z * z);
    let exponent = log_prefactor + (ra * rp / s) * inner;
    let saturated = exponent.abs() > EXP_CLAMP;
    Clamped {
        value: -exponent.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        saturated,
    }
}

/// Where the infimum over a band is attained for a contract in Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WorstAlpha {
    At(f64),
    /// The fixed-alpha utility does not depend on alpha.
    Any,
}

impl WorstAlpha {
    /// Concrete alpha, using `fallback` when every alpha is worst.
    pub fn or(self, fallback: f64) -> f64 {
        match self {
            WorstAlpha::At(a) => a,
            WorstAlpha::Any => fallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub u_p: f64,
    pub u_a: f64,
    pub alpha_p_worst: WorstAlpha,
    pub alpha_a_worst: WorstAlpha,
    pub saturated: bool,
}

/// Worst-case utilities of both parties for a contract in Q.
///
/// The principal's fixed-alpha utility is monotone in alpha with slope sign
/// `gamma + R_P (1 - z)^2`; the agent's with sign `R_A z^2 - gamma`.
pub fn worst_case_utilities_q(
    c: &LinearQuadraticContract,
    a: f64,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    profile: &RiskProfile,
) -> WorstCase {
    let p_threshold = -profile.r_principal * (1.0 - c.z) * (1.0 - c.z);
    let alpha_p_worst = if c.gamma < p_threshold {
        WorstAlpha::At(band_p.lo)
    } else if c.gamma > p_threshold {
        WorstAlpha::At(band_p.hi)
    } else {
        WorstAlpha::Any
    };
    let a_threshold = profile.r_agent * c.z * c.z;
    let alpha_a_worst = if c.gamma < a_threshold {
        WorstAlpha::At(band_a.hi)
    } else if c.gamma > a_threshold {
        WorstAlpha::At(band_a.lo)
    } else {
        WorstAlpha::Any
    };
    let gp = gamma_principal(a, c, alpha_p_worst.or(band_p.hi), profile);
    let ga = gamma_agent(a, c, alpha_a_worst.or(band_a.hi), profile);
    WorstCase {
        u_p: gp.value,
        u_a: ga.value,
        alpha_p_worst,
        alpha_a_worst,
        saturated: gp.saturated || ga.saturated,
    }
}

/// `z`-part of the second-best reduced Hamiltonian.
pub fn h_z(alpha: f64, z: f64, profile: &RiskProfile) -> f64 {
    let a = agent_best_response(z, profile);
    a - profile.cost(a) - 0.5 * alpha * (profile.r_agent * z * z + profile.r_principal * (1.0 - z) * (1.0 - z))
}

/// `gamma`-part of the second-best reduced Hamiltonian.
pub fn h_gamma(alpha: f64, gamma: f64, band_a: &AmbiguityBand) -> f64 {
    -0.5 * alpha * gamma + band_a.min_half_gamma(gamma)
}

pub fn h_eval(alpha: f64, z: f64, gamma: f64, band_a: &AmbiguityBand, profile: &RiskProfile) -> f64 {
    h_z(alpha, z, profile) + h_gamma(alpha, gamma, band_a)
}

/// Maximiser of `z -> H(alpha, z, 0)` for an interior best response.
pub fn z_star_sb(alpha: f64, profile: &RiskProfile) -> f64 {
    let k = profile.cost_coeff;
    (1.0 + k * alpha * profile.r_principal) / (1.0 + alpha * k * profile.risk_sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProfileParams;
    use crate::optimize::{golden_max, uniform_grid};
    use proptest::prelude::*;

    fn unit() -> RiskProfile {
        RiskProfile::new(ProfileParams::unit()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Independent oracle: maximise F over delta. Golden section brackets the
    /// maximiser, then bisection on the sign of a central difference pins it
    /// below the square-root-of-epsilon floor of a pure comparison search.
    fn delta_oracle(a: f64, z: f64, g: f64, ap: f64, aa: f64, rho: f64, p: &RiskProfile) -> (f64, f64) {
        let f = |d: f64| f_eval(a, &LinearQuadraticContract::new(z, g, d), ap, aa, rho, p).f;
        let coarse = golden_max(f, -10.0, 10.0, 1e-6);
        let (mut lo, mut hi) = (coarse.x - 1e-3, coarse.x + 1e-3);
        let h = 1e-6;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid + h) > f(mid - h) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        (x, f(x))
    }

    #[test]
    fn f_eval_examples() {
        let p = unit();
        for a in [0.0, 0.7, 1.9] {
            let r = f_eval(a, &LinearQuadraticContract::new(1.0, 0.0, 0.0), 1.0, 1.0, 1.0, &p);
            assert_eq!(r.gamma_p, -1.0);
        }
        let r = f_eval(0.0, &LinearQuadraticContract::new(0.0, 0.0, 0.0), 1.0, 1.0, 1.0, &p);
        assert_eq!(r.gamma_a, -1.0);

        let r = f_eval(1.0, &LinearQuadraticContract::new(0.5, 0.0, 0.0), 1.0, 1.0, 1.0, &p);
        assert!(rel(r.gamma_p, -(-0.375f64).exp()) < 1e-14);
        assert!(rel(r.gamma_a, -(0.125f64).exp()) < 1e-14);
        assert!((r.f - (-1.82044)).abs() < 1e-5);
        assert!(!r.saturated);
    }

    #[test]
    fn f_eval_flags_overflow() {
        let p = unit();
        let r = f_eval(1.0, &LinearQuadraticContract::new(0.5, 0.0, 2000.0), 1.0, 1.0, 1.0, &p);
        assert!(r.saturated);
        assert!(r.f.is_finite());
    }

    #[test]
    fn delta_star_examples() {
        let p = unit();
        assert!((delta_star(1.0, 0.5, 0.0, 1.0, 1.0, 1.0, &p) - 0.25).abs() < 1e-15);
        // with a = z = gamma = 0 only the principal's variance term survives
        assert!((delta_star(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, &p) + 0.25).abs() < 1e-15);
        let d = delta_star(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, &p);
        let (oracle, _) = delta_oracle(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, &p);
        assert!((d - oracle).abs() < 1e-8);
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn delta_star_vanishes_on_symmetric_zero_input() {
        // log(rho R_A / R_P) = 0 with a = z = gamma = 0 leaves only the
        // variance term of the principal.
        let mut params = ProfileParams::unit();
        params.r_principal = 2.0;
        let p = RiskProfile::new(params).unwrap();
        let rho = p.r_principal / p.r_agent;
        let d = delta_star(0.0, 0.0, 0.0, 1.0, 1.0, rho, &p);
        let expected = -0.5 * 2.0 * 2.0 / 3.0;
        assert!((d - expected).abs() < 1e-15);
        let (oracle, _) = delta_oracle(0.0, 0.0, 0.0, 1.0, 1.0, rho, &p);
        assert!((d - oracle).abs() < 1e-8);
    }

    #[test]
    fn g_eval_examples() {
        let p = unit();
        for g in [-3.0, 0.0, 0.4, 10.0] {
            let v = g_eval(1.0, 0.5, g, 1.0, 1.0, 1.0, &p).value;
            assert!(rel(v, -2.0 * (-0.125f64).exp()) < 1e-14, "gamma={g}");
        }
        // frozen from the golden-section oracle on F
        let (_, oracle) = delta_oracle(1.0, 0.5, 0.0, 1.0, 1.5, 1.0, &p);
        let v = g_eval(1.0, 0.5, 0.0, 1.0, 1.5, 1.0, &p).value;
        assert!(rel(v, oracle) < 1e-10);
        assert!(rel(v, -2.0 * (-0.09375f64).exp()) < 1e-14);
        assert!((v - (-1.82102)).abs() < 1e-5);
    }

    #[test]
    fn worst_case_examples() {
        let p = unit();
        let band_p = AmbiguityBand::new(0.5, 1.0).unwrap();
        let band_a = AmbiguityBand::new(0.5, 1.5).unwrap();
        let c = LinearQuadraticContract::new(0.5, 0.0, 0.0);
        let w = worst_case_utilities_q(&c, 1.0, &band_a, &band_p, &p);
        assert_eq!(w.alpha_p_worst, WorstAlpha::At(1.0));
        assert!(rel(w.u_p, -(-0.375f64).exp()) < 1e-14);
        assert_eq!(w.alpha_a_worst, WorstAlpha::At(1.5));
        assert!(rel(w.u_a, -(0.1875f64).exp()) < 1e-14);

        let c = LinearQuadraticContract::new(0.5, -0.25, 0.0);
        let w = worst_case_utilities_q(&c, 1.0, &band_a, &band_p, &p);
        assert_eq!(w.alpha_p_worst, WorstAlpha::Any);
        let vals: Vec<f64> = [0.5, 0.75, 1.0]
            .iter()
            .map(|&al| gamma_principal(1.0, &c, al, &p).value)
            .collect();
        assert!(vals.iter().all(|&v| v == vals[0]));

        let c = LinearQuadraticContract::new(0.5, 0.5, 0.0);
        let w = worst_case_utilities_q(&c, 1.0, &band_a, &band_p, &p);
        assert_eq!(w.alpha_a_worst, WorstAlpha::At(0.5));
    }

    #[test]
    fn h_eval_examples() {
        let p = unit();
        let band_a = AmbiguityBand::new(0.5, 1.5).unwrap();
        let v = h_eval(1.0, 2.0 / 3.0, 0.0, &band_a, &p);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        assert!((h_z(1.0, 0.0, &p) - (-0.5)).abs() < 1e-15);
        assert!((h_gamma(1.0, 2.0, &band_a) - (-0.5)).abs() < 1e-15);
        assert!((h_eval(1.0, 0.0, 2.0, &band_a, &p) - (-1.0)).abs() < 1e-15);
        for alpha in [0.5, 0.9, 1.5] {
            assert_eq!(h_gamma(alpha, 0.0, &band_a), 0.0);
        }
    }

    #[test]
    fn z_star_examples() {
        let p = unit();
        assert_eq!(z_star_sb(0.0, &p), 1.0);
        assert!((z_star_sb(1.0, &p) - 2.0 / 3.0).abs() < 1e-15);
        // grid argmax oracle at a very large alpha
        let band_a = AmbiguityBand::new(0.5, 1.5).unwrap();
        let grid = uniform_grid(0.0, 1.0, 100_001);
        let best = grid
            .iter()
            .copied()
            .max_by(|x, y| {
                h_eval(1e6, *x, 0.0, &band_a, &p)
                    .partial_cmp(&h_eval(1e6, *y, 0.0, &band_a, &p))
                    .unwrap()
            })
            .unwrap();
        assert!((best - 0.5).abs() < 1e-3);
        assert!((z_star_sb(1e6, &p) - best).abs() < 1e-3);
    }

    #[test]
    fn equality_f_identity() {
        let p = unit();
        let band_a = AmbiguityBand::new(0.5, 1.5).unwrap();
        for (alpha, z) in [(0.3, 0.2), (1.0, 0.625), (2.5, 0.9), (1.5, 0.1)] {
            let g = -p.r_agent * z * z - p.r_principal * (1.0 - z) * (1.0 - z);
            let lhs = h_eval(band_a.hi, z, 0.0, &band_a, &p);
            let rhs = h_eval(alpha, z, g, &band_a, &p);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    fn profile_strategy() -> impl Strategy<Value = RiskProfile> {
        (0.2f64..3.0, 0.2f64..3.0, 0.3f64..3.0, 0.3f64..2.0, -3.0f64..-0.2).prop_map(|(ra, rp, k, t, r)| {
            RiskProfile::new(ProfileParams {
                r_agent: ra,
                r_principal: rp,
                cost_coeff: k,
                effort_cap: 10.0,
                horizon: t,
                reservation: r,
            })
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn delta_concavity(
            p in profile_strategy(),
            a in 0.0f64..2.0, z in -0.5f64..1.5, g in -1.0f64..1.0,
            ap in 0.2f64..2.0, aa in 0.2f64..2.0, rho in 0.2f64..3.0,
        ) {
            let ds = delta_star(a, z, g, ap, aa, rho, &p);
            let best = f_eval(a, &LinearQuadraticContract::new(z, g, ds), ap, aa, rho, &p).f;
            for d in uniform_grid(ds - 5.0, ds + 5.0, 1001) {
                let v = f_eval(a, &LinearQuadraticContract::new(z, g, d), ap, aa, rho, &p).f;
                prop_assert!(v <= best + 1e-12 * best.abs().max(1.0));
            }
        }

        #[test]
        fn f_g_identity(
            p in profile_strategy(),
            a in 0.0f64..2.0, z in -0.5f64..1.5, g in -1.0f64..1.0,
            ap in 0.2f64..2.0, aa in 0.2f64..2.0, rho in 0.2f64..3.0,
        ) {
            let ds = delta_star(a, z, g, ap, aa, rho, &p);
            let f = f_eval(a, &LinearQuadraticContract::new(z, g, ds), ap, aa, rho, &p).f;
            let gv = g_eval(a, z, g, ap, aa, rho, &p).value;
            prop_assert!(((gv - f) / f).abs() <= 1e-10);
        }

        #[test]
        fn endpoint_worst_case(
            p in profile_strategy(),
            a in 0.0f64..2.0, z in -0.5f64..1.5, g in -1.5f64..1.5, d in -1.0f64..1.0,
            alo in 0.2f64..1.0, aw in 0.05f64..1.0, plo in 0.2f64..1.0, pw in 0.05f64..1.0,
        ) {
            let c = LinearQuadraticContract::new(z, g, d);
            let tp = -p.r_principal * (1.0 - z) * (1.0 - z);
            let ta = p.r_agent * z * z;
            // stay off the boundary cells
            prop_assume!((g - tp).abs() > 1e-6 && (g - ta).abs() > 1e-6);
            let band_a = AmbiguityBand::new(alo, alo + aw).unwrap();
            let band_p = AmbiguityBand::new(plo, plo + pw).unwrap();
            let w = worst_case_utilities_q(&c, a, &band_a, &band_p, &p);

            let argmin = |grid: &[f64], f: &dyn Fn(f64) -> f64| {
                let mut best = 0;
                for i in 1..grid.len() {
                    if f(grid[i]) < f(grid[best]) { best = i; }
                }
                best
            };
            let gp = uniform_grid(band_p.lo, band_p.hi, 101);
            let ip = argmin(&gp, &|al| gamma_principal(a, &c, al, &p).value);
            let expected_p = if w.alpha_p_worst == WorstAlpha::At(band_p.lo) { 0 } else { 100 };
            prop_assert_eq!(ip, expected_p);
            let ga = uniform_grid(band_a.lo, band_a.hi, 101);
            let ia = argmin(&ga, &|al| gamma_agent(a, &c, al, &p).value);
            let expected_a = if w.alpha_a_worst == WorstAlpha::At(band_a.lo) { 0 } else { 100 };
            prop_assert_eq!(ia, expected_a);
        }
    }

    #[test]
    fn argmax_invariance_of_z_star() {
        let p = unit();
        let band_a = AmbiguityBand::new(0.5, 1.5).unwrap();
        let grid = uniform_grid(-2.0, 2.0, 40_001);
        for alpha in [0.25, 0.5, 1.0, 1.5, 4.0] {
            let mut best = grid[0];
            for &z in &grid {
                if h_eval(alpha, z, 0.0, &band_a, &p) > h_eval(alpha, best, 0.0, &band_a, &p) {
                    best = z;
                }
            }
            assert!((best - z_star_sb(alpha, &p)).abs() <= 1e-4 + 1e-12, "alpha={alpha}");
        }
    }
}
