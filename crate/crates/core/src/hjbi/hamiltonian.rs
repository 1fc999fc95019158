use serde::{Deserialize, Serialize};

use super::{HjbiError, MarkovAmbiguityField};
use crate::analytic::agent_best_response;
use crate::model::{AmbiguityBand, RiskProfile};
use crate::optimize::{golden_min, grid_refine_max, uniform_grid};

/// Value of the pre-Hamiltonian; `Infeasible` stands for `+inf` when the
/// principal's variance lies outside the principal's band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GValue {
    Finite(f64),
    Infeasible,
}

impl GValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            GValue::Finite(v) => Some(v),
            GValue::Infeasible => None,
        }
    }
}

/// Pre-Hamiltonian with explicit bands.
#[allow(clippy::too_many_arguments)]
pub fn g_map_bands(
    v: f64,
    p: f64,
    q: f64,
    z: f64,
    gamma: f64,
    alpha: f64,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    profile: &RiskProfile,
) -> GValue {
    if !band_p.contains(alpha) {
        return GValue::Infeasible;
    }
    let rp = profile.r_principal;
    let a = agent_best_response(z, profile);
    let bracket =
        0.5 * profile.r_agent * alpha * z * z + profile.cost(a) + 0.5 * alpha * gamma - band_a.min_half_gamma(gamma);
    GValue::Finite(a * p + bracket * rp * v + 0.5 * alpha * q + 0.5 * alpha * z * z * rp * rp * v + alpha * z * rp * p)
}

/// Pre-Hamiltonian with bands read from `field` at `(t, x)`.
#[allow(clippy::too_many_arguments)]
pub fn g_map(
    t: f64,
    x: f64,
    v: f64,
    p: f64,
    q: f64,
    z: f64,
    gamma: f64,
    alpha: f64,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
) -> GValue {
    let (a, pb) = field.bands_at(t, x);
    g_map_bands(v, p, q, z, gamma, alpha, &a, &pb, profile)
}

/// Admissible incentive slopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZDomain {
    #[default]
    Real,
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamConfig {
    pub z_domain: ZDomain,
    /// `z` is searched in `[-z_bound, z_bound]` (or `[0, z_bound]`).
    pub z_bound: f64,
    /// Grid size for the outer search over alpha, refined by golden section.
    pub alpha_grid_n: usize,
    pub alpha_tol: f64,
}

impl Default for HamConfig {
    fn default() -> Self {
        HamConfig {
            z_domain: ZDomain::Real,
            z_bound: 5.0,
            alpha_grid_n: 17,
            alpha_tol: 1e-10,
        }
    }
}

impl HamConfig {
    fn z_range(&self) -> (f64, f64) {
        match self.z_domain {
            ZDomain::Real => (-self.z_bound, self.z_bound),
            ZDomain::NonNegative => (0.0, self.z_bound),
        }
    }
}

/// Extra knobs of the brute-force Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericSearch {
    pub z_grid_n: usize,
    pub gamma_grid: Vec<f64>,
}

impl Default for GenericSearch {
    fn default() -> Self {
        GenericSearch {
            z_grid_n: 401,
            gamma_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamResult {
    pub value: f64,
    pub z_arg: f64,
    pub alpha_arg: f64,
}

fn effective_alpha(band_a: &AmbiguityBand, band_p: &AmbiguityBand) -> Result<AmbiguityBand, HjbiError> {
    band_a.intersect(band_p).ok_or(HjbiError::EmptyIntersection {
        t: f64::NAN,
        x: f64::NAN,
    })
}

fn outer_sup<F: Fn(f64) -> (f64, f64)>(inner: F, dom: &AmbiguityBand, cfg: &HamConfig) -> HamResult {
    let best = grid_refine_max(|al| inner(al).0, dom.lo, dom.hi, cfg.alpha_grid_n, cfg.alpha_tol);
    let (value, z_arg) = inner(best.x);
    HamResult {
        value,
        z_arg,
        alpha_arg: best.x,
    }
}

/// `sup_alpha inf_{z, gamma} G` by nested numerical search: alpha over the
/// intersection of the bands, `z` on a grid with golden refinement and
/// `gamma` on a small grid.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_generic(
    v: f64,
    p: f64,
    q: f64,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    profile: &RiskProfile,
    cfg: &HamConfig,
    search: &GenericSearch,
) -> Result<HamResult, HjbiError> {
    let dom = effective_alpha(band_a, band_p)?;
    let (zlo, zhi) = cfg.z_range();
    let inner = |alpha: f64| {
        let g_of_z = |z: f64| {
            search
                .gamma_grid
                .iter()
                .filter_map(|&g| g_map_bands(v, p, q, z, g, alpha, band_a, band_p, profile).finite())
                .fold(f64::INFINITY, f64::min)
        };
        let grid = uniform_grid(zlo, zhi, search.z_grid_n);
        let (ib, _) =
            grid.iter()
                .enumerate()
                .map(|(i, &z)| (i, g_of_z(z)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, val)| if val < acc.1 { (i, val) } else { acc },
                );
        let lo = grid[ib.saturating_sub(1)];
        let hi = grid[(ib + 1).min(grid.len() - 1)];
        let e = golden_min(g_of_z, lo, hi, 1e-12);
        (e.value, e.x)
    };
    Ok(outer_sup(inner, &dom, cfg))
}

/// Minimum of `c2 z^2 + c1 z + c0` over `[lo, hi]`, assuming `c2 > 0`.
fn quad_min(c2: f64, c1: f64, c0: f64, lo: f64, hi: f64) -> (f64, f64) {
    let z = if c2 > 0.0 {
        (-c1 / (2.0 * c2)).clamp(lo, hi)
    } else if c1 > 0.0 {
        lo
    } else {
        hi
    };
    (c2 * z * z + c1 * z + c0, z)
}

/// `inf_z G(alpha, z, 0)` in closed form. The best response is clipped at
/// `z = 0` and `z = k a_max`, so `G` is a quadratic on each of three pieces.
fn inner_min_z(v: f64, p: f64, q: f64, alpha: f64, profile: &RiskProfile, zlo: f64, zhi: f64) -> (f64, f64) {
    let rp = profile.r_principal;
    let k = profile.cost_coeff;
    let a_max = profile.effort_cap;
    let kink = k * a_max;
    let c0 = 0.5 * alpha * q;
    let outer_c2 = 0.5 * alpha * rp * v * profile.risk_sum();
    let outer_c1 = alpha * rp * p;
    let mut best = (f64::INFINITY, 0.0);
    let mut consider = |lo: f64, hi: f64, c2: f64, c1: f64, c0: f64| {
        let (lo, hi) = (lo.max(zlo), hi.min(zhi));
        if lo <= hi {
            let cand = quad_min(c2, c1, c0, lo, hi);
            if cand.0 < best.0 {
                best = cand;
            }
        }
    };
    consider(f64::NEG_INFINITY, 0.0, outer_c2, outer_c1, c0);
    consider(
        0.0,
        kink,
        rp * v * (0.5 * alpha * profile.r_agent + 0.5 / k) + 0.5 * alpha * rp * rp * v,
        p / k + alpha * rp * p,
        c0,
    );
    consider(
        kink,
        f64::INFINITY,
        outer_c2,
        outer_c1,
        c0 + a_max * p + rp * v * 0.5 * k * a_max * a_max,
    );
    best
}

/// Same optimisation as [`hamiltonian_generic`] with `gamma = 0` and the
/// inner minimisation over `z` done piecewise in closed form.
pub fn hamiltonian_reduced(
    v: f64,
    p: f64,
    q: f64,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    profile: &RiskProfile,
    cfg: &HamConfig,
) -> Result<HamResult, HjbiError> {
    let dom = effective_alpha(band_a, band_p)?;
    let (zlo, zhi) = cfg.z_range();
    Ok(outer_sup(|al| inner_min_z(v, p, q, al, profile, zlo, zhi), &dom, cfg))
}

fn at<F>(t: f64, x: f64, field: &MarkovAmbiguityField, f: F) -> Result<HamResult, HjbiError>
where
    F: FnOnce(&AmbiguityBand, &AmbiguityBand) -> Result<HamResult, HjbiError>,
{
    let (a, p) = field.bands_at(t, x);
    f(&a, &p).map_err(|e| match e {
        HjbiError::EmptyIntersection { .. } => HjbiError::EmptyIntersection { t, x },
        other => other,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_generic_at(
    t: f64,
    x: f64,
    v: f64,
    p: f64,
    q: f64,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    cfg: &HamConfig,
    search: &GenericSearch,
) -> Result<HamResult, HjbiError> {
    at(t, x, field, |a, pb| {
        hamiltonian_generic(v, p, q, a, pb, profile, cfg, search)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_reduced_at(
    t: f64,
    x: f64,
    v: f64,
    p: f64,
    q: f64,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    cfg: &HamConfig,
) -> Result<HamResult, HjbiError> {
    at(t, x, field, |a, pb| hamiltonian_reduced(v, p, q, a, pb, profile, cfg))
}
