//! Cross-verification runs that compare the closed forms against the PDE
//! solver and Monte Carlo.
//!
//! Every comparison is recorded as a [`Metric`] with its tolerance taken
//! from [`HarnessConfig`], so a report can be audited row by row.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{
    continuation_contract, degenerate_fb_sequence, f_eval, h_eval, sb_contract_in_q, sb_degenerate_contract,
    solve_first_best, solve_second_best, worst_case_utilities_q, AnalyticError,
};
use crate::exec::Execution;
use crate::hjbi::{solve_pde, HamConfig, HjbiError, MarkovAmbiguityField, PdeGrid, PdeOptions, ZDomain};
use crate::model::{classify_fb, AmbiguityBand, FbRegime, LinearQuadraticContract, RiskProfile, SbRegime};
use crate::montecarlo::{
    estimate_payoff_utilities, estimate_utilities, gateaux_residual, Direction, McError, McOptions, Payoff, Scenario,
    UtilityEstimate,
};
use crate::optimize::uniform_grid;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Hjbi(#[from] HjbiError),
    #[error("InvalidCase: {0}")]
    InvalidCase(String),
}

/// Every tolerance used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub pde_rel_tol: f64,
    /// Monte Carlo comparisons pass within this many standard errors.
    pub se_mult: f64,
    /// Absolute slack added to SE-based comparisons.
    pub mc_abs_floor: f64,
    pub closed_form_rel_tol: f64,
    pub participation_rel_tol: f64,
    /// Degenerate second-best sequence items must beat this value.
    pub degenerate_mc_floor: f64,
    pub perturbation_radius: f64,
    /// Off-optimum Gâteaux residuals must exceed this many standard errors.
    pub gateaux_separation: f64,
    /// Index of the degenerate second-best item checked by Monte Carlo.
    pub degenerate_sb_n: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            pde_rel_tol: 0.01,
            se_mult: 3.5,
            mc_abs_floor: 1e-12,
            closed_form_rel_tol: 1e-12,
            participation_rel_tol: 1e-9,
            degenerate_mc_floor: -1e-6,
            perturbation_radius: 0.2,
            gateaux_separation: 5.0,
            degenerate_sb_n: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSpec {
    pub n_paths: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub antithetic: bool,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            n_paths: 200_000,
            seed: 20_240_601,
            grid_n: 101,
            antithetic: true,
        }
    }
}

impl McSpec {
    pub fn options(&self) -> McOptions {
        McOptions {
            antithetic: self.antithetic,
            ..McOptions::default()
        }
    }

    /// Scenario seeded with `seed + salt`, so separate estimates draw from
    /// separate streams.
    pub fn scenario(&self, alpha: f64, effort: f64, salt: u64) -> Scenario {
        Scenario::new(alpha, effort, self.n_paths, self.seed.wrapping_add(salt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSpec {
    pub n_t: usize,
    pub n_x: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub z_domain: ZDomain,
}

impl Default for PdeSpec {
    fn default() -> Self {
        PdeSpec {
            n_t: 400,
            n_x: 401,
            x_min: -6.0,
            x_max: 6.0,
            z_domain: ZDomain::Real,
        }
    }
}

impl PdeSpec {
    pub fn grid(&self, horizon: f64, max_variance: f64, safety: f64) -> Result<PdeGrid, HjbiError> {
        PdeGrid::cfl_consistent(
            self.n_t,
            self.n_x,
            self.x_min,
            self.x_max,
            horizon,
            max_variance,
            safety,
        )
    }

    pub fn options(&self) -> PdeOptions {
        PdeOptions {
            ham: HamConfig {
                z_domain: self.z_domain,
                ..HamConfig::default()
            },
            ..PdeOptions::default()
        }
    }
}

/// One comparison: passes when `value <= tolerance`. Informational rows
/// carry no tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub metric: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Metric {
    pub fn le(metric: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Metric {
            metric: metric.into(),
            value,
            tolerance: Some(tolerance),
            pass: value <= tolerance,
        }
    }

    /// A reported quantity with no acceptance test attached.
    pub fn info(metric: impl Into<String>, value: f64) -> Self {
        Metric {
            metric: metric.into(),
            value,
            tolerance: None,
            pass: true,
        }
    }

    /// Boolean check recorded as a failure count.
    pub fn flag(metric: impl Into<String>, ok: bool) -> Self {
        Self::le(metric, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub case_id: String,
    pub regime: String,
    pub closed_form: f64,
    pub pde_value: Option<f64>,
    /// `(mean, std_error)`.
    pub mc_value: Option<(f64, f64)>,
    pub rel_errors: Vec<f64>,
    pub pass: bool,
    pub runtime_ms: u64,
    pub metrics: Vec<Metric>,
}

impl CrossCheckReport {
    pub fn new(case_id: &str, regime: String, closed_form: f64) -> Self {
        CrossCheckReport {
            case_id: case_id.to_string(),
            regime,
            closed_form,
            pde_value: None,
            mc_value: None,
            rel_errors: Vec::new(),
            pass: true,
            runtime_ms: 0,
            metrics: Vec::new(),
        }
    }

    pub fn push(&mut self, m: Metric) {
        self.pass &= m.pass;
        self.metrics.push(m);
    }

    fn finish(mut self, started: Instant) -> Self {
        self.runtime_ms = started.elapsed().as_millis() as u64;
        self
    }

    /// Copy with the wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        CrossCheckReport {
            runtime_ms: 0,
            ..self.clone()
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn mc_metric(name: &str, est: &UtilityEstimate, target: f64, cfg: &HarnessConfig) -> Metric {
    Metric::le(
        name,
        (est.mean - target).abs(),
        cfg.se_mult * est.std_error + cfg.mc_abs_floor,
    )
}

/// Second best: closed form against the PDE and a Monte Carlo evaluation of
/// the optimal contract at its worst-case variance.
pub fn crosscheck_second_best(
    case_id: &str,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    pde: &PdeSpec,
    mc: &McSpec,
    cfg: &HarnessConfig,
) -> Result<CrossCheckReport, HarnessError> {
    let started = Instant::now();
    let sol = solve_second_best(profile, band_a, band_p);
    let mut rep = CrossCheckReport::new(case_id, format!("{:?}", sol.regime), sol.principal_value);
    let opts = mc.options();

    if sol.regime == SbRegime::Degenerate {
        let field = MarkovAmbiguityField::constant(band_a, band_p, profile.horizon, pde.x_min, pde.x_max);
        rep.push(Metric::flag(
            "pde_skipped_empty_intersection",
            matches!(field, Err(HjbiError::EmptyIntersection { .. })),
        ));
        let item = sb_degenerate_contract(cfg.degenerate_sb_n, profile, band_a, band_p)?;
        let payoff = Payoff::QvSwitch {
            band: *band_a,
            inside: item.on_agent_support,
            outside: item.off_agent_support,
        };
        let (u_p, _) = estimate_payoff_utilities(&payoff, &mc.scenario(band_p.hi, item.effort, 1), profile, &opts)?;
        let (_, u_a) = estimate_payoff_utilities(&payoff, &mc.scenario(band_a.hi, item.effort, 2), profile, &opts)?;
        rep.mc_value = Some((u_p.mean, u_p.std_error));
        rep.push(Metric::le(
            "degenerate_mc_principal_gap",
            -u_p.mean,
            -cfg.degenerate_mc_floor,
        ));
        rep.push(Metric::le(
            "degenerate_mc_below_bound",
            item.principal_bound - u_p.mean,
            cfg.se_mult * u_p.std_error + cfg.mc_abs_floor,
        ));
        rep.push(Metric::le(
            "participation_mc_rel",
            rel_err(u_a.mean, profile.reservation),
            cfg.participation_rel_tol,
        ));
        rep.push(Metric::info("closed_form_value", 0.0));
        return Ok(rep.finish(started));
    }

    let field = MarkovAmbiguityField::constant(band_a, band_p, profile.horizon, pde.x_min, pde.x_max)?;
    let popts = pde.options();
    let grid = pde.grid(profile.horizon, field.max_variance(), popts.cfl_safety)?;
    let surface = solve_pde(&field, profile, &grid, &popts)?;
    let pde_err = rel_err(surface.principal_value, sol.principal_value);
    rep.pde_value = Some(surface.principal_value);
    rep.rel_errors.push(pde_err);
    rep.push(Metric::info("closed_form_value", sol.principal_value));
    rep.push(Metric::info("pde_value", surface.principal_value));
    rep.push(Metric::le("pde_rel_error", pde_err, cfg.pde_rel_tol));

    let contract = sb_contract_in_q(&sol, band_a, profile)?;
    let worst = worst_case_utilities_q(&contract, sol.effort, band_a, band_p, profile);
    rep.push(Metric::le(
        "principal_worst_case_rel",
        rel_err(worst.u_p, sol.principal_value),
        cfg.closed_form_rel_tol,
    ));
    rep.push(Metric::le(
        "participation_rel",
        rel_err(worst.u_a, profile.reservation),
        cfg.participation_rel_tol,
    ));

    let (u_p, _) = estimate_utilities(&contract, &mc.scenario(sol.worst_alpha, sol.effort, 1), profile, &opts)?;
    let (_, u_a) = estimate_utilities(&contract, &mc.scenario(band_a.hi, sol.effort, 2), profile, &opts)?;
    rep.mc_value = Some((u_p.mean, u_p.std_error));
    rep.rel_errors.push(rel_err(u_p.mean, sol.principal_value));
    rep.push(mc_metric("mc_principal_abs_error", &u_p, sol.principal_value, cfg));
    rep.push(mc_metric("mc_participation_abs_error", &u_a, profile.reservation, cfg));
    Ok(rep.finish(started))
}

/// First best: closed form, participation and Monte Carlo evaluation of
/// the representative contract, Gâteaux residuals at the optimum; for
/// disjoint bands, the maximising sequence.
pub fn crosscheck_first_best(
    case_id: &str,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    mc: &McSpec,
    cfg: &HarnessConfig,
) -> Result<CrossCheckReport, HarnessError> {
    let started = Instant::now();
    let regime = classify_fb(band_a, band_p, 0.0);
    let opts = mc.options();
    if regime.is_degenerate() {
        return crosscheck_degenerate_fb(case_id, profile, band_a, band_p, mc, cfg, started);
    }
    let sol = solve_first_best(profile, band_a, band_p)?;
    let mut rep = CrossCheckReport::new(case_id, format!("{regime:?}"), sol.principal_value);
    let c = sol.representative_contract;
    let worst = worst_case_utilities_q(&c, sol.effort, band_a, band_p, profile);
    rep.push(Metric::info("closed_form_value", sol.principal_value));
    rep.push(Metric::le(
        "principal_worst_case_rel",
        rel_err(worst.u_p, sol.principal_value),
        cfg.closed_form_rel_tol,
    ));
    rep.push(Metric::le(
        "participation_rel",
        rel_err(worst.u_a, profile.reservation),
        cfg.participation_rel_tol,
    ));

    let (u_p, _) = estimate_utilities(&c, &mc.scenario(sol.worst_alpha_p, sol.effort, 1), profile, &opts)?;
    let (_, u_a) = estimate_utilities(&c, &mc.scenario(sol.worst_alpha_a, sol.effort, 2), profile, &opts)?;
    rep.mc_value = Some((u_p.mean, u_p.std_error));
    rep.rel_errors.push(rel_err(u_p.mean, sol.principal_value));
    rep.push(mc_metric("mc_principal_abs_error", &u_p, sol.principal_value, cfg));
    rep.push(mc_metric("mc_participation_abs_error", &u_a, profile.reservation, cfg));

    if sol.worst_alpha_p == sol.worst_alpha_a {
        let al = sol.worst_alpha_p;
        let tpl = mc.scenario(al, sol.effort, 3);
        for (name, dir) in [
            ("gateaux_constant", Direction::Constant(1.0)),
            ("gateaux_terminal_output", Direction::TerminalOutput),
        ] {
            let r = gateaux_residual(&c, dir, sol.effort, al, al, sol.rho, &tpl, profile, &opts)?;
            rep.push(mc_metric(name, &r, 0.0, cfg));
        }
    }
    Ok(rep.finish(started))
}

/// Principal values of the degenerate first-best sequence at these indices.
pub const DEGENERATE_FB_N: [u64; 3] = [1, 5, 100];
/// Indices confirmed by Monte Carlo.
pub const DEGENERATE_FB_MC_N: [u64; 3] = [1, 5, 20];

fn crosscheck_degenerate_fb(
    case_id: &str,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    mc: &McSpec,
    cfg: &HarnessConfig,
    started: Instant,
) -> Result<CrossCheckReport, HarnessError> {
    let regime = classify_fb(band_a, band_p, 0.0);
    let items = degenerate_fb_sequence(profile, band_a, band_p, &DEGENERATE_FB_N)?;
    let last = items.last().map_or(0.0, |i| i.principal_value);
    let mut rep = CrossCheckReport::new(case_id, format!("{regime:?}"), last);
    let mut prev = f64::NEG_INFINITY;
    for it in &items {
        let w = worst_case_utilities_q(&it.contract, it.effort, band_a, band_p, profile);
        rep.push(Metric::info(format!("sequence_value_n{}", it.n), it.principal_value));
        rep.push(Metric::le(
            format!("sequence_worst_case_rel_n{}", it.n),
            rel_err(w.u_p, it.principal_value),
            cfg.closed_form_rel_tol,
        ));
        rep.push(Metric::le(
            format!("agent_value_rel_n{}", it.n),
            rel_err(it.agent_value, profile.reservation),
            cfg.closed_form_rel_tol,
        ));
        rep.push(Metric::flag(format!("increasing_n{}", it.n), it.principal_value > prev));
        prev = it.principal_value;
    }
    let opts = mc.options();
    let mc_items = degenerate_fb_sequence(profile, band_a, band_p, &DEGENERATE_FB_MC_N)?;
    for (k, it) in mc_items.iter().enumerate() {
        let salt = 10 + 2 * k as u64;
        let (u_p, _) = estimate_utilities(
            &it.contract,
            &mc.scenario(it.worst_alpha_p, it.effort, salt),
            profile,
            &opts,
        )?;
        rep.push(mc_metric(
            &format!("mc_sequence_abs_error_n{}", it.n),
            &u_p,
            it.principal_value,
            cfg,
        ));
        let agent_alpha = worst_case_utilities_q(&it.contract, it.effort, band_a, band_p, profile)
            .alpha_a_worst
            .or(band_a.lo);
        let (_, u_a) = estimate_utilities(
            &it.contract,
            &mc.scenario(agent_alpha, it.effort, salt + 1),
            profile,
            &opts,
        )?;
        rep.push(mc_metric(
            &format!("mc_agent_abs_error_n{}", it.n),
            &u_a,
            profile.reservation,
            cfg,
        ));
        if k == 0 {
            rep.mc_value = Some((u_p.mean, u_p.std_error));
        }
    }
    Ok(rep.finish(started))
}

/// Random perturbations of the first-best and second-best optima never beat
/// them.
#[allow(clippy::too_many_arguments)]
pub fn dominance_scan(
    case_id: &str,
    profile: &RiskProfile,
    band_a: &AmbiguityBand,
    band_p: &AmbiguityBand,
    n_perturbations: usize,
    seed: u64,
    radius: f64,
    mc: &McSpec,
    cfg: &HarnessConfig,
) -> Result<CrossCheckReport, HarnessError> {
    let started = Instant::now();
    let regime = classify_fb(band_a, band_p, 0.0);
    if regime.is_degenerate() {
        return Err(HarnessError::InvalidCase("dominance needs intersecting bands".into()));
    }
    let fb = solve_first_best(profile, band_a, band_p)?;
    let mut rep = CrossCheckReport::new(case_id, format!("{regime:?}"), fb.principal_value);
    let c0 = fb.representative_contract;
    let objective = |c: &LinearQuadraticContract| {
        let w = worst_case_utilities_q(c, fb.effort, band_a, band_p, profile);
        w.u_p + fb.rho * w.u_a
    };
    let best = objective(&c0);
    let pinned = f_eval(fb.effort, &c0, fb.worst_alpha_p, fb.worst_alpha_a, fb.rho, profile).f;
    rep.push(Metric::le(
        "fb_pinned_alpha_rel",
        rel_err(pinned, best),
        cfg.closed_form_rel_tol,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    let mut fb_violations = 0usize;
    let mut fb_worst_gap = f64::NEG_INFINITY;
    for _ in 0..n_perturbations {
        let c = LinearQuadraticContract::new(c0.z + draw(radius), c0.gamma + draw(radius), c0.delta + draw(radius));
        let gap = objective(&c) - best;
        fb_worst_gap = fb_worst_gap.max(gap);
        if gap > cfg.closed_form_rel_tol * best.abs() {
            fb_violations += 1;
        }
    }
    rep.push(Metric::le("fb_violations", fb_violations as f64, 0.0));
    rep.push(Metric::info("fb_max_gap", fb_worst_gap));

    let sb = solve_second_best(profile, band_a, band_p);
    let inter = band_a.intersect(band_p).expect("non-degenerate");
    let alphas = uniform_grid(inter.lo, inter.hi, mc.grid_n.max(2));
    let opts = mc.options();
    let mut sb_violations = 0usize;
    let mut sb_worst_z = f64::NEG_INFINITY;
    for k in 0..n_perturbations {
        let (z, g) = (sb.z_star + draw(radius), sb.gamma_star + draw(radius));
        let alpha = alphas
            .iter()
            .copied()
            .min_by(|x, y| h_eval(*x, z, g, band_a, profile).total_cmp(&h_eval(*y, z, g, band_a, profile)))
            .expect("non-empty grid");
        let c = continuation_contract(z, g, profile.reservation_cert, band_a, profile);
        let effort = crate::analytic::agent_best_response(z, profile);
        let sc = mc.scenario(alpha, effort, 1000 + k as u64);
        let (u_p, _) = estimate_utilities(&c, &sc, profile, &opts)?;
        let excess = if u_p.std_error > 0.0 {
            (u_p.mean - sb.principal_value) / u_p.std_error
        } else if u_p.mean > sb.principal_value + cfg.mc_abs_floor {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        sb_worst_z = sb_worst_z.max(excess);
        if excess > cfg.se_mult {
            sb_violations += 1;
        }
    }
    rep.push(Metric::le("sb_violations", sb_violations as f64, 0.0));
    rep.push(Metric::info("sb_max_excess_se", sb_worst_z));
    Ok(rep.finish(started))
}

/// Instances covering every first-best and second-best regime with the unit
/// profile.
pub fn standard_cases() -> Vec<(&'static str, [f64; 2], [f64; 2])> {
    vec![
        ("fb_degenerate_low", [1.0, 2.0], [0.2, 0.5]),
        ("fb_degenerate_high", [0.2, 0.5], [1.0, 2.0]),
        ("fb_boundary_pa", [1.0, 2.0], [0.5, 1.0]),
        ("fb_interior", [0.6, 1.5], [0.5, 1.0]),
        ("fb_boundary_tops", [0.7, 1.0], [0.5, 1.0]),
        ("fb_boundary_ap", [0.5, 1.0], [1.0, 2.0]),
        ("fb_interior_rev", [0.5, 0.8], [0.3, 1.0]),
        ("sb_principal_top", [0.5, 1.5], [0.5, 1.0]),
        ("sb_agent_top", [0.5, 1.5], [0.5, 2.0]),
        ("sb_degenerate", [1.0, 2.0], [0.2, 0.5]),
    ]
}

/// Runs every standard case plus the two dominance scans. Cases run in
/// parallel; the result order is fixed.
pub fn run_standard_suite(
    profile: &RiskProfile,
    pde: &PdeSpec,
    mc: &McSpec,
    cfg: &HarnessConfig,
    n_perturbations: usize,
    execution: Execution,
) -> Result<Vec<CrossCheckReport>, HarnessError> {
    let cases = standard_cases();
    let n = cases.len() + 2;
    let band = |b: [f64; 2]| AmbiguityBand::new(b[0], b[1]).map_err(|e| HarnessError::InvalidCase(e.to_string()));
    let results = execution.map_indexed(n, |i| -> Result<CrossCheckReport, HarnessError> {
        if i < cases.len() {
            let (id, a, p) = cases[i];
            let (a, p) = (band(a)?, band(p)?);
            if id.starts_with("fb_") {
                crosscheck_first_best(id, profile, &a, &p, mc, cfg)
            } else {
                crosscheck_second_best(id, profile, &a, &p, pde, mc, cfg)
            }
        } else {
            let (id, a, p) = if i == cases.len() {
                ("dominance_boundary_tops", [0.7, 1.0], [0.5, 1.0])
            } else {
                ("dominance_sb_principal_top", [0.5, 1.5], [0.5, 1.0])
            };
            let small = McSpec {
                n_paths: mc.n_paths.min(20_000),
                ..*mc
            };
            dominance_scan(
                id,
                profile,
                &band(a)?,
                &band(p)?,
                n_perturbations,
                mc.seed,
                cfg.perturbation_radius,
                &small,
                cfg,
            )
        }
    });
    results.into_iter().collect()
}

/// JSON array of reports.
pub fn write_reports_json<W: Write>(reports: &[CrossCheckReport], w: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, reports)
}

/// One `case_id,metric,value,tolerance,pass` row per metric.
pub fn write_summary_csv<W: Write>(reports: &[CrossCheckReport], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(["case_id", "metric", "value", "tolerance", "pass"])?;
    for r in reports {
        for m in &r.metrics {
            let tol = m.tolerance.map(|t| format!("{t:?}")).unwrap_or_default();
            out.write_record([
                r.case_id.as_str(),
                &m.metric,
                &format!("{:?}", m.value),
                &tol,
                &m.pass.to_string(),
            ])?;
        }
        out.write_record([r.case_id.as_str(), "case", "", "", &r.pass.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Regimes exercised by a set of reports.
pub fn covered_regimes(reports: &[CrossCheckReport]) -> (Vec<FbRegime>, Vec<SbRegime>) {
    let fb = FbRegime::ALL
        .into_iter()
        .filter(|r| {
            reports
                .iter()
                .any(|x| x.case_id.starts_with("fb_") && x.regime == format!("{r:?}"))
        })
        .collect();
    let sb = SbRegime::ALL
        .into_iter()
        .filter(|r| {
            reports
                .iter()
                .any(|x| x.case_id.starts_with("sb_") && x.regime == format!("{r:?}"))
        })
        .collect();
    (fb, sb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProfileParams;

    fn unit() -> RiskProfile {
        RiskProfile::new(ProfileParams::unit()).unwrap()
    }

    fn band(lo: f64, hi: f64) -> AmbiguityBand {
        AmbiguityBand::new(lo, hi).unwrap()
    }

    fn small_mc() -> McSpec {
        McSpec {
            n_paths: 40_000,
            ..McSpec::default()
        }
    }

    fn coarse_pde() -> PdeSpec {
        PdeSpec {
            n_x: 121,
            ..PdeSpec::default()
        }
    }

    #[test]
    fn second_best_regime_one_passes() {
        let r = crosscheck_second_best(
            "sb1",
            &unit(),
            &band(0.5, 1.5),
            &band(0.5, 1.0),
            &coarse_pde(),
            &small_mc(),
            &HarnessConfig::default(),
        )
        .unwrap();
        assert!(r.pass, "{r:#?}");
        assert!(rel_err(r.closed_form, -(-1.0f64 / 6.0).exp()) < 1e-12);
    }

    #[test]
    fn second_best_degenerate_skips_the_pde() {
        let r = crosscheck_second_best(
            "sb3",
            &unit(),
            &band(1.0, 2.0),
            &band(0.2, 0.5),
            &coarse_pde(),
            &small_mc(),
            &HarnessConfig::default(),
        )
        .unwrap();
        assert!(r.pass, "{r:#?}");
        assert_eq!(r.closed_form, 0.0);
        assert!(r.pde_value.is_none());
        assert_eq!(r.regime, "Degenerate");
    }

    #[test]
    fn first_best_cases_pass() {
        let cfg = HarnessConfig::default();
        for (a, p) in [
            ((0.7, 1.0), (0.5, 1.0)),
            ((0.6, 1.5), (0.5, 1.0)),
            ((1.0, 2.0), (0.2, 0.5)),
        ] {
            let r = crosscheck_first_best("fb", &unit(), &band(a.0, a.1), &band(p.0, p.1), &small_mc(), &cfg).unwrap();
            assert!(r.pass, "{r:#?}");
        }
    }

    #[test]
    fn zero_radius_dominance_is_an_exact_tie() {
        let r = dominance_scan(
            "dom0",
            &unit(),
            &band(0.7, 1.0),
            &band(0.5, 1.0),
            5,
            1,
            0.0,
            &McSpec {
                n_paths: 2000,
                ..McSpec::default()
            },
            &HarnessConfig::default(),
        )
        .unwrap();
        let gap = r.metrics.iter().find(|m| m.metric == "fb_max_gap").unwrap();
        assert_eq!(gap.value, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn reports_are_reproducible_and_serialise() {
        let cfg = HarnessConfig::default();
        let run = || {
            crosscheck_first_best("fb", &unit(), &band(0.7, 1.0), &band(0.5, 1.0), &small_mc(), &cfg)
                .unwrap()
                .without_timing()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        let mut csv_buf = Vec::new();
        write_summary_csv(std::slice::from_ref(&a), &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("case_id,metric,value,tolerance,pass\n"));
        let mut json = Vec::new();
        write_reports_json(&[a], &mut json).unwrap();
        let back: Vec<CrossCheckReport> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back.len(), 1);
    }

    #[test]
    fn standard_cases_cover_every_regime() {
        let mut fb = Vec::new();
        let mut sb = Vec::new();
        for (id, a, p) in standard_cases() {
            let (a, p) = (band(a[0], a[1]), band(p[0], p[1]));
            if id.starts_with("fb_") {
                fb.push(classify_fb(&a, &p, 0.0));
            } else {
                sb.push(crate::model::classify_sb(&a, &p, 0.0));
            }
        }
        for r in FbRegime::ALL {
            assert!(fb.contains(&r), "{r:?}");
        }
        for r in SbRegime::ALL {
            assert!(sb.contains(&r), "{r:?}");
        }
    }
}
