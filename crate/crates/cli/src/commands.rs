use ambicon::analytic::{
    agent_best_response, degenerate_fb_sequence, sb_contract_in_q, sb_degenerate_bound, solve_first_best,
    solve_second_best, worst_case_utilities_q,
};
use ambicon::harness::{
    crosscheck_first_best, crosscheck_second_best, dominance_scan, run_standard_suite, CrossCheckReport, Metric,
    DEGENERATE_FB_N,
};
use ambicon::hjbi::solve_pde;
use ambicon::model::{validate, SbRegime};
use ambicon::montecarlo::{
    delta_slope_oracle, estimate_utilities, gateaux_residual, worst_case_scan, Direction, Payoff, Side,
};
use ambicon::{Execution, LinearQuadraticContract};
use serde_json::{json, Value};

use crate::config::{BandsConfig, LoadedConfig};
use crate::CliError;

/// Everything a command produces before it is written to disk.
pub struct Outcome {
    pub solution: Value,
    pub report: Vec<CrossCheckReport>,
    /// Extra CSV artifacts as `(file name, contents)`.
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub summary: String,
    /// A verification ran and did not pass.
    pub failed: bool,
}

impl Outcome {
    fn plain(solution: Value, report: CrossCheckReport, summary: String) -> Self {
        Outcome {
            solution,
            report: vec![report],
            files: Vec::new(),
            summary,
            failed: false,
        }
    }
}

fn snake(regime: impl std::fmt::Debug) -> String {
    let name = format!("{regime:?}");
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("solution types serialise")
}

pub fn first_best(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let m = cfg.model("first-best")?;
    let (p, a, pb) = (&m.profile, &m.agent, &m.principal);
    let case = format!("fb_{}", snake(m.fb_regime));
    if m.fb_regime.is_degenerate() {
        let seq = degenerate_fb_sequence(p, a, pb, &DEGENERATE_FB_N)?;
        let mut rep = CrossCheckReport::new(&case, format!("{:?}", m.fb_regime), 0.0);
        rep.push(Metric::info("supremum", 0.0));
        for it in &seq {
            rep.push(Metric::info(format!("sequence_value_n{}", it.n), it.principal_value));
        }
        let summary = format!(
            "first-best {:?}: supremum 0 not attained; sequence value {:.6} at n={}",
            m.fb_regime,
            seq.last().map_or(0.0, |i| i.principal_value),
            seq.last().map_or(0, |i| i.n)
        );
        let sol = json!({ "regime": m.fb_regime, "principal_value": 0.0, "attained": false,
                          "sequence": seq, "warnings": m.warnings });
        return Ok(Outcome::plain(sol, rep, summary));
    }
    let sol = solve_first_best(p, a, pb)?;
    let worst = worst_case_utilities_q(&sol.representative_contract, sol.effort, a, pb, p);
    let mut rep = CrossCheckReport::new(&case, format!("{:?}", sol.regime), sol.principal_value);
    rep.push(Metric::info("principal_value", sol.principal_value));
    rep.push(Metric::info("z_star", sol.z_star));
    rep.push(Metric::info("effort", sol.effort));
    rep.push(Metric::info("rho", sol.rho));
    rep.push(Metric::info("agent_worst_case_value", worst.u_a));
    let summary = format!(
        "first-best {:?}: value {:.6}, z* {:.6}, effort {:.6}",
        sol.regime, sol.principal_value, sol.z_star, sol.effort
    );
    let mut v = to_json(&sol);
    v["attained"] = json!(true);
    v["warnings"] = to_json(&m.warnings);
    Ok(Outcome::plain(v, rep, summary))
}

pub fn second_best(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let m = cfg.model("second-best")?;
    let (p, a, pb) = (&m.profile, &m.agent, &m.principal);
    let sol = solve_second_best(p, a, pb);
    let case = format!("sb_{}", snake(sol.regime));
    let mut rep = CrossCheckReport::new(&case, format!("{:?}", sol.regime), sol.principal_value);
    rep.push(Metric::info("principal_value", sol.principal_value));
    let mut v = to_json(&sol);
    v["warnings"] = to_json(&m.warnings);
    if sol.regime == SbRegime::Degenerate {
        let bounds: Vec<Value> = DEGENERATE_FB_N
            .iter()
            .map(|&n| sb_degenerate_bound(n, p, a, pb).map(|b| json!({ "n": n, "principal_bound": b })))
            .collect::<Result<_, _>>()?;
        v["attained"] = json!(false);
        v["sequence"] = Value::Array(bounds);
    } else {
        let c = sb_contract_in_q(&sol, a, p)?;
        rep.push(Metric::info("z_star", sol.z_star));
        rep.push(Metric::info("gamma_star", sol.gamma_star));
        rep.push(Metric::info("effort", sol.effort));
        v["attained"] = json!(true);
        v["contract_q"] = to_json(&c);
    }
    let summary = format!(
        "second-best {:?}: value {:.6}, z* {:.6}, gamma* {:.6}",
        sol.regime, sol.principal_value, sol.z_star, sol.gamma_star
    );
    Ok(Outcome::plain(v, rep, summary))
}

pub fn pde(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let profile = cfg.profile();
    let field = cfg.field()?;
    let spec = &cfg.config.pde;
    let opts = spec.options();
    let grid = spec.grid(profile.horizon, field.max_variance(), opts.cfl_safety)?;
    let surface = solve_pde(&field, &profile, &grid, &opts)?;
    let mut rep = CrossCheckReport::new("pde", "Field".into(), f64::NAN);
    rep.pde_value = Some(surface.principal_value);
    rep.push(Metric::info("pde_value", surface.principal_value));
    rep.push(Metric::info("clamped_nodes", surface.clamped_nodes as f64));
    let mut v = json!({
        "principal_value": surface.principal_value,
        "grid": surface.grid,
        "clamped_nodes": surface.clamped_nodes,
        "stored_levels": surface.t_levels.len(),
    });
    if let Some(b) = cfg.config.bands {
        let m = validate(&cfg.config.profile, b.agent, b.principal).map_err(|e| CliError::Config(e.to_string()))?;
        let sb = solve_second_best(&m.profile, &m.agent, &m.principal);
        let rel = ((surface.principal_value - sb.principal_value) / sb.principal_value).abs();
        rep.regime = format!("{:?}", sb.regime);
        rep.closed_form = sb.principal_value;
        rep.rel_errors.push(rel);
        rep.push(Metric::info("closed_form_value", sb.principal_value));
        rep.push(Metric::le("pde_rel_error", rel, cfg.config.harness.pde_rel_tol));
        v["closed_form"] = json!(sb.principal_value);
        v["rel_error"] = json!(rel);
    }
    let mut csv = Vec::new();
    surface.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    let summary = format!(
        "pde: value {:.6} on {} x {} nodes",
        surface.principal_value, grid.n_t, grid.n_x
    );
    Ok(Outcome {
        solution: v,
        report: vec![rep],
        files: vec![("surface.csv", csv)],
        summary,
        failed: false,
    })
}

pub fn simulate(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let m = cfg.model("simulate")?;
    let (p, a, pb) = (&m.profile, &m.agent, &m.principal);
    let mc = &cfg.config.mc;
    let (contract, source): (LinearQuadraticContract, &str) = match cfg.config.simulate.contract {
        Some(c) => (c, "config"),
        None if m.sb_regime != SbRegime::Degenerate => {
            (sb_contract_in_q(&solve_second_best(p, a, pb), a, p)?, "second_best")
        }
        None if !m.fb_regime.is_degenerate() => (solve_first_best(p, a, pb)?.representative_contract, "first_best"),
        None => (
            degenerate_fb_sequence(p, a, pb, &[DEGENERATE_FB_N[2]])?[0].contract,
            "first_best_sequence",
        ),
    };
    let effort = cfg
        .config
        .simulate
        .effort
        .unwrap_or_else(|| agent_best_response(contract.z, p));
    let opts = mc.options();
    let payoff = Payoff::Q(contract);
    let tpl = mc.scenario(pb.hi, effort, 0);
    let scan_p = worst_case_scan(&payoff, effort, pb, Side::Principal, mc.grid_n, &tpl, p, &opts)?;
    let scan_a = worst_case_scan(&payoff, effort, a, Side::Agent, mc.grid_n, &tpl, p, &opts)?;
    let (u_p, _) = estimate_utilities(&contract, &mc.scenario(scan_p.alpha_worst, effort, 1), p, &opts)?;
    let (_, u_a) = estimate_utilities(&contract, &mc.scenario(scan_a.alpha_worst, effort, 2), p, &opts)?;
    let h = &cfg.config.harness;
    let mut rep = CrossCheckReport::new("simulate", source.into(), scan_p.value.mean);
    rep.mc_value = Some((u_p.mean, u_p.std_error));
    rep.push(Metric::info("principal_alpha_worst", scan_p.alpha_worst));
    rep.push(Metric::info("agent_alpha_worst", scan_a.alpha_worst));
    rep.push(Metric::info("principal_mc_mean", u_p.mean));
    rep.push(Metric::info("principal_mc_std_error", u_p.std_error));
    rep.push(Metric::info("agent_mc_mean", u_a.mean));
    rep.push(Metric::info("agent_mc_std_error", u_a.std_error));
    for (name, est, target) in [
        ("principal_mc_abs_error", &u_p, scan_p.value.mean),
        ("agent_mc_abs_error", &u_a, scan_a.value.mean),
    ] {
        rep.push(Metric::le(
            name,
            (est.mean - target).abs(),
            h.se_mult * est.std_error + h.mc_abs_floor,
        ));
    }
    let summary = format!(
        "simulate ({source}): principal {:.6} +- {:.2e} at alpha {:.4}, agent {:.6} +- {:.2e} at alpha {:.4}",
        u_p.mean, u_p.std_error, scan_p.alpha_worst, u_a.mean, u_a.std_error, scan_a.alpha_worst
    );
    let v = json!({
        "contract": contract, "contract_source": source, "effort": effort,
        "principal": { "alpha_worst": scan_p.alpha_worst, "closed_form": scan_p.value.mean, "mc": u_p },
        "agent": { "alpha_worst": scan_a.alpha_worst, "closed_form": scan_a.value.mean, "mc": u_a },
    });
    Ok(Outcome::plain(v, rep, summary))
}

pub fn gateaux_check(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let m = cfg.model("gateaux-check")?;
    let (p, a, pb) = (&m.profile, &m.agent, &m.principal);
    if m.fb_regime.is_degenerate() {
        return Err(CliError::Config(format!(
            "gateaux-check needs intersecting bands (regime {:?} has no optimum)",
            m.fb_regime
        )));
    }
    let sol = solve_first_best(p, a, pb)?;
    let gc = &cfg.config.gateaux;
    let c = match gc.gamma {
        Some(g) => sol.contract_with_gamma(g, p)?,
        None => sol.representative_contract,
    };
    let (ap, aa) = (sol.worst_alpha_p, sol.worst_alpha_a);
    let h = &cfg.config.harness;
    let mc = &cfg.config.mc;
    let opts = mc.options();
    let tpl = mc.scenario(ap, sol.effort, 0);
    let mut rep = CrossCheckReport::new(
        &format!("gateaux_{}", snake(sol.regime)),
        format!("{:?}", sol.regime),
        0.0,
    );
    let mut rows = Vec::new();
    for (name, dir) in [
        ("constant", Direction::Constant(1.0)),
        ("terminal_output", Direction::TerminalOutput),
    ] {
        let r = gateaux_residual(&c, dir, sol.effort, ap, aa, sol.rho, &tpl, p, &opts)?;
        rep.push(Metric::le(
            format!("residual_{name}"),
            r.mean.abs(),
            h.se_mult * r.std_error + h.mc_abs_floor,
        ));
        rows.push(json!({ "direction": name, "contract": "optimum", "residual": r }));
    }
    let shifted = LinearQuadraticContract::new(c.z, c.gamma, c.delta + gc.delta_shift);
    let r = gateaux_residual(
        &shifted,
        Direction::Constant(1.0),
        sol.effort,
        ap,
        aa,
        sol.rho,
        &tpl,
        p,
        &opts,
    )?;
    let oracle = delta_slope_oracle(&shifted, sol.effort, ap, aa, sol.rho, p);
    let z = if r.std_error > 0.0 {
        r.mean.abs() / r.std_error
    } else {
        f64::INFINITY
    };
    rep.push(Metric::le(
        "shifted_inverse_z_score",
        1.0 / z,
        1.0 / h.gateaux_separation,
    ));
    rep.push(Metric::flag(
        "shifted_sign_matches_oracle",
        r.mean.signum() == oracle.signum(),
    ));
    rep.push(Metric::le(
        "shifted_oracle_abs_error",
        (r.mean - oracle).abs(),
        h.se_mult * r.std_error + h.mc_abs_floor,
    ));
    rows.push(
        json!({ "direction": "constant", "contract": "delta_shifted", "delta_shift": gc.delta_shift,
                      "residual": r, "oracle": oracle }),
    );
    let summary = format!(
        "gateaux-check {:?}: {} (shifted residual {:.3e}, {:.1} SE)",
        sol.regime,
        if rep.pass { "pass" } else { "FAIL" },
        r.mean,
        z
    );
    let failed = !rep.pass;
    Ok(Outcome {
        solution: json!({ "regime": sol.regime, "contract": c, "alpha_p": ap, "alpha_a": aa,
                          "rho": sol.rho, "checks": rows }),
        report: vec![rep],
        files: Vec::new(),
        summary,
        failed,
    })
}

pub fn crosscheck(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let c = &cfg.config;
    let profile = cfg.profile();
    let reports = if c.bands.is_some() {
        let m = cfg.model("crosscheck")?;
        let (a, pb) = (&m.agent, &m.principal);
        let sb_case = format!("sb_{}", snake(m.sb_regime));
        let fb_case = format!("fb_{}", snake(m.fb_regime));
        let mut v = vec![
            crosscheck_first_best(&fb_case, &profile, a, pb, &c.mc, &c.harness)?,
            crosscheck_second_best(&sb_case, &profile, a, pb, &c.pde, &c.mc, &c.harness)?,
        ];
        if !m.fb_regime.is_degenerate() && c.crosscheck.n_perturbations > 0 {
            v.push(dominance_scan(
                "dominance",
                &profile,
                a,
                pb,
                c.crosscheck.n_perturbations,
                c.mc.seed,
                c.harness.perturbation_radius,
                &c.mc,
                &c.harness,
            )?);
        }
        v
    } else {
        run_standard_suite(
            &profile,
            &c.pde,
            &c.mc,
            &c.harness,
            c.crosscheck.n_perturbations,
            Execution::default(),
        )?
    };
    let failed_cases: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.case_id.as_str()).collect();
    let summary = if failed_cases.is_empty() {
        format!("crosscheck: {} cases passed", reports.len())
    } else {
        format!(
            "crosscheck: {} of {} cases FAILED ({})",
            failed_cases.len(),
            reports.len(),
            failed_cases.join(", ")
        )
    };
    let failed = !failed_cases.is_empty();
    Ok(Outcome {
        solution: to_json(&reports),
        report: reports,
        files: Vec::new(),
        summary,
        failed,
    })
}

pub fn sweep(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let c = &cfg.config;
    cfg.model("sweep")?;
    let sw = c
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("MissingSweep: sweep needs sweep.axis and sweep.values".into()))?;
    if sw.values.is_empty() {
        return Err(CliError::Config("sweep.values must not be empty".into()));
    }
    let bands: BandsConfig = c.bands.expect("checked by model()");
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    out.write_record([
        "axis",
        "value",
        "fb_regime",
        "fb_value",
        "sb_regime",
        "sb_value",
        "sb_z_star",
        "sb_gamma_star",
    ])
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut rows = Vec::new();
    let mut rep = CrossCheckReport::new(&format!("sweep_{}", sw.axis.name()), "Sweep".into(), f64::NAN);
    for &x in &sw.values {
        let (params, b) = sw.axis.apply(&c.profile, &bands, x);
        let m = validate(&params, b.agent, b.principal)
            .map_err(|e| CliError::Config(format!("{}={x}: {e}", sw.axis.name())))?;
        let fb_value = if m.fb_regime.is_degenerate() {
            0.0
        } else {
            solve_first_best(&m.profile, &m.agent, &m.principal)?.principal_value
        };
        let sb = solve_second_best(&m.profile, &m.agent, &m.principal);
        out.write_record([
            sw.axis.name().to_string(),
            format!("{:?}", x),
            format!("{:?}", m.fb_regime),
            format!("{:?}", fb_value),
            format!("{:?}", sb.regime),
            format!("{:?}", sb.principal_value),
            format!("{:?}", sb.z_star),
            format!("{:?}", sb.gamma_star),
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
        rep.push(Metric::info(format!("fb_value@{x}"), fb_value));
        rep.push(Metric::info(format!("sb_value@{x}"), sb.principal_value));
        rows.push(json!({ "value": x, "fb_regime": m.fb_regime, "fb_value": fb_value,
                          "sb_regime": sb.regime, "sb_value": sb.principal_value,
                          "sb_z_star": sb.z_star, "sb_gamma_star": sb.gamma_star }));
    }
    let csv = out.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let summary = format!("sweep over {}: {} points", sw.axis.name(), sw.values.len());
    Ok(Outcome {
        solution: json!({ "axis": sw.axis, "rows": rows }),
        report: vec![rep],
        files: vec![("sweep.csv", csv)],
        summary,
        failed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_are_snake_case() {
        assert_eq!(snake(SbRegime::Degenerate), "degenerate");
        assert_eq!(snake(ambicon::FbRegime::BoundaryTops), "boundary_tops");
    }
}
