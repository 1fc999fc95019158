use std::io::Write;

use serde::{Deserialize, Serialize};

use super::hamiltonian::{hamiltonian_reduced, HamConfig, HamResult};
use super::{HjbiError, MarkovAmbiguityField};
use crate::analytic::agent_best_response;
use crate::exec::Execution;
use crate::model::RiskProfile;

/// Floor applied to non-positive updates of `psi`.
const PSI_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub n_t: usize,
    pub n_x: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub horizon: f64,
    pub dt: f64,
    pub dx: f64,
}

impl PdeGrid {
    /// `n_t` time steps and `n_x` space nodes on `[x_min, x_max]`.
    pub fn new(n_t: usize, n_x: usize, x_min: f64, x_max: f64, horizon: f64) -> Result<Self, HjbiError> {
        if n_t == 0 || n_x < 5 {
            return Err(HjbiError::InvalidGrid(format!(
                "need n_t >= 1 and n_x >= 5 (got {n_t}, {n_x})"
            )));
        }
        if !(x_min < 0.0 && 0.0 < x_max) {
            return Err(HjbiError::InvalidGrid(format!(
                "x range must straddle 0 (got [{x_min}, {x_max}])"
            )));
        }
        if horizon.is_nan() || horizon <= 0.0 {
            return Err(HjbiError::InvalidGrid(format!("horizon must be > 0 (got {horizon})")));
        }
        Ok(PdeGrid {
            n_t,
            n_x,
            x_min,
            x_max,
            horizon,
            dt: horizon / n_t as f64,
            dx: (x_max - x_min) / (n_x - 1) as f64,
        })
    }

    /// Like [`new`](Self::new) but raises `n_t` until the explicit scheme is
    /// stable for variances up to `max_variance`.
    pub fn cfl_consistent(
        n_t: usize,
        n_x: usize,
        x_min: f64,
        x_max: f64,
        horizon: f64,
        max_variance: f64,
        safety: f64,
    ) -> Result<Self, HjbiError> {
        let g = Self::new(n_t.max(1), n_x, x_min, x_max, horizon)?;
        let limit = safety * g.dx * g.dx / max_variance;
        let needed = (horizon / limit).ceil() as usize;
        Self::new(n_t.max(needed), n_x, x_min, x_max, horizon)
    }

    pub fn cfl_limit(&self, max_variance: f64, safety: f64) -> f64 {
        safety * self.dx * self.dx / max_variance
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_x {
            self.x_max
        } else {
            self.x_min + self.dx * i as f64
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.n_t {
            self.horizon
        } else {
            self.dt * j as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeOptions {
    pub execution: Execution,
    pub ham: HamConfig,
    pub cfl_safety: f64,
    /// Upper bound on the number of stored time slices.
    pub max_slices: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions {
            execution: Execution::default(),
            ham: HamConfig::default(),
            cfl_safety: 0.9,
            max_slices: 512,
        }
    }
}

/// `psi` on a subset of time levels (always including `0` and `T`) and all
/// space nodes, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    pub grid: PdeGrid,
    pub t_levels: Vec<f64>,
    pub x_nodes: Vec<f64>,
    pub psi: Vec<f64>,
    pub z_policy: Vec<f64>,
    pub alpha_policy: Vec<f64>,
    pub principal_value: f64,
    /// Node updates that had to be floored to stay positive.
    pub clamped_nodes: usize,
}

impl ValueSurface {
    pub fn slice(&self, level: usize) -> &[f64] {
        let n = self.x_nodes.len();
        &self.psi[level * n..(level + 1) * n]
    }

    /// Linear interpolation of `psi(0, x)`.
    pub fn psi_at_start(&self, x: f64) -> f64 {
        interp_linear(&self.x_nodes, self.slice(0), x)
    }

    /// Writes `t,x,psi,z_policy,alpha_policy` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(["t", "x", "psi", "z_policy", "alpha_policy"])?;
        let n = self.x_nodes.len();
        for (k, psi) in self.psi.iter().enumerate() {
            out.serialize((
                self.t_levels[k / n],
                self.x_nodes[k % n],
                psi,
                self.z_policy[k],
                self.alpha_policy[k],
            ))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
    let i = j - 1;
    let w = (x - xs[i]) / (xs[j] - xs[i]);
    (1.0 - w) * ys[i] + w * ys[j]
}

/// Time levels kept in the surface: every `stride`-th level plus `T`.
fn stored_levels(n_t: usize, max_slices: usize) -> Vec<usize> {
    let stride = n_t.div_ceil(max_slices.max(2) - 1).max(1);
    let mut v: Vec<usize> = (0..n_t).step_by(stride).collect();
    v.push(n_t);
    v
}

struct NodeUpdate {
    psi: f64,
    clamped: bool,
    err: Option<HjbiError>,
}

/// Explicit update of an interior node. Central differences are used for
/// the gradient while the cell Peclet number allows a monotone scheme;
/// otherwise the gradient is upwinded along the optimised drift.
#[allow(clippy::too_many_arguments)]
fn update_node(
    prev: &[f64],
    i: usize,
    t: f64,
    x: f64,
    grid: &PdeGrid,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    cfg: &HamConfig,
) -> NodeUpdate {
    let (dx, dt) = (grid.dx, grid.dt);
    let (l, c, r) = (prev[i - 1], prev[i], prev[i + 1]);
    let q = (r - 2.0 * c + l) / (dx * dx);
    let (band_a, band_p) = field.bands_at(t, x);
    let ham = |p: f64| hamiltonian_reduced(c, p, q, &band_a, &band_p, profile, cfg);
    let mut res = match ham((r - l) / (2.0 * dx)) {
        Ok(h) => h,
        Err(_) => {
            return NodeUpdate {
                psi: c,
                clamped: false,
                err: Some(HjbiError::EmptyIntersection { t, x }),
            }
        }
    };
    let drift = |h: &HamResult| agent_best_response(h.z_arg, profile) + h.alpha_arg * h.z_arg * profile.r_principal;
    let b = drift(&res);
    if b.abs() * dx > res.alpha_arg {
        let p = if b > 0.0 { (r - c) / dx } else { (c - l) / dx };
        res = ham(p).expect("intersection already checked");
    }
    let next = c + dt * res.value;
    if next > 0.0 && next.is_finite() {
        NodeUpdate {
            psi: next,
            clamped: false,
            err: None,
        }
    } else {
        NodeUpdate {
            psi: PSI_FLOOR,
            clamped: true,
            err: None,
        }
    }
}

/// Quadratic extrapolation to the two boundary nodes.
fn extrapolate_boundaries(psi: &mut [f64]) -> usize {
    let n = psi.len();
    let mut clamped = 0;
    let left = 3.0 * psi[1] - 3.0 * psi[2] + psi[3];
    let right = 3.0 * psi[n - 2] - 3.0 * psi[n - 3] + psi[n - 4];
    for (idx, v) in [(0, left), (n - 1, right)] {
        if v > 0.0 && v.is_finite() {
            psi[idx] = v;
        } else {
            psi[idx] = PSI_FLOOR;
            clamped += 1;
        }
    }
    clamped
}

/// Solves the HJBI equation backward from `psi(T, x) = exp(-R_P x)`.
pub fn solve_pde(
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    grid: &PdeGrid,
    opts: &PdeOptions,
) -> Result<ValueSurface, HjbiError> {
    let rp = profile.r_principal;
    solve_pde_with_terminal(field, profile, grid, opts, |x| (-rp * x).exp())
}

/// As [`solve_pde`] with arbitrary positive terminal data.
pub fn solve_pde_with_terminal<F: Fn(f64) -> f64>(
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    grid: &PdeGrid,
    opts: &PdeOptions,
    terminal: F,
) -> Result<ValueSurface, HjbiError> {
    if (grid.horizon - profile.horizon).abs() > 1e-12 * profile.horizon {
        return Err(HjbiError::InvalidGrid(format!(
            "grid horizon {} differs from the profile horizon {}",
            grid.horizon, profile.horizon
        )));
    }
    let limit = grid.cfl_limit(field.max_variance(), opts.cfl_safety);
    if grid.dt > limit {
        return Err(HjbiError::CflViolation { dt: grid.dt, limit });
    }
    let n = grid.n_x;
    let x_nodes: Vec<f64> = (0..n).map(|i| grid.x(i)).collect();
    let mut cur: Vec<f64> = x_nodes.iter().map(|&x| terminal(x)).collect();
    if cur.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(HjbiError::InvalidGrid(
            "terminal data must be positive and finite".into(),
        ));
    }

    let levels = stored_levels(grid.n_t, opts.max_slices);
    let mut stored: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];
    *stored.last_mut().expect("terminal level") = cur.clone();
    let mut next_store = levels.len() - 1;

    let mut clamped = 0usize;
    let mut updates: Vec<NodeUpdate> = Vec::with_capacity(n);
    for j in (0..grid.n_t).rev() {
        let t_next = grid.t(j + 1);
        updates.clear();
        let prev = &cur;
        updates.extend(opts.execution.map_indexed(n - 2, |k| {
            let i = k + 1;
            update_node(prev, i, t_next, x_nodes[i], grid, field, profile, &opts.ham)
        }));
        let mut new = vec![0.0; n];
        for (k, u) in updates.iter_mut().enumerate() {
            if let Some(e) = u.err.take() {
                return Err(e);
            }
            clamped += u.clamped as usize;
            new[k + 1] = u.psi;
        }
        clamped += extrapolate_boundaries(&mut new);
        cur = new;
        if next_store > 0 && levels[next_store - 1] == j {
            next_store -= 1;
            stored[next_store] = cur.clone();
        }
    }

    let total = grid.n_t * n;
    if clamped as f64 > 1e-3 * total as f64 {
        return Err(HjbiError::NonPositiveValueSurface { clamped, total });
    }

    let mut surface = ValueSurface {
        grid: *grid,
        t_levels: levels.iter().map(|&j| grid.t(j)).collect(),
        x_nodes,
        psi: stored.concat(),
        z_policy: Vec::new(),
        alpha_policy: Vec::new(),
        principal_value: 0.0,
        clamped_nodes: clamped,
    };
    surface.principal_value = -(profile.r_principal * profile.reservation_cert).exp() * surface.psi_at_start(0.0);
    let (z, a) = extract_policy_with(&surface, field, profile, opts)?;
    surface.z_policy = z;
    surface.alpha_policy = a;
    Ok(surface)
}

/// Optimal `z` and worst-case `alpha` at every stored node, recomputed from
/// the surface with central differences (one-sided at the boundary).
pub fn extract_policy(
    surface: &ValueSurface,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
) -> Result<(Vec<f64>, Vec<f64>), HjbiError> {
    extract_policy_with(surface, field, profile, &PdeOptions::default())
}

fn extract_policy_with(
    surface: &ValueSurface,
    field: &MarkovAmbiguityField,
    profile: &RiskProfile,
    opts: &PdeOptions,
) -> Result<(Vec<f64>, Vec<f64>), HjbiError> {
    let n = surface.x_nodes.len();
    let dx = surface.grid.dx;
    let results = opts.execution.map_indexed(surface.psi.len(), |k| {
        let (lev, i) = (k / n, k % n);
        let s = surface.slice(lev);
        let c = i.clamp(1, n - 2);
        let p = (s[c + 1] - s[c - 1]) / (2.0 * dx);
        let q = (s[c + 1] - 2.0 * s[c] + s[c - 1]) / (dx * dx);
        let (t, x) = (surface.t_levels[lev], surface.x_nodes[i]);
        let (band_a, band_p) = field.bands_at(t, x);
        hamiltonian_reduced(s[i], p, q, &band_a, &band_p, profile, &opts.ham)
            .map(|h| (h.z_arg, h.alpha_arg))
            .map_err(|_| HjbiError::EmptyIntersection { t, x })
    });
    let mut z = Vec::with_capacity(results.len());
    let mut a = Vec::with_capacity(results.len());
    for r in results {
        let (zi, ai) = r?;
        z.push(zi);
        a.push(ai);
    }
    Ok((z, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{solve_second_best, z_star_sb};
    use crate::model::{AmbiguityBand, ProfileParams};

    fn unit() -> RiskProfile {
        RiskProfile::new(ProfileParams::unit()).unwrap()
    }

    fn band(lo: f64, hi: f64) -> AmbiguityBand {
        AmbiguityBand::new(lo, hi).unwrap()
    }

    fn setup(a: AmbiguityBand, p: AmbiguityBand, n_x: usize) -> (MarkovAmbiguityField, PdeGrid) {
        let f = MarkovAmbiguityField::constant(&a, &p, 1.0, -6.0, 6.0).unwrap();
        let g = PdeGrid::cfl_consistent(100, n_x, -6.0, 6.0, 1.0, f.max_variance(), 0.9).unwrap();
        (f, g)
    }

    #[test]
    fn grid_construction() {
        let g = PdeGrid::new(10, 401, -6.0, 6.0, 1.0).unwrap();
        assert!((g.dx - 0.03).abs() < 1e-15);
        assert_eq!(g.x(200), 0.0);
        assert_eq!(g.x(400), 6.0);
        assert!(PdeGrid::new(10, 3, -1.0, 1.0, 1.0).is_err());
        assert!(PdeGrid::new(10, 11, 0.0, 1.0, 1.0).is_err());
        let c = PdeGrid::cfl_consistent(10, 401, -6.0, 6.0, 1.0, 2.0, 0.9).unwrap();
        assert!(c.dt <= 0.9 * c.dx * c.dx / 2.0);
        assert!(c.n_t > 10);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let p = unit();
        let f = MarkovAmbiguityField::constant(&band(0.5, 1.5), &band(0.5, 1.0), 1.0, -6.0, 6.0).unwrap();
        let g = PdeGrid::new(10, 101, -6.0, 6.0, 1.0).unwrap();
        let e = solve_pde(&f, &p, &g, &PdeOptions::default()).unwrap_err();
        assert!(matches!(e, HjbiError::CflViolation { .. }));
    }

    #[test]
    fn stored_levels_cover_both_ends() {
        let v = stored_levels(1000, 512);
        assert_eq!(v[0], 0);
        assert_eq!(*v.last().unwrap(), 1000);
        assert!(v.len() <= 512);
        assert_eq!(stored_levels(5, 512), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn coarse_solve_is_close_to_the_closed_form() {
        let p = unit();
        let (a, pb) = (band(0.5, 1.5), band(0.5, 1.0));
        let (f, g) = setup(a, pb, 121);
        let s = solve_pde(&f, &p, &g, &PdeOptions::default()).unwrap();
        let exact = solve_second_best(&p, &a, &pb).principal_value;
        assert!(((s.principal_value - exact) / exact).abs() < 0.01);
        let n = s.x_nodes.len();
        let last = s.t_levels.len() - 1;
        for i in 0..n {
            assert_eq!(s.psi[last * n + i], (-s.x_nodes[i]).exp());
        }
        assert!(s.psi.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn separable_structure_and_policies() {
        let p = unit();
        let (a, pb) = (band(0.5, 1.5), band(0.5, 1.0));
        let (f, g) = setup(a, pb, 121);
        let s = solve_pde(&f, &p, &g, &PdeOptions::default()).unwrap();
        let n = s.x_nodes.len();
        for lev in [0, s.t_levels.len() / 2] {
            // boundary layers from the truncation stay in the outer halves
            let row: Vec<f64> = (n / 4..=3 * n / 4)
                .map(|i| s.psi[lev * n + i] * s.x_nodes[i].exp())
                .collect();
            let (lo, hi) = row.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!((hi - lo) / lo <= 5e-3, "level {lev}: {lo} {hi}");
        }
        let mid = n / 2;
        assert!((s.z_policy[mid] - z_star_sb(1.0, &p)).abs() < 0.01);
        for i in n / 6..5 * n / 6 {
            assert!((s.alpha_policy[i] - 1.0).abs() < 1e-8);
        }
        let (z, al) = extract_policy(&s, &f, &p).unwrap();
        assert_eq!(z, s.z_policy);
        assert_eq!(al, s.alpha_policy);
    }

    #[test]
    fn singleton_band_policy_is_constant() {
        let p = unit();
        let one = band(1.0, 1.0);
        let (f, g) = setup(one, one, 61);
        let s = solve_pde(&f, &p, &g, &PdeOptions::default()).unwrap();
        assert!(s.alpha_policy.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn scheme_is_monotone_in_terminal_data() {
        let p = unit();
        let (f, g) = setup(band(0.5, 1.5), band(0.5, 1.0), 81);
        let o = PdeOptions::default();
        let base = solve_pde_with_terminal(&f, &p, &g, &o, |x| (-x).exp()).unwrap();
        let bumped =
            solve_pde_with_terminal(&f, &p, &g, &o, |x| (-x).exp() + 0.5 * (-(x - 1.0).powi(2)).exp()).unwrap();
        // far from the bump the perturbation is below one ulp, so allow
        // rounding noise from the re-optimised controls
        for (a, b) in base.psi.iter().zip(&bumped.psi) {
            assert!(*b >= a * (1.0 - 1e-12));
        }
        let n = base.x_nodes.len();
        assert!(bumped.slice(0)[n / 2 + 5] > base.slice(0)[n / 2 + 5]);
    }

    #[test]
    fn execution_modes_agree() {
        let p = unit();
        let (f, g) = setup(band(0.5, 1.5), band(0.5, 2.0), 61);
        let seq = PdeOptions {
            execution: Execution::Sequential,
            ..PdeOptions::default()
        };
        let par = PdeOptions {
            execution: Execution::Parallel,
            ..PdeOptions::default()
        };
        assert_eq!(
            solve_pde(&f, &p, &g, &seq).unwrap(),
            solve_pde(&f, &p, &g, &par).unwrap()
        );
    }

    #[test]
    fn surface_csv_layout() {
        let p = unit();
        let one = band(1.0, 1.0);
        let (f, g) = setup(one, one, 21);
        let s = solve_pde(&f, &p, &g, &PdeOptions::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,psi,z_policy,alpha_policy"));
        assert_eq!(lines.count(), s.psi.len());
    }
}
