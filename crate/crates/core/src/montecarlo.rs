//! Monte Carlo estimation of exponential utilities under constant (or
//! piecewise-constant) volatility scenarios.
//!
//! Draws are organised in fixed-size chunks. Chunk `c` owns the ChaCha
//! stream `c` of the scenario seed, so the set of draws does not depend on
//! how chunks are scheduled, and per-chunk moments are merged in chunk order.
//! Estimates are therefore bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{gamma_agent, gamma_principal};
use crate::exec::Execution;
use crate::model::{AmbiguityBand, LinearQuadraticContract, RiskProfile};
use crate::neg_exp;
use crate::optimize::uniform_grid;

/// Number of samples (antithetic pairs when enabled) per chunk.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("UnsupportedDirection: {0} is not a linear-quadratic functional of the path")]
    UnsupportedDirection(&'static str),
    #[error("InvalidScenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub alpha: f64,
    pub effort: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(alpha: f64, effort: f64, n_paths: usize, seed: u64) -> Self {
        Scenario {
            alpha,
            effort,
            n_paths,
            seed,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Scenario { alpha, ..*self }
    }

    pub fn with_effort(&self, effort: f64) -> Self {
        Scenario { effort, ..*self }
    }

    fn check(&self, profile: &RiskProfile) -> Result<(), McError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(McError::InvalidScenario(format!(
                "alpha must be > 0 (got {})",
                self.alpha
            )));
        }
        if !(0.0..=profile.effort_cap).contains(&self.effort) {
            return Err(McError::InvalidScenario(format!(
                "effort must lie in [0, {}] (got {})",
                profile.effort_cap, self.effort
            )));
        }
        if self.n_paths == 0 {
            return Err(McError::InvalidScenario("n_paths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSample {
    pub b_t: f64,
    pub qv_t: f64,
    pub effort_integral: f64,
    pub cost_integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of independent samples; an antithetic pair counts once.
    /// Zero marks a closed-form value with no sampling error.
    pub n: u64,
}

impl UtilityEstimate {
    pub fn exact(value: f64) -> Self {
        UtilityEstimate {
            mean: value,
            std_error: 0.0,
            n: 0,
        }
    }

    /// Whether `target` lies within `k` standard errors, with an absolute
    /// floor for estimates whose spread is pure rounding.
    pub fn within(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + floor
    }
}

/// How terminal values are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathMode {
    /// One Gaussian draw per path; exact for constant controls.
    Exact,
    /// Time stepping with `steps` increments. A `schedule` makes the variance
    /// piecewise constant: step `j` uses `schedule[j * len / steps]` in place
    /// of the scenario's alpha.
    Euler { steps: usize, schedule: Option<Vec<f64>> },
}

impl PathMode {
    pub fn euler() -> Self {
        PathMode::Euler {
            steps: 256,
            schedule: None,
        }
    }

    fn dims(&self) -> usize {
        match self {
            PathMode::Exact => 1,
            PathMode::Euler { steps, .. } => (*steps).max(1),
        }
    }

    /// Terminal output and quadratic variation from standard normal draws.
    fn terminal(&self, w: &[f64], effort: f64, alpha: f64, horizon: f64) -> (f64, f64) {
        match self {
            PathMode::Exact => (effort * horizon + (alpha * horizon).sqrt() * w[0], alpha * horizon),
            PathMode::Euler { schedule, .. } => {
                let m = w.len();
                let dt = horizon / m as f64;
                let (mut b, mut qv) = (0.0, 0.0);
                for (j, &x) in w.iter().enumerate() {
                    let al = match schedule {
                        Some(s) if !s.is_empty() => s[j * s.len() / m],
                        _ => alpha,
                    };
                    b += effort * dt + (al * dt).sqrt() * x;
                    qv += al * dt;
                }
                (b, qv)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub antithetic: bool,
    pub execution: Execution,
    pub path_mode: PathMode,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            antithetic: true,
            execution: Execution::default(),
            path_mode: PathMode::Exact,
        }
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    fn estimate(self) -> UtilityEstimate {
        let se = if self.n > 1 {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        UtilityEstimate {
            mean: self.mean,
            std_error: se,
            n: self.n,
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Estimates `K` expectations from common draws.
fn simulate<const K: usize, F>(n_paths: usize, seed: u64, opts: &McOptions, f: F) -> [UtilityEstimate; K]
where
    F: Fn(&[f64]) -> [f64; K] + Sync + Send,
{
    let dims = opts.path_mode.dims();
    let n_samples = if opts.antithetic { n_paths.div_ceil(2) } else { n_paths };
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials = opts.execution.map_indexed(n_chunks, |c| {
        let mut rng = chunk_rng(seed, c);
        let mut w = vec![0.0; dims];
        let mut neg = vec![0.0; dims];
        let mut m = [Moments::default(); K];
        let count = CHUNK.min(n_samples - c * CHUNK);
        for _ in 0..count {
            for x in w.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let v = if opts.antithetic {
                for (n, x) in neg.iter_mut().zip(&w) {
                    *n = -x;
                }
                let (a, b) = (f(&w), f(&neg));
                std::array::from_fn(|k| 0.5 * (a[k] + b[k]))
            } else {
                f(&w)
            };
            for k in 0..K {
                m[k].push(v[k]);
            }
        }
        m
    });
    let total = partials.into_iter().fold([Moments::default(); K], |acc, m| {
        std::array::from_fn(|k| acc[k].merge(m[k]))
    });
    std::array::from_fn(|k| total[k].estimate())
}

/// Terminal samples of the output. With antithetic sampling consecutive
/// samples form `(+N, -N)` pairs.
pub fn sample_terminal(
    scenario: &Scenario,
    profile: &RiskProfile,
    opts: &McOptions,
) -> Result<Vec<TerminalSample>, McError> {
    scenario.check(profile)?;
    let t = profile.horizon;
    let dims = opts.path_mode.dims();
    let per_draw = if opts.antithetic { 2 } else { 1 };
    let n_draws = scenario.n_paths.div_ceil(per_draw);
    let n_chunks = n_draws.div_ceil(CHUNK);
    let make = |w: &[f64]| {
        let (b_t, qv_t) = opts.path_mode.terminal(w, scenario.effort, scenario.alpha, t);
        TerminalSample {
            b_t,
            qv_t,
            effort_integral: scenario.effort * t,
            cost_integral: t * profile.cost(scenario.effort),
        }
    };
    let chunks = opts.execution.map_indexed(n_chunks, |c| {
        let mut rng = chunk_rng(scenario.seed, c);
        let count = CHUNK.min(n_draws - c * CHUNK);
        let mut out = Vec::with_capacity(count * per_draw);
        let mut w = vec![0.0; dims];
        for _ in 0..count {
            for x in w.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            out.push(make(&w));
            if opts.antithetic {
                let neg: Vec<f64> = w.iter().map(|x| -x).collect();
                out.push(make(&neg));
            }
        }
        out
    });
    let mut all: Vec<TerminalSample> = chunks.into_iter().flatten().collect();
    all.truncate(scenario.n_paths);
    Ok(all)
}

/// A terminal payment as a function of the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payoff {
    Q(LinearQuadraticContract),
    /// `inside` when the realised average variance `<B>_T / T` lies in
    /// `band`, `outside` otherwise.
    QvSwitch {
        band: AmbiguityBand,
        inside: f64,
        outside: f64,
    },
}

impl Payoff {
    pub fn eval(&self, b_t: f64, qv_t: f64, horizon: f64) -> f64 {
        match self {
            Payoff::Q(c) => c.payoff(b_t, qv_t),
            Payoff::QvSwitch { band, inside, outside } => {
                // tolerate rounding in the accumulated variance
                let avg = qv_t / horizon;
                let tol = 1e-12 * avg.abs().max(1.0);
                if avg >= band.lo - tol && avg <= band.hi + tol {
                    *inside
                } else {
                    *outside
                }
            }
        }
    }
}

/// Monte Carlo principal and agent utilities of `payoff` under `scenario`.
pub fn estimate_payoff_utilities(
    payoff: &Payoff,
    scenario: &Scenario,
    profile: &RiskProfile,
    opts: &McOptions,
) -> Result<(UtilityEstimate, UtilityEstimate), McError> {
    scenario.check(profile)?;
    let t = profile.horizon;
    let cost = t * profile.cost(scenario.effort);
    let (rp, ra) = (profile.r_principal, profile.r_agent);
    let [u_p, u_a] = simulate(scenario.n_paths, scenario.seed, opts, |w| {
        let (b, qv) = opts.path_mode.terminal(w, scenario.effort, scenario.alpha, t);
        let xi = payoff.eval(b, qv, t);
        [neg_exp(-rp * (b - xi)).0, neg_exp(-ra * (xi - cost)).0]
    });
    Ok((u_p, u_a))
}

pub fn estimate_utilities(
    contract: &LinearQuadraticContract,
    scenario: &Scenario,
    profile: &RiskProfile,
    opts: &McOptions,
) -> Result<(UtilityEstimate, UtilityEstimate), McError> {
    estimate_payoff_utilities(&Payoff::Q(*contract), scenario, profile, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Principal,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub alpha_worst: f64,
    pub value: UtilityEstimate,
}

/// Minimises one party's fixed-alpha utility over a uniform alpha grid.
///
/// Contracts in Q under exact sampling are evaluated in closed form; other
/// payoffs are simulated at every grid point with the template's seed.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_scan(
    payoff: &Payoff,
    effort: f64,
    band: &AmbiguityBand,
    side: Side,
    grid_n: usize,
    template: &Scenario,
    profile: &RiskProfile,
    opts: &McOptions,
) -> Result<ScanResult, McError> {
    if grid_n < 2 {
        return Err(McError::InvalidScenario("grid_n must be at least 2".into()));
    }
    let grid = uniform_grid(band.lo, band.hi, grid_n);
    let mut best: Option<ScanResult> = None;
    for &alpha in &grid {
        let value = match (payoff, &opts.path_mode) {
            (Payoff::Q(c), PathMode::Exact) => UtilityEstimate::exact(match side {
                Side::Principal => gamma_principal(effort, c, alpha, profile).value,
                Side::Agent => gamma_agent(effort, c, alpha, profile).value,
            }),
            _ => {
                let sc = template.with_alpha(alpha).with_effort(effort);
                let (u_p, u_a) = estimate_payoff_utilities(payoff, &sc, profile, opts)?;
                match side {
                    Side::Principal => u_p,
                    Side::Agent => u_a,
                }
            }
        };
        if best.is_none_or(|b| value.mean < b.value.mean) {
            best = Some(ScanResult {
                alpha_worst: alpha,
                value,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Direction `h` of a Gâteaux derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Direction {
    Constant(f64),
    /// `h = B_T`.
    TerminalOutput,
    Custom(LinearQuadraticContract),
    /// Path-dependent; cannot be evaluated from terminal values.
    RunningMax,
}

impl Direction {
    fn as_contract(&self) -> Result<LinearQuadraticContract, McError> {
        match *self {
            Direction::Constant(c) => Ok(LinearQuadraticContract::new(0.0, 0.0, c)),
            Direction::TerminalOutput => Ok(LinearQuadraticContract::new(1.0, 0.0, 0.0)),
            Direction::Custom(c) => Ok(c),
            Direction::RunningMax => Err(McError::UnsupportedDirection("running maximum")),
        }
    }
}

/// Monte Carlo estimate of
/// `E[R_P h(X^P) e^{-R_P (X^P_T - xi(X^P))} - rho R_A h(X^A) e^{-R_A (xi(X^A) - T k(a))}]`
/// with `X^alpha = a t + sqrt(alpha) B` driven by common draws.
///
/// This is minus the derivative of the Lagrangian in direction `h`, so it
/// vanishes at an optimum and is positive when the transfer is too high.
#[allow(clippy::too_many_arguments)]
pub fn gateaux_residual(
    contract: &LinearQuadraticContract,
    direction: Direction,
    effort: f64,
    alpha_p: f64,
    alpha_a: f64,
    rho: f64,
    template: &Scenario,
    profile: &RiskProfile,
    opts: &McOptions,
) -> Result<UtilityEstimate, McError> {
    let h = direction.as_contract()?;
    let sc = template.with_effort(effort);
    sc.with_alpha(alpha_p).check(profile)?;
    sc.with_alpha(alpha_a).check(profile)?;
    if h == LinearQuadraticContract::new(0.0, 0.0, 0.0) {
        return Ok(UtilityEstimate {
            mean: 0.0,
            std_error: 0.0,
            n: sc.n_paths as u64,
        });
    }
    let t = profile.horizon;
    let cost = t * profile.cost(effort);
    let (rp, ra) = (profile.r_principal, profile.r_agent);
    let [r] = simulate(sc.n_paths, sc.seed, opts, |w| {
        let (xp, qp) = opts.path_mode.terminal(w, effort, alpha_p, t);
        let (xa, qa) = opts.path_mode.terminal(w, effort, alpha_a, t);
        let ep = -neg_exp(-rp * (xp - contract.payoff(xp, qp))).0;
        let ea = -neg_exp(-ra * (contract.payoff(xa, qa) - cost)).0;
        [rp * h.payoff(xp, qp) * ep - rho * ra * h.payoff(xa, qa) * ea]
    });
    Ok(r)
}

/// Closed-form `-dF/d delta` at fixed alphas, the oracle for constant
/// directions.
pub fn delta_slope_oracle(
    contract: &LinearQuadraticContract,
    effort: f64,
    alpha_p: f64,
    alpha_a: f64,
    rho: f64,
    profile: &RiskProfile,
) -> f64 {
    let gp = gamma_principal(effort, contract, alpha_p, profile).value;
    let ga = gamma_agent(effort, contract, alpha_a, profile).value;
    -profile.r_principal * gp + rho * profile.r_agent * ga
}
