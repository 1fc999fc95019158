use std::fs;
use std::path::{Path, PathBuf};

use ambicon::harness::{HarnessConfig, McSpec, PdeSpec};
use ambicon::hjbi::MarkovAmbiguityField;
use ambicon::model::{validate, ProfileParams, ValidatedModel};
use ambicon::{LinearQuadraticContract, RiskProfile};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsConfig {
    pub agent: [f64; 2],
    pub principal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Contract to evaluate; the second-best optimum (or the first-best
    /// representative when the bands are disjoint) when absent.
    pub contract: Option<LinearQuadraticContract>,
    /// Agent effort; the best response to the contract's slope when absent.
    pub effort: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateauxConfig {
    /// Member of the optimal first-best family; the representative one when
    /// absent.
    pub gamma: Option<f64>,
    /// Shift applied to the fixed transfer for the off-optimum check.
    pub delta_shift: f64,
}

impl Default for GateauxConfig {
    fn default() -> Self {
        GateauxConfig {
            gamma: None,
            delta_shift: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosscheckConfig {
    pub n_perturbations: usize,
}

impl Default for CrosscheckConfig {
    fn default() -> Self {
        CrosscheckConfig { n_perturbations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Scalar config fields a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "r_agent")]
    RAgent,
    #[serde(rename = "r_principal")]
    RPrincipal,
    #[serde(rename = "cost_coeff")]
    CostCoeff,
    #[serde(rename = "effort_cap")]
    EffortCap,
    #[serde(rename = "horizon")]
    Horizon,
    #[serde(rename = "reservation")]
    Reservation,
    #[serde(rename = "agent.lo")]
    AgentLo,
    #[serde(rename = "agent.hi")]
    AgentHi,
    #[serde(rename = "principal.lo")]
    PrincipalLo,
    #[serde(rename = "principal.hi")]
    PrincipalHi,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::RAgent => "r_agent",
            SweepAxis::RPrincipal => "r_principal",
            SweepAxis::CostCoeff => "cost_coeff",
            SweepAxis::EffortCap => "effort_cap",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Reservation => "reservation",
            SweepAxis::AgentLo => "agent.lo",
            SweepAxis::AgentHi => "agent.hi",
            SweepAxis::PrincipalLo => "principal.lo",
            SweepAxis::PrincipalHi => "principal.hi",
        }
    }

    /// Copy of `(profile, bands)` with this field set to `v`.
    pub fn apply(self, p: &ProfileParams, b: &BandsConfig, v: f64) -> (ProfileParams, BandsConfig) {
        let (mut p, mut b) = (*p, *b);
        match self {
            SweepAxis::RAgent => p.r_agent = v,
            SweepAxis::RPrincipal => p.r_principal = v,
            SweepAxis::CostCoeff => p.cost_coeff = v,
            SweepAxis::EffortCap => p.effort_cap = v,
            SweepAxis::Horizon => p.horizon = v,
            SweepAxis::Reservation => p.reservation = v,
            SweepAxis::AgentLo => b.agent[0] = v,
            SweepAxis::AgentHi => b.agent[1] = v,
            SweepAxis::PrincipalLo => b.principal[0] = v,
            SweepAxis::PrincipalHi => b.principal[1] = v,
        }
        (p, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<BandsConfig>,
    /// CSV grid of a state-dependent ambiguity field, relative to the
    /// config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub pde: PdeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default)]
    pub crosscheck: CrosscheckConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub gateaux: GateauxConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// A parsed config together with the directory relative paths resolve
/// against.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    RiskProfile::new(config.profile).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(b) = &config.bands {
        validate(&config.profile, b.agent, b.principal).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if config.mc.n_paths == 0 || config.mc.grid_n < 2 {
        return Err(CliError::Config("mc needs n_paths >= 1 and grid_n >= 2".into()));
    }
    Ok(LoadedConfig {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

impl LoadedConfig {
    /// The validated constant-band model; errors when the command needs
    /// bands and the config has none or also names a field.
    pub fn model(&self, command: &str) -> Result<ValidatedModel, CliError> {
        if self.config.field.is_some() {
            return Err(CliError::Config(format!(
                "{command} takes constant bands; field is only read by pde"
            )));
        }
        let b = self.config.bands.ok_or_else(|| {
            CliError::Config(format!("MissingBands: {command} needs bands.agent and bands.principal"))
        })?;
        validate(&self.config.profile, b.agent, b.principal).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn profile(&self) -> RiskProfile {
        RiskProfile::new(self.config.profile).expect("checked on load")
    }

    /// The field for `pde`: read from CSV or built from constant bands.
    pub fn field(&self) -> Result<MarkovAmbiguityField, CliError> {
        let c = &self.config;
        match (&c.bands, &c.field) {
            (Some(_), Some(_)) => Err(CliError::Config("give either bands or field, not both".into())),
            (None, None) => Err(CliError::Config("MissingBands: pde needs bands or field".into())),
            (None, Some(rel)) => {
                let path = self.base_dir.join(rel);
                let file = fs::File::open(&path)
                    .map_err(|e| CliError::Config(format!("cannot read field {}: {e}", path.display())))?;
                MarkovAmbiguityField::read_csv(file).map_err(|e| CliError::Config(e.to_string()))
            }
            (Some(_), None) => {
                let m = self.model("pde")?;
                MarkovAmbiguityField::constant(&m.agent, &m.principal, m.profile.horizon, c.pde.x_min, c.pde.x_max)
                    .map_err(CliError::from)
            }
        }
    }
}
