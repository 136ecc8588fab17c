//! TOML scenario configuration.

use std::fmt;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::{self, DeserializeOwned, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ecosystem::RickerSystem;
use crate::error::{Error, Result};
use crate::growth::CurveKind;
use crate::mdp::{ActionGrid, Horizon, RewardSpec, SolveOptions, StateGrid};
use crate::reference;

/// Named experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    EcosystemFig1,
    ScoresFig2,
    OutcomesFig3,
    AdaptiveFig4,
    CurvesFig5,
    All,
}

impl Scenario {
    pub const PARTS: [Scenario; 5] =
        [Scenario::EcosystemFig1, Scenario::ScoresFig2, Scenario::OutcomesFig3, Scenario::AdaptiveFig4, Scenario::CurvesFig5];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::EcosystemFig1 => "ecosystem_fig1",
            Scenario::ScoresFig2 => "scores_fig2",
            Scenario::OutcomesFig3 => "outcomes_fig3",
            Scenario::AdaptiveFig4 => "adaptive_fig4",
            Scenario::CurvesFig5 => "curves_fig5",
            Scenario::All => "all",
        }
    }

    /// The single scenarios this one runs.
    pub fn parts(self) -> Vec<Scenario> {
        match self {
            Scenario::All => Self::PARTS.to_vec(),
            s => vec![s],
        }
    }

    fn includes(self, other: Scenario) -> bool {
        self == other || self == Scenario::All
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::PARTS
            .iter()
            .chain([Scenario::All].iter())
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

/// Either the keyword `"default"` or an explicit table.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset<T> {
    Default,
    Custom(T),
}

impl<T> Default for Preset<T> {
    fn default() -> Self {
        Preset::Default
    }
}

impl<T: Serialize> Serialize for Preset<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Preset::Default => s.serialize_str("default"),
            Preset::Custom(t) => t.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Preset<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PresetVisitor<T>(PhantomData<T>);

        impl<'de, T: DeserializeOwned> Visitor<'de> for PresetVisitor<T> {
            type Value = Preset<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"default\" or a table")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "default" {
                    Ok(Preset::Default)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<Self::Value, A::Error> {
                T::deserialize(de::value::MapAccessDeserializer::new(map)).map(Preset::Custom)
            }
        }

        d.deserialize_any(PresetVisitor(PhantomData))
    }
}

/// Single-species models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub sigma: f64,
    pub truth: Preset<CurveKind>,
    pub model1: Preset<CurveKind>,
    pub model2: Preset<CurveKind>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self { sigma: reference::SIGMA, truth: Preset::Default, model1: Preset::Default, model2: Preset::Default }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsConfig {
    pub state_points: usize,
    pub state_max: f64,
    pub action_points: usize,
    pub action_max: f64,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self { state_points: 121, state_max: 1.5 * reference::K_MAX, action_points: 101, action_max: 0.8 * reference::K_MAX }
    }
}

impl GridsConfig {
    pub fn states(&self) -> Result<StateGrid> {
        StateGrid::uniform(self.state_points, self.state_max).map_err(|e| Error::config("grids.state_points", e.to_string()))
    }

    pub fn actions(&self) -> Result<ActionGrid> {
        ActionGrid::uniform(self.action_points, self.action_max).map_err(|e| Error::config("grids.action_points", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { tol: d.tol, max_iter: d.max_iter }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter, horizon: Horizon::Infinite }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    /// Prior weight on model 1 in both ensembles.
    pub prior_mass: f64,
    pub ensemble_r: Vec<f64>,
    pub ensemble_k: Vec<f64>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            prior_mass: reference::PRIOR_MASS,
            ensemble_r: reference::ENSEMBLE_R.to_vec(),
            ensemble_k: reference::ENSEMBLE_K.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesConfig {
    /// Abscissae in the growth-curve table.
    pub points: usize,
    /// Seasons in the undiscounted finite-horizon check.
    pub finite_horizon: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self { points: 1000, finite_horizon: 50 }
    }
}

/// Explicit five-species truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoodWebConfig {
    pub system: RickerSystem,
    /// Starting state; the deterministic equilibrium when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcosystemConfig {
    /// Points per effort axis on `[0, 1]`.
    pub effort_points: usize,
    pub horizon: usize,
    pub reps: usize,
    pub delta: f64,
    /// Unfished seasons observed before management.
    pub history: usize,
    pub truth: Preset<FoodWebConfig>,
    pub model_a: Preset<RickerSystem>,
    pub model_b: Preset<RickerSystem>,
}

impl Default for EcosystemConfig {
    fn default() -> Self {
        Self {
            effort_points: 21,
            horizon: 50,
            reps: 100,
            delta: 0.99,
            history: 10,
            truth: Preset::Default,
            model_a: Preset::Default,
            model_b: Preset::Default,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("ftlab-out")
}

fn default_count() -> usize {
    100
}

fn default_x0() -> f64 {
    reference::X0
}

/// A complete run description. Only `scenario` and `seed` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Replicates for scoring, outcomes and VOI.
    #[serde(default = "default_count")]
    pub reps: usize,
    #[serde(default = "default_count")]
    pub horizon: usize,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default)]
    pub reward: RewardSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub curves: CurvesConfig,
    #[serde(default)]
    pub ecosystem: EcosystemConfig,
}

impl ScenarioConfig {
    /// Defaults everywhere except the two required fields.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            seed,
            output: default_output(),
            reps: default_count(),
            horizon: default_count(),
            x0: default_x0(),
            models: ModelsConfig::default(),
            grids: GridsConfig::default(),
            reward: RewardSpec::default(),
            solver: SolverConfig::default(),
            adaptive: AdaptiveConfig::default(),
            curves: CurvesConfig::default(),
            ecosystem: EcosystemConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    /// Checks that do not need any model to be built.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::config("reps", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return Err(Error::config("x0", "must be finite and >= 0"));
        }
        if !(self.models.sigma >= 0.0 && self.models.sigma.is_finite()) {
            return Err(Error::config("models.sigma", "must be finite and >= 0"));
        }
        self.grids.states()?;
        self.grids.actions()?;
        self.reward.validate()?;
        if self.reward.delta >= 1.0 {
            return Err(Error::config("reward.delta", "scenarios solve infinite-horizon problems and need delta < 1"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::config("solver", "tol must be > 0 and max_iter >= 1"));
        }
        if self.scenario.includes(Scenario::AdaptiveFig4) {
            if self.reps < 2 {
                return Err(Error::config("reps", "the adaptive scenario needs at least 2 replicates"));
            }
            let a = &self.adaptive;
            if !(a.prior_mass > 0.0 && a.prior_mass <= 1.0) {
                return Err(Error::config("adaptive.prior_mass", "must lie in (0, 1]"));
            }
            if a.ensemble_r.is_empty() || a.ensemble_k.is_empty() {
                return Err(Error::config("adaptive.ensemble_r", "ensemble axes must be nonempty"));
            }
        }
        if self.curves.points < 2 {
            return Err(Error::config("curves.points", "must be >= 2"));
        }
        if self.curves.finite_horizon == 0 {
            return Err(Error::config("curves.finite_horizon", "must be >= 1"));
        }
        let e = &self.ecosystem;
        if e.effort_points < 2 {
            return Err(Error::config("ecosystem.effort_points", "must be >= 2"));
        }
        if e.horizon == 0 || e.reps == 0 {
            return Err(Error::config("ecosystem.horizon", "horizon and reps must be >= 1"));
        }
        if !(e.delta > 0.0 && e.delta <= 1.0) {
            return Err(Error::config("ecosystem.delta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::config("<file>", format!("{} does not exist", path.display())),
        _ => Error::io(path, e),
    })?;
    ScenarioConfig::from_toml(&text)
}

/// Pull the offending key out of a TOML error when it names one.
fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = ["unknown field `", "missing field `", "unknown variant `"]
        .iter()
        .find_map(|p| msg.split_once(p).and_then(|(_, rest)| rest.split('`').next()).map(str::to_string));
    let key = match key {
        Some(k) if msg.starts_with("unknown variant") => format!("scenario or family `{k}`"),
        Some(k) => k,
        None => "<config>".to_string(),
    };
    Error::config(key, e.to_string().trim_end())
}
