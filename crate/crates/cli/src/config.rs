//! Run configuration: a JSON file with dotted-path overrides onto the
//! default settings of every command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use supsearch_core::calibration::CalibrationProblem;
use supsearch_core::search::SearchConfig;
use supsearch_core::shock::{ShockExperiment, SweepAxis};
use supsearch_core::Params;
use supsearch_econometrics::fe::FeSettings;
use supsearch_econometrics::prices::PriceDefinition;
use supsearch_econometrics::regress::{OutcomeLevel, PlantedResponse, RegressionSpec};
use supsearch_econometrics::synth::SynthConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Calibrate,
    Shock,
    Sensitivity,
    Synthgen,
    Facts,
    Shiftshare,
    Regress,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Shock => "shock",
            Command::Sensitivity => "sensitivity",
            Command::Synthgen => "synthgen",
            Command::Facts => "facts",
            Command::Shiftshare => "shiftshare",
            Command::Regress => "regress",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    pub json: bool,
    pub csv: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self { json: true, csv: true }
    }
}

impl From<Format> for Emit {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => Emit { json: true, csv: false },
            Format::Csv => Emit { json: false, csv: true },
            Format::Both => Emit { json: true, csv: true },
        }
    }
}

/// Contents of a `--config` file. Every field is optional; command-line
/// flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub emit: Emit,
    /// Dotted paths into [`Settings`], e.g. `"params.f_s": 0.3`.
    pub overrides: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub n_firms: usize,
    /// Also write one JSON line per firm with its search rounds.
    pub traces: bool,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self { n_firms: 5_000, traces: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySettings {
    pub n_firms: usize,
    /// Grid per axis name (`f_s`, `mu`, `p_hi`, `varphi`), ascending.
    pub grids: BTreeMap<String, Vec<f64>>,
}

impl Default for SensitivitySettings {
    fn default() -> Self {
        let p = Params::calibrated();
        let scaled = |v: f64| [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|s| s * v).collect::<Vec<_>>();
        let mut grids = BTreeMap::new();
        grids.insert("f_s".to_string(), scaled(p.f_s));
        grids.insert("mu".to_string(), scaled(p.mu));
        grids.insert("p_hi".to_string(), vec![2.0, 2.25, 2.5, 2.75, 3.0]);
        grids.insert("varphi".to_string(), vec![0.65, 0.7, 0.75, 0.8, 0.85]);
        Self { n_firms: 5_000, grids }
    }
}

impl SensitivitySettings {
    pub fn axes(&self) -> Result<Vec<(SweepAxis, Vec<f64>)>, CliError> {
        self.grids
            .iter()
            .map(|(k, g)| {
                SweepAxis::parse(k).map(|a| (a, g.clone())).map_err(|e| CliError::Validation(e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthgenSettings {
    pub n_firms: usize,
}

impl Default for SynthgenSettings {
    fn default() -> Self {
        Self { n_firms: 200 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Transaction panel CSV read by `facts`, `shiftshare` and `regress`.
    pub panel: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactsSettings {
    pub burn_in: usize,
    pub horizons: Vec<usize>,
    pub granular_k: Vec<usize>,
    pub granular_q: usize,
}

impl Default for FactsSettings {
    fn default() -> Self {
        Self { burn_in: 2, horizons: vec![1, 2, 3], granular_k: vec![5, 10, 20], granular_q: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftShareSettings {
    pub definitions: Vec<PriceDefinition>,
    pub fe: FeSettings,
}

impl Default for ShiftShareSettings {
    fn default() -> Self {
        Self { definitions: vec![PriceDefinition::LogDiff, PriceDefinition::PctDiff], fe: FeSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressSettings {
    pub definition: PriceDefinition,
    pub level: OutcomeLevel,
    pub spec: RegressionSpec,
    /// Replace the observed outcome with a planted response to the shock.
    pub planted: Option<PlantedResponse>,
    pub fe: FeSettings,
}

impl Default for RegressSettings {
    fn default() -> Self {
        Self {
            definition: PriceDefinition::LogDiff,
            level: OutcomeLevel::Instance,
            spec: RegressionSpec::default(),
            planted: None,
            fe: FeSettings::default(),
        }
    }
}

/// Starting parameter point that `params.*` overrides apply to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// This crate's own calibrated point.
    #[default]
    Calibrated,
    /// The fixed reference parameter point.
    Reference,
}

impl Preset {
    pub fn params(self) -> Params {
        match self {
            Preset::Calibrated => Params::calibrated(),
            Preset::Reference => Params::reference(),
        }
    }
}

/// Everything a command can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub base: Preset,
    pub params: Params,
    pub search: SearchConfig,
    pub simulate: SimulateSettings,
    pub calibration: CalibrationProblem,
    pub shock: ShockExperiment,
    pub sensitivity: SensitivitySettings,
    pub synthgen: SynthgenSettings,
    pub synth: SynthConfig,
    pub inputs: Inputs,
    pub facts: FactsSettings,
    pub shiftshare: ShiftShareSettings,
    pub regress: RegressSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            base: Preset::Calibrated,
            params: Params::calibrated(),
            search: SearchConfig::default(),
            simulate: SimulateSettings::default(),
            calibration: CalibrationProblem::reference(),
            shock: ShockExperiment::default(),
            sensitivity: SensitivitySettings::default(),
            synthgen: SynthgenSettings::default(),
            synth: SynthConfig::default(),
            inputs: Inputs::default(),
            facts: FactsSettings::default(),
            shiftshare: ShiftShareSettings::default(),
            regress: RegressSettings::default(),
        }
    }
}

/// Sets `path` (dot-separated, array indices allowed) inside `root`. The
/// path must already exist; `null` leaves may be replaced.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Validation(format!("unknown override key '{path}'"));
    let mut node = root;
    for part in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = value;
    Ok(())
}

impl Settings {
    /// Defaults with the overrides applied and the run seed threaded into
    /// every random component.
    pub fn resolve(overrides: &BTreeMap<String, Value>, seed: u64) -> Result<Self, CliError> {
        let mut defaults = Settings::default();
        if let Some(b) = overrides.get("base") {
            defaults.base = serde_json::from_value(b.clone())
                .map_err(|e| CliError::Validation(format!("base: {e}")))?;
            defaults.params = defaults.base.params();
        }
        let mut tree = serde_json::to_value(defaults).expect("settings serialize");
        for (k, v) in overrides {
            set_path(&mut tree, k, v.clone())?;
        }
        let mut s: Settings =
            serde_json::from_value(tree).map_err(|e| CliError::Validation(format!("overrides: {e}")))?;
        s.search.rng_seed = seed;
        s.calibration.search.rng_seed = seed;
        s.synth.seed = seed;
        if let Some(p) = &mut s.regress.planted {
            p.seed = seed;
        }
        s.params.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        s.search.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(s)
    }
}
