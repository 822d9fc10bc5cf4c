//! Pipeline configuration document (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mdpov::econometrics::{BartikConfig, ModelSpec};
use mdpov::entropy::{Capital, CapitalGrouping, WeightingMode};
use mdpov::mpi::{IndicatorScheme, IndicatorSpec, MissingPolicy, DEFAULT_K};
use mdpov::olg::{OlgParams, Sweep};
use mdpov::synth::MpiProfile;
use mdpov::Panel;
use serde::{Deserialize, Serialize};

/// k values of the robustness grid.
pub const K_PRESETS: [f64; 3] = [0.2, 0.33, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub mpi: MpiConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub olg: OlgConfig,
    #[serde(default)]
    pub models: Vec<NamedModel>,
    #[serde(default)]
    pub iv: Option<IvConfig>,
    #[serde(default)]
    pub winsorize: Option<WinsorConfig>,
    #[serde(default)]
    pub psm: Option<PsmConfig>,
    #[serde(default)]
    pub chow: Option<ChowConfig>,
    #[serde(default)]
    pub synth: Option<toml::Table>,
}

fn d_entity() -> String {
    "hh".into()
}
fn d_time() -> String {
    "wave".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Household panel; relative paths resolve against the config file.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    #[serde(default = "d_entity")]
    pub entity: String,
    #[serde(default = "d_time")]
    pub time: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            panel: None,
            entity: d_entity(),
            time: d_time(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    #[default]
    Baseline,
    WithIncome,
    Custom,
}

impl std::str::FromStr for SchemeChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "with_income" => Ok(Self::WithIncome),
            "custom" => Ok(Self::Custom),
            other => bail!("unknown scheme `{other}` (expected baseline, with_income or custom)"),
        }
    }
}

fn d_k() -> Vec<f64> {
    vec![DEFAULT_K]
}
fn d_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpiConfig {
    #[serde(default)]
    pub scheme: SchemeChoice,
    /// Indicators of a custom scheme.
    #[serde(default)]
    pub indicators: Vec<IndicatorSpec>,
    #[serde(default = "d_k")]
    pub k: Vec<f64>,
    #[serde(default)]
    pub missing: MissingPolicy,
    /// Column whose values define subgroups for the decomposition.
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default = "d_step")]
    pub curve_step: f64,
    /// Synthetic sample used when no input panel is given.
    #[serde(default)]
    pub sample: Option<MpiProfile>,
}

impl Default for MpiConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeChoice::default(),
            indicators: Vec::new(),
            k: d_k(),
            missing: MissingPolicy::default(),
            group: None,
            curve_step: d_step(),
            sample: None,
        }
    }
}

impl MpiConfig {
    pub fn scheme(&self) -> Result<IndicatorScheme> {
        Ok(match self.scheme {
            SchemeChoice::Baseline => IndicatorScheme::baseline(),
            SchemeChoice::WithIncome => IndicatorScheme::with_income(),
            SchemeChoice::Custom => {
                if self.indicators.is_empty() {
                    bail!("custom scheme selected but no [[mpi.indicators]] given");
                }
                IndicatorScheme::new("custom", self.indicators.clone(), DEFAULT_K)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    /// Capital grouping; the six-capital grouping when empty.
    #[serde(default)]
    pub capitals: Vec<Capital>,
    #[serde(default)]
    pub mode: WeightingMode,
}

impl EntropyConfig {
    pub fn grouping(&self) -> Result<CapitalGrouping> {
        if self.capitals.is_empty() {
            Ok(CapitalGrouping::six_capitals())
        } else {
            Ok(CapitalGrouping::new(self.capitals.clone())?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlgConfig {
    #[serde(default = "OlgParams::reference")]
    pub params: OlgParams,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
}

impl Default for OlgConfig {
    fn default() -> Self {
        Self {
            params: OlgParams::reference(),
            sweeps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvConfig {
    #[serde(default = "d_iv_name")]
    pub name: String,
    pub bartik: BartikConfig,
    pub first: ModelSpec,
    pub second: ModelSpec,
    /// Defaults to the Bartik instrument built for `first.response`.
    #[serde(default)]
    pub instrument: Option<String>,
}

fn d_iv_name() -> String {
    "joint".into()
}

impl IvConfig {
    pub fn instrument(&self) -> String {
        self.instrument
            .clone()
            .unwrap_or_else(|| self.bartik.instrument_name(&self.first.response))
    }
}

fn d_lower() -> f64 {
    0.01
}
fn d_upper() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinsorConfig {
    pub columns: Vec<String>,
    #[serde(default = "d_lower")]
    pub lower: f64,
    #[serde(default = "d_upper")]
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsmConfig {
    pub treatment: String,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub caliper: Option<f64>,
    /// Model (by name) refitted on the matched sample.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChowConfig {
    pub model: String,
    pub group: String,
    /// Label permutations; 0 skips the permutation test.
    #[serde(default)]
    pub permutations: usize,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file and resolves relative input paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.input.panel {
            if p.is_relative() {
                cfg.input.panel = Some(base.join(p));
            }
        }
        if let Some(o) = &cfg.out {
            if o.is_relative() {
                cfg.out = Some(base.join(o));
            }
        }
        Ok(cfg)
    }

    pub fn model(&self, name: &str) -> Result<&NamedModel> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .with_context(|| format!("no model named `{name}` in [[models]]"))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                bail!("duplicate model name `{}`", m.name);
            }
            m.spec.validate().with_context(|| format!("model `{}`", m.name))?;
        }
        for &k in &self.mpi.k {
            if !(k > 0.0 && k <= 1.0) {
                bail!("k = {k} outside (0, 1]");
            }
        }
        if let Some(w) = &self.winsorize {
            if !(0.0..=1.0).contains(&w.lower) || !(0.0..=1.0).contains(&w.upper) || w.lower >= w.upper {
                bail!("winsorisation bounds ({}, {}) must satisfy 0 <= lower < upper <= 1", w.lower, w.upper);
            }
        }
        if let Some(c) = &self.chow {
            self.model(&c.model)?;
        }
        if let Some(p) = &self.psm {
            if let Some(m) = &p.model {
                self.model(m)?;
            }
        }
        Ok(())
    }
}

/// Fails with the first referenced column the panel lacks.
pub fn require_columns<'a>(panel: &Panel, columns: impl IntoIterator<Item = &'a str>, context: &str) -> Result<()> {
    for c in columns {
        if !panel.has_column(c) {
            bail!("{context}: unknown column `{c}`");
        }
    }
    Ok(())
}
