//! Experiment configuration: a flat TOML file with dotted keys.

use crate::averaging::TestFunction;
use crate::error::{KpzError, Result};
use crate::grid::Point;
use crate::initial::{InitialCondition, TabulatedField, DEFAULT_LIPSCHITZ_MAX};
use crate::noise::NoiseMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_side")]
    pub side_len: f64,
    /// Step count of a single-scale run; sweeps use the coupled ladder.
    pub steps: Option<usize>,
}

fn default_n() -> usize {
    512
}
fn default_side() -> f64 {
    8.0
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: default_n(), side_len: default_side(), steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H0Config {
    #[serde(default = "default_kind")]
    pub kind: String,
    pub c: Option<f64>,
    pub amplitude: Option<f64>,
    pub s0: Option<f64>,
    pub center: Option<Point>,
    /// CSV file with `n` rows of `n` values (tabulated kind).
    pub file: Option<String>,
    /// Torus side the table spans; defaults to the grid side.
    pub side_len: Option<f64>,
    pub lipschitz_max: Option<f64>,
}

fn default_kind() -> String {
    "zero".into()
}

impl Default for H0Config {
    fn default() -> Self {
        H0Config {
            kind: default_kind(),
            c: None,
            amplitude: None,
            s0: None,
            center: None,
            file: None,
            side_len: None,
            lipschitz_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default = "default_profile")]
    pub kind: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_profile() -> String {
    "standard-bump".into()
}
fn default_resolution() -> usize {
    256
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { kind: default_profile(), resolution: default_resolution() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    #[serde(default = "default_g_kind")]
    pub kind: String,
    #[serde(default = "one")]
    pub radius: f64,
    pub center: Option<Point>,
}

fn default_g_kind() -> String {
    "bump".into()
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolymerConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bridge endpoints per side of the Markov-identity grid spacing, in cells.
    #[serde(default = "default_bridge_stride")]
    pub bridge_stride: usize,
    #[serde(default = "default_bridge_paths")]
    pub bridge_paths: usize,
}

fn default_paths() -> usize {
    100_000
}
fn default_bridge_stride() -> usize {
    2
}
fn default_bridge_paths() -> usize {
    200
}

impl Default for PolymerConfig {
    fn default() -> Self {
        PolymerConfig {
            paths: default_paths(),
            seed: 0,
            bridge_stride: default_bridge_stride(),
            bridge_paths: default_bridge_paths(),
        }
    }
}

/// Tolerances of the report checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackConfig {
    /// Relative band around the predicted variance.
    #[serde(default = "default_var_slack")]
    pub variance_rel: f64,
    /// Slack of the monotone-trend verdicts.
    #[serde(default)]
    pub trend: f64,
    /// Combined-SE multiple of the polymer cross-checks.
    #[serde(default = "default_se")]
    pub se_multiple: f64,
}

fn default_var_slack() -> f64 {
    0.3
}
fn default_se() -> f64 {
    4.0
}

impl Default for SlackConfig {
    fn default() -> Self {
        SlackConfig { variance_rel: default_var_slack(), trend: 0.0, se_multiple: default_se() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsList {
    One(f64),
    Many(Vec<f64>),
}

impl EpsList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EpsList::One(e) => vec![*e],
            EpsList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub beta: f64,
    #[serde(default = "half")]
    pub gamma: f64,
    pub eps: EpsList,
    #[serde(default = "half")]
    pub t: f64,
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the torus midpoint.
    pub center: Option<Point>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub h0: H0Config,
    #[serde(default)]
    pub profile: ProfileConfig,
    pub g: Option<TestFunctionConfig>,
    #[serde(default)]
    pub polymer: PolymerConfig,
    #[serde(default)]
    pub slack: SlackConfig,
    #[serde(default = "default_out")]
    pub out_dir: String,
}

fn half() -> f64 {
    0.5
}
fn default_out() -> String {
    "kpzlab-out".into()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| KpzError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative table paths resolve against the config file
        if let (Some(f), Some(dir)) = (&cfg.h0.file, path.parent()) {
            let p = Path::new(f);
            if p.is_relative() {
                cfg.h0.file = Some(dir.join(p).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    pub fn center(&self) -> Point {
        self.center.unwrap_or([self.grid.side_len / 2.0, self.grid.side_len / 2.0])
    }

    pub fn eps_values(&self) -> Vec<f64> {
        self.eps.values()
    }

    pub fn lipschitz_max(&self) -> f64 {
        self.h0.lipschitz_max.unwrap_or(DEFAULT_LIPSCHITZ_MAX)
    }

    /// The initial condition described by `h0.*`.
    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let h = &self.h0;
        let missing = |k: &str| KpzError::Config(vec![format!("h0.kind = \"{}\" requires h0.{k}", h.kind)]);
        Ok(match h.kind.as_str() {
            "zero" => InitialCondition::Zero,
            "constant" => InitialCondition::Constant { c: h.c.ok_or_else(|| missing("c"))? },
            "gaussian_bump" => InitialCondition::GaussianBump {
                amplitude: h.amplitude.ok_or_else(|| missing("amplitude"))?,
                s0: h.s0.ok_or_else(|| missing("s0"))?,
                center: h.center.unwrap_or(self.center()),
            },
            "tabulated" => {
                let file = h.file.as_ref().ok_or_else(|| missing("file"))?;
                InitialCondition::Tabulated(read_table(Path::new(file), h.side_len.unwrap_or(self.grid.side_len))?)
            }
            other => {
                return Err(KpzError::Config(vec![format!(
                    "unknown h0.kind \"{other}\" (supported: zero, constant, gaussian_bump, tabulated)"
                )]))
            }
        })
    }

    pub fn test_function(&self) -> Result<Option<TestFunction>> {
        let Some(g) = &self.g else { return Ok(None) };
        let center = g.center.unwrap_or(self.center());
        match g.kind.as_str() {
            "bump" => Ok(Some(TestFunction::Bump { center, radius: g.radius })),
            "dipole" => Ok(Some(TestFunction::Dipole { center, radius: g.radius })),
            other => Err(KpzError::Config(vec![format!("unknown g.kind \"{other}\" (supported: bump, dipole)")])),
        }
    }

    /// Every problem that does not need the simulation grid built.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.replicas == 0 {
            out.push("replicas must be at least 1".into());
        }
        let eps = self.eps_values();
        if eps.is_empty() {
            out.push("eps must list at least one value".into());
        }
        if !(self.t > 0.0) {
            out.push(format!("t = {} must be positive", self.t));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            out.push(format!("gamma = {} must lie in [0, 1]", self.gamma));
        }
        if let Some(g) = &self.g {
            let r = self.eps_values().iter().fold(0.0f64, |m, e| m.max(e.powf(1.0 - self.gamma)));
            if g.radius + r > self.grid.side_len / 4.0 {
                out.push(format!(
                    "test function radius {} plus averaging radius {r} exceeds side_len/4 = {}",
                    g.radius,
                    self.grid.side_len / 4.0
                ));
            }
        }
        match self.initial_condition() {
            Ok(ic) => out.extend(ic.violations()),
            Err(KpzError::Config(v)) => out.extend(v),
            Err(e) => out.push(e.to_string()),
        }
        if let Err(KpzError::Config(v)) = self.test_function() {
            out.extend(v);
        }
        out
    }

    /// SHA-256 of the canonical JSON form, leaving out the output directory.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&ExperimentConfig { out_dir: String::new(), ..self.clone() })
            .expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Read an `n x n` CSV table (rows are y, columns are x).
pub fn read_table(path: &Path, side_len: f64) -> Result<TabulatedField> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        rows += 1;
        for tok in line.split(',') {
            values.push(tok.trim().parse::<f64>().map_err(|e| KpzError::Parse(format!("{}: {e}", path.display())))?);
        }
    }
    TabulatedField::new(rows, side_len, values)
}
