use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::affinity::{SimilarityWeights, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::geometry::CameraModel;
use crate::inter_frame::TrackerConfig;
use crate::intra_frame::IntraFrameConfig;

/// Camera intrinsics and mounting shared by the simulator and the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub focal_length: f64,
    pub principal_row: f64,
    pub principal_col: f64,
    pub mount_height: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            focal_length: 1500.0,
            principal_row: 540.0,
            principal_col: 960.0,
            mount_height: 1.5,
            image_width: 1920.0,
            image_height: 1080.0,
        }
    }
}

impl CameraConfig {
    /// Camera with zero pitch.
    pub fn model(&self) -> Result<CameraModel> {
        CameraModel::new(
            self.focal_length,
            self.principal_row,
            self.principal_col,
            self.mount_height,
        )
    }
}

/// Settings of the fusion, tracking, training and evaluation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Pitch assumed before any alignment, radians.
    pub nominal_pitch: f64,
    /// Weight of each new pitch measurement in the running estimate.
    pub dca_smoothing: f64,
    pub intra: IntraFrameConfig,
    pub similarity: SimilarityWeights,
    pub dan: TrainConfig,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nominal_pitch: 0.0,
            dca_smoothing: 0.3,
            intra: IntraFrameConfig::default(),
            similarity: SimilarityWeights::default(),
            dan: TrainConfig::default(),
            tracker: TrackerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Camera in its pre-alignment state.
    pub fn initial_camera(&self, camera: &CameraConfig) -> Result<CameraModel> {
        camera
            .model()?
            .with_pitch(self.nominal_pitch)?
            .with_smoothing(self.dca_smoothing)
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub camera: CameraConfig,
    pub scenario: ScenarioConfig,
    pub run: RunConfig,
}

fn parse_value(raw: &str) -> toml::Value {
    // Bare words that are not valid TOML values are taken as strings.
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override to a parsed TOML table, creating intermediate
/// tables as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Parses TOML text, applies overrides in order and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.model()?;
        if !(self.camera.image_width > 0.0 && self.camera.image_height > 0.0) {
            return Err(Error::Config("camera image size must be positive".into()));
        }
        self.scenario.validate()?;
        self.run.initial_camera(&self.camera)?;
        self.run.similarity.validate()?;
        let t = &self.run.tracker;
        if !(0.0..=1.0).contains(&t.smoothing) || !(0.0..=1.0).contains(&t.vision_weight) {
            return Err(Error::Config("tracker smoothing and vision_weight must be in [0, 1]".into()));
        }
        if self.run.dan.hidden == 0 {
            return Err(Error::Config("dan.hidden must be positive".into()));
        }
        Ok(())
    }

    /// Canonical TOML rendering, used for hashing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
