use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::DecayFamily;

use super::PipelineError;

/// Friction coefficient: a fixed positive value or estimated from flows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSetting {
    Fixed(f64),
    Calibrate,
}

impl Serialize for BetaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BetaSetting::Fixed(b) => s.serialize_f64(*b),
            BetaSetting::Calibrate => s.serialize_str("calibrate"),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(b) => Ok(BetaSetting::Fixed(b)),
            Repr::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for BetaSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("calibrate") {
            return Ok(BetaSetting::Calibrate);
        }
        s.parse::<f64>()
            .map(BetaSetting::Fixed)
            .map_err(|_| format!("beta must be a number or \"calibrate\", got '{s}'"))
    }
}

/// Everything a run needs. Relative paths in a config file are resolved
/// against the file's directory when it is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub zones: Option<PathBuf>,
    #[serde(default = "default_zone_id")]
    pub zone_id_property: String,
    pub parcels: Option<PathBuf>,
    #[serde(default = "default_parcel_id")]
    pub parcel_id_property: String,
    #[serde(default = "default_land_use")]
    pub land_use_property: String,
    pub workers: Option<PathBuf>,
    pub jobs: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    #[serde(default)]
    pub directed: bool,
    pub flows: Option<PathBuf>,
    /// Per-hour matrix files; `{hour}` expands to `00`..`23`.
    pub hourly_costs: Option<String>,
    /// Derive per-hour travel-time matrices from the edge file's
    /// `t00..t23` columns.
    #[serde(default)]
    pub network_hourly: bool,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default = "default_decay")]
    pub decay: DecayFamily,
    #[serde(default = "default_beta")]
    pub beta: BetaSetting,
    /// Optional per-hour coefficients for the hourly scenarios.
    pub hourly_beta: Option<Vec<f64>>,
    /// Impedance floor in cost-matrix units; half a cell by default.
    pub distance_floor: Option<f64>,
    /// Node snapping radius in meters; two cells by default.
    pub snap_tolerance: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Percentile of the cube used for the reported isosurface.
    #[serde(default = "default_iso_percentile")]
    pub iso_percentile: f64,
    /// Hours to export as per-slice tables.
    #[serde(default)]
    pub slice_hours: Vec<u8>,
    /// Write the isosurface as an OBJ mesh.
    #[serde(default)]
    pub export_mesh: bool,
}

fn default_zone_id() -> String {
    "zone_id".into()
}

fn default_parcel_id() -> String {
    "parcel_id".into()
}

fn default_land_use() -> String {
    "land_use".into()
}

fn default_cell_size() -> f64 {
    500.0
}

fn default_decay() -> DecayFamily {
    DecayFamily::Power
}

fn default_beta() -> BetaSetting {
    BetaSetting::Calibrate
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_iso_percentile() -> f64 {
    95.0
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.resolve_relative_to(&base);
        Ok(cfg)
    }

    /// Makes every relative path relative to `base` instead.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.zones,
            &mut self.parcels,
            &mut self.workers,
            &mut self.jobs,
            &mut self.nodes,
            &mut self.edges,
            &mut self.flows,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if let Some(pattern) = &mut self.hourly_costs {
            if Path::new(pattern.as_str()).is_relative() {
                *pattern = base.join(&*pattern).display().to_string();
            }
        }
    }

    pub fn floor(&self) -> f64 {
        self.distance_floor.unwrap_or(self.cell_size / 2.0)
    }

    pub fn tolerance(&self) -> f64 {
        self.snap_tolerance.unwrap_or(2.0 * self.cell_size)
    }

    pub fn time_varying(&self) -> bool {
        self.network_hourly || self.hourly_costs.is_some()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
