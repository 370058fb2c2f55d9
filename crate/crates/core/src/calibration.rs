//! Distance decay functions and friction-coefficient estimation.
//!
//! `beta` is always stored positive and applied as a decay: `d^-beta`,
//! `exp(-beta d)`, or `exp(-d² / beta)`. The gravity fit regresses
//! `ln(C / (D S))` on `ln d`; the negated slope is reported as `beta`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("friction coefficient must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("distance floor must be non-negative (positive for power decay), got {0}")]
    InvalidFloor(f64),
    #[error("unknown decay family '{0}' (expected power, exponential or gaussian)")]
    UnknownFamily(String),
    #[error("need at least 3 usable flow records, found {0}")]
    TooFewRecords(usize),
    #[error("all usable records have the same distance; slope is undefined")]
    ZeroDistanceVariance,
    #[error("flow record references unknown zone {0}")]
    UnknownZone(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayFamily {
    Power,
    Exponential,
    Gaussian,
}

impl FromStr for DecayFamily {
    type Err = CalibrationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(Self::Power),
            "exponential" | "exp" => Ok(Self::Exponential),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(CalibrationError::UnknownFamily(other.to_string())),
        }
    }
}

impl fmt::Display for DecayFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Power => "power",
            Self::Exponential => "exponential",
            Self::Gaussian => "gaussian",
        })
    }
}

/// Anything that turns an impedance into an interaction weight. `None`
/// stands for an unreachable pair.
pub trait Decay: Sync {
    fn weight(&self, d: Option<f64>) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Decay for F {
    fn weight(&self, d: Option<f64>) -> f64 {
        d.map_or(0.0, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    family: DecayFamily,
    beta: f64,
    floor: f64,
}

impl DecaySpec {
    pub fn new(family: DecayFamily, beta: f64, floor: f64) -> Result<Self, CalibrationError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(CalibrationError::InvalidBeta(beta));
        }
        let floor_ok = floor.is_finite()
            && match family {
                DecayFamily::Power => floor > 0.0,
                _ => floor >= 0.0,
            };
        if !floor_ok {
            return Err(CalibrationError::InvalidFloor(floor));
        }
        Ok(Self {
            family,
            beta,
            floor,
        })
    }

    pub fn family(&self) -> DecayFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Weight at impedance `d`, floored to [`Self::floor`].
    pub fn eval(&self, d: f64) -> f64 {
        let d = d.max(self.floor);
        match self.family {
            DecayFamily::Power => d.powf(-self.beta),
            DecayFamily::Exponential => (-self.beta * d).exp(),
            DecayFamily::Gaussian => (-(d * d) / self.beta).exp(),
        }
    }
}

impl Decay for DecaySpec {
    fn weight(&self, d: Option<f64>) -> f64 {
        d.map_or(0.0, |d| self.eval(d))
    }
}

/// Free-function form of [`DecaySpec`] evaluation.
pub fn decay(spec: &DecaySpec, d: Option<f64>) -> f64 {
    spec.weight(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub origin_id: String,
    pub destination_id: String,
    pub commuters: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionFit {
    pub beta: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Fits `ln(C/(D·S)) = intercept − beta·ln(d)` by ordinary least squares.
///
/// Records with zero flow, zero demand or supply, or a distance at or below
/// `floor` (or unreachable) are excluded and counted.
pub fn fit_friction<F>(
    flows: &[FlowRecord],
    demand: &HashMap<String, f64>,
    supply: &HashMap<String, f64>,
    distance: F,
    floor: f64,
) -> Result<FrictionFit, CalibrationError>
where
    F: Fn(&str, &str) -> Option<f64>,
{
    let mut xs = Vec::with_capacity(flows.len());
    let mut ys = Vec::with_capacity(flows.len());
    for f in flows {
        let d_i = *demand
            .get(&f.origin_id)
            .ok_or_else(|| CalibrationError::UnknownZone(f.origin_id.clone()))?;
        let s_j = *supply
            .get(&f.destination_id)
            .ok_or_else(|| CalibrationError::UnknownZone(f.destination_id.clone()))?;
        let d = distance(&f.origin_id, &f.destination_id);
        match d {
            Some(d) if f.commuters > 0.0 && d_i > 0.0 && s_j > 0.0 && d > floor && d.is_finite() => {
                xs.push(d.ln());
                ys.push((f.commuters / (d_i * s_j)).ln());
            }
            _ => {}
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(CalibrationError::TooFewRecords(n));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * n as f64 * mean_x.abs().max(1.0) {
        return Err(CalibrationError::ZeroDistanceVariance);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(FrictionFit {
        beta: -slope,
        intercept,
        r_squared,
        n_used: n,
        n_excluded: flows.len() - n,
    })
}

/// Reads `origin_id,destination_id,commuters`.
pub fn read_flows(path: &std::path::Path) -> Result<Vec<FlowRecord>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    reader.deserialize().collect()
}
