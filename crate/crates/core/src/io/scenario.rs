//! Versioned JSON input documents.
//!
//! Units are SI throughout except fields whose name ends in `_kpa`.

use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::FitOptions;
use crate::designer::DesignProblem;
use crate::domain::{MaterialModel, RodSpec};
use crate::lab::{SweepProtocol, Variant};
use crate::solver::{LoadCase, SolverError, SolverSettings};

use super::{read_file, IoError, Result};

pub const SCENARIO_SCHEMA: &str = "everrod.scenario/1";
pub const FIT_SETUP_SCHEMA: &str = "everrod.fit-setup/1";
pub const DESIGN_SCHEMA: &str = "everrod.design/1";

/// What to do with the rod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    PointLoad {
        direction: [f64; 3],
        force_n: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        station_m: Option<f64>,
    },
    Displacement {
        direction: [f64; 3],
        displacement_m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        station_m: Option<f64>,
    },
    Sweep {
        direction: [f64; 3],
        max_displacement_m: f64,
        samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        station_m: Option<f64>,
    },
}

impl Protocol {
    pub fn load_case(&self, rod_length: f64) -> std::result::Result<Option<LoadCase>, SolverError> {
        match *self {
            Protocol::PointLoad {
                direction,
                force_n,
                station_m,
            } => LoadCase::force(station_m.unwrap_or(rod_length), Vector3::from(direction), force_n).map(Some),
            Protocol::Displacement {
                direction,
                displacement_m,
                station_m,
            } => LoadCase::displacement(
                station_m.unwrap_or(rod_length),
                Vector3::from(direction),
                displacement_m,
            )
            .map(Some),
            Protocol::Sweep { .. } => Ok(None),
        }
    }

    pub fn sweep(&self) -> Option<SweepProtocol> {
        match *self {
            Protocol::Sweep {
                direction,
                max_displacement_m,
                samples,
                station_m,
            } => Some(SweepProtocol {
                direction,
                max_displacement: max_displacement_m,
                samples,
                station: station_m,
            }),
            _ => None,
        }
    }
}

/// Battery section of a scenario. Without explicit variants the three
/// stiffness experiments are run on the scenario's rod geometry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Variant>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: String,
    pub rod: RodSpec,
    pub material: MaterialModel,
    pub protocol: Protocol,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<BatteryConfig>,
}

/// Inputs shared by the modulus and reduction-factor fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSetup {
    pub schema_version: String,
    pub rod: RodSpec,
    pub material: MaterialModel,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub schema_version: String,
    pub material: MaterialModel,
    #[serde(default)]
    pub settings: SolverSettings,
    pub problem: DesignProblem,
}

trait Versioned {
    const SCHEMA: &'static str;
    fn schema_version(&self) -> &str;
}

impl Versioned for Scenario {
    const SCHEMA: &'static str = SCENARIO_SCHEMA;
    fn schema_version(&self) -> &str {
        &self.schema_version
    }
}

impl Versioned for FitSetup {
    const SCHEMA: &'static str = FIT_SETUP_SCHEMA;
    fn schema_version(&self) -> &str {
        &self.schema_version
    }
}

impl Versioned for DesignDocument {
    const SCHEMA: &'static str = DESIGN_SCHEMA;
    fn schema_version(&self) -> &str {
        &self.schema_version
    }
}

fn parse<T: DeserializeOwned + Versioned>(bytes: &[u8], origin: &str) -> Result<T> {
    let doc: T = serde_json::from_slice(bytes).map_err(|e| IoError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    if doc.schema_version() != T::SCHEMA {
        return Err(IoError::Parse {
            path: origin.to_string(),
            message: format!(
                "unsupported schema_version {:?}, expected {:?}",
                doc.schema_version(),
                T::SCHEMA
            ),
        });
    }
    Ok(doc)
}

impl Scenario {
    pub fn from_json(bytes: &[u8], origin: &str) -> Result<Self> {
        parse(bytes, origin)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = read_file(path)?;
        Ok((Self::from_json(&bytes, &path.display().to_string())?, bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

impl FitSetup {
    pub fn load(path: &Path) -> Result<Self> {
        parse(&read_file(path)?, &path.display().to_string())
    }
}

impl DesignDocument {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = read_file(path)?;
        Ok((parse(&bytes, &path.display().to_string())?, bytes))
    }
}
