//! The JSON result record written next to the raw CSVs of every run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Protocol, RunConfig};
use crate::error::{Error, Result};
use crate::estimation::{DelaySample, DipFit, DispersionFit, EfficiencyEstimate, EnvelopeFit, RelativeDelayFit};
use crate::experiments::CalibrationCounts;

pub const TOOL_NAME: &str = "twinphoton";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RECORD_SCHEMA: u32 = 1;

/// A raw data file written by the run, relative to the record's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFileRef {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    pub temperature_c: f64,
    pub signal_center_nm: f64,
    pub idler_center_nm: f64,
    pub raw_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeFit>,
    /// τ(idler) − τ(signal) read off the envelope peak, ps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Estimates {
    Tof {
        singles_local: u64,
        singles_remote: u64,
        coincidences: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dispersion: Option<DispersionFit>,
    },
    Interferometer {
        temperatures: Vec<TemperatureEstimate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        relative_delay: Option<RelativeDelayFit>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda0_nm: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda0_stderr_nm: Option<f64>,
    },
    Pmd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dip: Option<DipFit>,
    },
    Calibrate {
        counts: CalibrationCounts,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_a: Option<EfficiencyEstimate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_b: Option<EfficiencyEstimate>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    pub tool: String,
    pub tool_version: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub config_hash: String,
    pub started_utc: String,
    pub finished_utc: String,
    pub estimates: Estimates,
    /// Estimation failures; the raw data are still written and referenced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimation_errors: Vec<String>,
    pub raw_files: Vec<RawFileRef>,
    /// The resolved config, enough to re-run.
    pub config: RunConfig,
}

impl ResultRecord {
    pub fn estimation_failed(&self) -> bool {
        !self.estimation_errors.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("record line {}: {e}", e.line())))
    }
}

pub fn read_record(path: &Path) -> Result<ResultRecord> {
    let text = std::fs::read_to_string(path)?;
    ResultRecord::from_json(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
