//! End-to-end virtual experiments producing raw scan data.

pub mod calibration;
pub mod interferometer;
pub mod pmd;
pub mod tof;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use calibration::{run_detector_calibration, CalibrationCounts};
pub use interferometer::{run_two_photon_interferometer, InterferometerSettings};
pub use pmd::{dip_envelope, run_pmd_interferogram, PmdSettings};
pub use tof::{run_tof_dispersion, TofBin, TofScanResult, TofSettings};

/// Hex SHA-256 of the JSON form of `value`.
pub fn content_hash<S: Serialize + ?Sized>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data always serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Where a result came from: the seed and hashes of every input spec.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub spec_hashes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(seed: Option<u64>) -> Self {
        Provenance {
            seed,
            spec_hashes: BTreeMap::new(),
        }
    }

    pub fn with<S: Serialize + ?Sized>(mut self, name: &str, spec: &S) -> Self {
        self.spec_hashes.insert(name.to_string(), content_hash(spec));
        self
    }
}

/// Uniform grid `start, start + step, …, stop` (inclusive up to rounding).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Largest grid accepted, to catch unit slips such as a step given in the wrong unit.
const MAX_GRID_POINTS: usize = 10_000_000;

impl ScanGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let g = ScanGrid { start, stop, step };
        g.validate("grid")?;
        Ok(g)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop < self.start {
            return Err(Error::validation(field, "ScanGrid needs finite start ≤ stop"));
        }
        if !(self.step > 0.0) {
            return Err(Error::validation(format!("{field}.step"), "ScanGrid.step must be positive"));
        }
        if self.len() > MAX_GRID_POINTS {
            return Err(Error::validation(field, format!("ScanGrid has more than {MAX_GRID_POINTS} points")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// What the scan axis of an interferogram measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Mirror displacement in µm.
    MirrorUm,
    /// Relative delay in fs.
    DelayFs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: f64,
    /// Measured coincidence rate (noisy unless shot noise is off), counts/s.
    pub rate_hz: f64,
    /// Noise-free rate from the model.
    pub expected_rate_hz: f64,
    /// Local fringe visibility or dip depth at this point.
    pub visibility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferogramScan {
    pub axis: ScanAxis,
    pub temperature_c: Option<f64>,
    pub signal_center_nm: f64,
    pub idler_center_nm: f64,
    /// Fringe period along the axis, when the scan resolves fringes.
    pub fringe_period: Option<f64>,
    /// Coincidence rate far from any interference, counts/s.
    pub baseline_rate_hz: f64,
    pub points: Vec<ScanPoint>,
    pub provenance: Provenance,
}

impl InterferogramScan {
    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate_hz).collect()
    }

    pub fn check_axis(&self) -> Result<()> {
        match self.points.windows(2).position(|w| !(w[1].x > w[0].x)) {
            Some(i) => Err(Error::Config(format!("scan axis not strictly increasing at point {}", i + 1))),
            None => Ok(()),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,rate_hz,expected_rate_hz,visibility\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", p.x, p.rate_hz, p.expected_rate_hz, p.visibility));
        }
        s
    }
}

/// Poisson count with mean `mean`; zero for a non-positive mean.
pub(crate) fn poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = ScanGrid::new(-1.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        let p = g.points();
        assert!((p[20] - 1.0).abs() < 1e-12);
        assert!(ScanGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(ScanGrid::new(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn hashes_track_content() {
        let a = content_hash(&[1.0, 2.0]);
        assert_eq!(a, content_hash(&[1.0, 2.0]));
        assert_ne!(a, content_hash(&[1.0, 2.5]));
        assert_eq!(a.len(), 64);
    }
}
