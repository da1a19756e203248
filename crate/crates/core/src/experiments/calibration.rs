//! Absolute detector-efficiency calibration from pair correlations.
//!
//! Signal photons go to detector A and idlers to detector B over equal
//! paths. With N pairs, N_A = Nη_A, N_B = Nη_B and N_AB = Nη_Aη_B, so
//! η_A = N_AB/N_B without knowing N. Efficiencies do not depend on
//! wavelength here, so only the emission times of the pairs are simulated.

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::detection::{detect_stream, pair_coincidences, DetectorSpec, TimeTag};
use crate::error::{Error, Result};
use crate::rng::{self, StreamKind};
use crate::source::{SourceSpec, SHARD_SECONDS};
use crate::units::SplitTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCounts {
    pub n_a: u64,
    pub n_b: u64,
    pub n_ab: u64,
    pub duration_s: f64,
    pub window_ns: f64,
    pub dark_a_hz: f64,
    pub dark_b_hz: f64,
    /// Pairs the simulated source emitted. Simulation truth for checks only;
    /// the estimator never reads it.
    pub pairs_emitted: u64,
    pub provenance: Provenance,
}

/// Calibration counts together with the raw tag streams they were counted from.
#[derive(Clone, Debug)]
pub struct CalibrationRun {
    pub counts: CalibrationCounts,
    pub tags_a: Vec<TimeTag>,
    pub tags_b: Vec<TimeTag>,
}

/// Pair emission times over `[0, duration)`, sharded like the full emitter.
pub fn emission_times(spec: &SourceSpec, seed: u64, duration_s: f64) -> Result<Vec<SplitTime>> {
    spec.validate()?;
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::Domain("duration must be non-negative".into()));
    }
    let exp = Exp::new(spec.pair_rate_hz).map_err(|e| Error::Domain(e.to_string()))?;
    let shards = (duration_s / SHARD_SECONDS).ceil() as u64;
    let parts: Vec<Vec<SplitTime>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, StreamKind::Source, k);
            let end = SplitTime::from_seconds(((k + 1) as f64 * SHARD_SECONDS).min(duration_s));
            let mut t = SplitTime::ZERO.add_seconds(k as f64 * SHARD_SECONDS);
            let mut out = Vec::with_capacity((spec.pair_rate_hz * SHARD_SECONDS * 1.1) as usize);
            loop {
                t = t.add_seconds(exp.sample(&mut rng));
                if t >= end {
                    return out;
                }
                out.push(t);
            }
        })
        .collect();
    Ok(parts.concat())
}

pub fn run_detector_calibration(
    source: &SourceSpec,
    det_a: &DetectorSpec,
    det_b: &DetectorSpec,
    duration_s: f64,
    window_ns: f64,
    seed: u64,
) -> Result<CalibrationCounts> {
    run_detector_calibration_with_tags(source, det_a, det_b, duration_s, window_ns, seed).map(|r| r.counts)
}

/// Same as [`run_detector_calibration`] but keeps the tag streams.
pub fn run_detector_calibration_with_tags(
    source: &SourceSpec,
    det_a: &DetectorSpec,
    det_b: &DetectorSpec,
    duration_s: f64,
    window_ns: f64,
    seed: u64,
) -> Result<CalibrationRun> {
    if !(duration_s > 0.0) {
        return Err(Error::validation("calibration.duration_s", "duration must be positive"));
    }
    if !(window_ns > 0.0) {
        return Err(Error::validation("calibration.window_ns", "coincidence window must be positive"));
    }
    det_a.validate_at("detectors.a")?;
    det_b.validate_at("detectors.b")?;
    let times = emission_times(source, seed, duration_s)?;
    let mut ra = rng::stream(seed, StreamKind::Detector, 0);
    let mut rb = rng::stream(seed, StreamKind::Detector, 1);
    let tags_a = detect_stream(&times, det_a, duration_s, &mut ra)?;
    let tags_b = detect_stream(&times, det_b, duration_s, &mut rb)?;
    let n_ab = pair_coincidences(&tags_a, &tags_b, window_ns * 1e-9)?.len() as u64;
    let counts = CalibrationCounts {
        n_a: tags_a.len() as u64,
        n_b: tags_b.len() as u64,
        n_ab,
        duration_s,
        window_ns,
        dark_a_hz: det_a.dark_rate_hz,
        dark_b_hz: det_b.dark_rate_hz,
        pairs_emitted: times.len() as u64,
        provenance: Provenance::new(Some(seed))
            .with("source", source)
            .with("detector_a", det_a)
            .with("detector_b", det_b),
    };
    Ok(CalibrationRun { counts, tags_a, tags_b })
}
