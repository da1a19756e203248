//! Single-photon detector: efficiency, dark counts, Gaussian jitter and
//! non-paralyzable dead time.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::truncated_standard_normal;
use crate::units::SplitTime;

/// Jitter is Gaussian truncated at this many standard deviations.
pub const JITTER_SIGMA_LIMIT: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorId(pub u32);

impl std::fmt::Display for DetectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub id: DetectorId,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_ps: f64,
    pub dead_time_ns: f64,
}

impl DetectorSpec {
    pub fn ideal(id: u32) -> Self {
        DetectorSpec {
            id: DetectorId(id),
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            jitter_ps: 0.0,
            dead_time_ns: 0.0,
        }
    }

    /// Cooled InGaAs-like fixture values (not measured data).
    pub fn ingaas(id: u32) -> Self {
        DetectorSpec {
            id: DetectorId(id),
            efficiency: 0.2,
            dark_rate_hz: 1e3,
            jitter_ps: 100.0,
            dead_time_ns: 50.0,
        }
    }

    /// Checks the invariants; `prefix` is the config path of this detector.
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::validation(
                format!("{prefix}.efficiency"),
                format!("DetectorSpec.efficiency must lie in [0, 1], got {}", self.efficiency),
            ));
        }
        let non_negative = [
            ("dark_rate_hz", "DetectorSpec.dark_rate", self.dark_rate_hz),
            ("jitter_ps", "DetectorSpec.jitter_sigma", self.jitter_ps),
            ("dead_time_ns", "DetectorSpec.dead_time", self.dead_time_ns),
        ];
        for (key, name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(
                    format!("{prefix}.{key}"),
                    format!("{name} must be non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("detector")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagOrigin {
    Photon,
    Dark,
}

/// A detection timestamp. `origin` is simulation truth and is never read by estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeTag {
    pub t: SplitTime,
    pub detector: DetectorId,
    pub origin: TagOrigin,
}

/// Per-detector sequential state: last arrival seen and last firing time.
#[derive(Clone, Copy, Debug, Default)]
pub struct DetectorState {
    last_arrival: Option<SplitTime>,
    last_fire: Option<SplitTime>,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }
}

fn register<R: Rng + ?Sized>(
    arrival: SplitTime,
    origin: TagOrigin,
    spec: &DetectorSpec,
    rng: &mut R,
    state: &mut DetectorState,
) -> Result<Option<TimeTag>> {
    if let Some(prev) = state.last_arrival {
        if arrival < prev {
            return Err(Error::Ordering {
                previous: prev.as_f64(),
                current: arrival.as_f64(),
            });
        }
    }
    state.last_arrival = Some(arrival);
    // The efficiency draw is always consumed so that the random stream does
    // not depend on the dead-time history.
    let clicked = match origin {
        TagOrigin::Photon => rng.random::<f64>() < spec.efficiency,
        TagOrigin::Dark => true,
    };
    if !clicked {
        return Ok(None);
    }
    if let Some(fire) = state.last_fire {
        if arrival.seconds_since(fire) < spec.dead_time_ns * 1e-9 {
            return Ok(None);
        }
    }
    state.last_fire = Some(arrival);
    let t = if spec.jitter_ps > 0.0 {
        arrival.add_seconds(spec.jitter_ps * 1e-12 * truncated_standard_normal(rng, JITTER_SIGMA_LIMIT))
    } else {
        arrival
    };
    Ok(Some(TimeTag {
        t,
        detector: spec.id,
        origin,
    }))
}

/// Presents one photon arrival to the detector.
///
/// The photon clicks with probability η unless it falls within the dead time
/// of the previous click (non-paralyzable: blocked arrivals do not extend it).
/// The recorded time carries truncated Gaussian jitter. Dead time acts on the
/// physical firing times; recorded tags are separated by at least the dead
/// time whenever jitter is zero.
pub fn detect<R: Rng + ?Sized>(
    arrival: SplitTime,
    spec: &DetectorSpec,
    rng: &mut R,
    state: &mut DetectorState,
) -> Result<Option<TimeTag>> {
    register(arrival, TagOrigin::Photon, spec, rng, state)
}

/// Raw dark-count arrival times over `[0, duration)`: a Poisson process at `dark_rate_hz`.
pub fn generate_dark_counts<R: Rng + ?Sized>(
    spec: &DetectorSpec,
    duration_s: f64,
    rng: &mut R,
) -> Result<Vec<SplitTime>> {
    if !(duration_s >= 0.0) {
        return Err(Error::Domain("duration must be non-negative".into()));
    }
    if spec.dark_rate_hz <= 0.0 {
        return Ok(Vec::new());
    }
    let exp = Exp::new(spec.dark_rate_hz).map_err(|e| Error::Domain(e.to_string()))?;
    let end = SplitTime::from_seconds(duration_s);
    let mut t = SplitTime::ZERO;
    let mut out = Vec::with_capacity((spec.dark_rate_hz * duration_s * 1.1) as usize + 8);
    loop {
        t = t.add_seconds(exp.sample(rng));
        if t >= end {
            return Ok(out);
        }
        out.push(t);
    }
}

/// Runs a full detector over sorted photon arrivals, merging in dark counts
/// over `[0, duration)`. The returned tags are sorted by recorded time.
pub fn detect_stream<R: Rng + ?Sized>(
    arrivals: &[SplitTime],
    spec: &DetectorSpec,
    duration_s: f64,
    rng: &mut R,
) -> Result<Vec<TimeTag>> {
    spec.validate()?;
    let darks = generate_dark_counts(spec, duration_s, rng)?;
    let mut state = DetectorState::new();
    let mut tags = Vec::with_capacity(arrivals.len() / 2 + darks.len());
    let (mut i, mut j) = (0, 0);
    while i < arrivals.len() || j < darks.len() {
        let take_photon = j >= darks.len() || (i < arrivals.len() && arrivals[i] <= darks[j]);
        let (t, origin) = if take_photon {
            i += 1;
            (arrivals[i - 1], TagOrigin::Photon)
        } else {
            j += 1;
            (darks[j - 1], TagOrigin::Dark)
        };
        if let Some(tag) = register(t, origin, spec, rng, &mut state)? {
            tags.push(tag);
        }
    }
    tags.sort_by_key(|t| t.t);
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ideal_detector_is_exact() {
        let spec = DetectorSpec::ideal(0);
        let mut st = DetectorState::new();
        let t = SplitTime::new(2, 0.123_456_789_012_345);
        let tag = detect(t, &spec, &mut rng(1), &mut st).unwrap().unwrap();
        assert_eq!(tag.t, t);
        assert_eq!(tag.origin, TagOrigin::Photon);
    }

    #[test]
    fn efficiency_is_binomial() {
        let spec = DetectorSpec {
            efficiency: 0.2,
            ..DetectorSpec::ideal(0)
        };
        let mut st = DetectorState::new();
        let mut r = rng(2);
        let n = 1_000_000;
        let mut k = 0usize;
        for i in 0..n {
            if detect(SplitTime::from_seconds(i as f64 * 1e-6), &spec, &mut r, &mut st)
                .unwrap()
                .is_some()
            {
                k += 1;
            }
        }
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        assert!((k as f64 - 2e5).abs() < 3.0 * sigma, "{k}");
    }

    #[test]
    fn dead_time_blocks_second_arrival() {
        let spec = DetectorSpec {
            dead_time_ns: 50.0,
            ..DetectorSpec::ideal(0)
        };
        let mut st = DetectorState::new();
        let mut r = rng(3);
        let a = detect(SplitTime::from_seconds(1e-6), &spec, &mut r, &mut st).unwrap();
        let b = detect(SplitTime::from_seconds(1e-6 + 10e-9), &spec, &mut r, &mut st).unwrap();
        assert!(a.is_some() && b.is_none());
        // Non-paralyzable: 55 ns after the first click the detector is live again.
        let c = detect(SplitTime::from_seconds(1e-6 + 55e-9), &spec, &mut r, &mut st).unwrap();
        assert!(c.is_some());
    }

    #[test]
    fn arrivals_must_not_regress() {
        let spec = DetectorSpec::ideal(0);
        let mut st = DetectorState::new();
        let mut r = rng(4);
        detect(SplitTime::from_seconds(1.0), &spec, &mut r, &mut st).unwrap();
        assert!(matches!(
            detect(SplitTime::from_seconds(0.5), &spec, &mut r, &mut st),
            Err(Error::Ordering { .. })
        ));
    }

    #[test]
    fn dark_counts_are_poisson() {
        let none = DetectorSpec::ideal(0);
        assert!(generate_dark_counts(&none, 10.0, &mut rng(5)).unwrap().is_empty());
        let spec = DetectorSpec {
            dark_rate_hz: 1e4,
            ..DetectorSpec::ideal(0)
        };
        let d = generate_dark_counts(&spec, 10.0, &mut rng(6)).unwrap();
        assert!((d.len() as f64 - 1e5).abs() < 3.0 * 1e5f64.sqrt(), "{}", d.len());
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn merged_stream_is_sorted_and_separated() {
        let spec = DetectorSpec {
            efficiency: 0.5,
            dark_rate_hz: 2e5,
            jitter_ps: 0.0,
            dead_time_ns: 100.0,
            id: DetectorId(3),
        };
        let arrivals: Vec<SplitTime> = (0..200_000).map(|i| SplitTime::from_seconds(i as f64 * 5e-7)).collect();
        let tags = detect_stream(&arrivals, &spec, 0.1, &mut rng(7)).unwrap();
        assert!(tags.iter().any(|t| t.origin == TagOrigin::Dark));
        for w in tags.windows(2) {
            assert!(w[1].t.seconds_since(w[0].t) >= 100e-9 - 1e-18);
        }
        assert!(tags.iter().all(|t| t.detector == DetectorId(3)));
    }

    #[test]
    fn jittered_stream_is_sorted() {
        let spec = DetectorSpec {
            jitter_ps: 500.0,
            ..DetectorSpec::ideal(1)
        };
        let arrivals: Vec<SplitTime> = (0..10_000).map(|i| SplitTime::from_seconds(i as f64 * 1e-10)).collect();
        let tags = detect_stream(&arrivals, &spec, 0.0, &mut rng(8)).unwrap();
        assert_eq!(tags.len(), arrivals.len());
        assert!(tags.windows(2).all(|w| w[0].t <= w[1].t));
        let max_shift = tags
            .iter()
            .zip(&arrivals)
            .map(|(t, a)| t.t.seconds_since(*a).abs())
            .fold(0.0, f64::max);
        assert!(max_shift < 1e-8);
    }

    #[test]
    fn efficiency_out_of_range_names_field() {
        let spec = DetectorSpec {
            efficiency: 1.2,
            ..DetectorSpec::ideal(0)
        };
        let err = spec.validate_at("detectors.a").unwrap_err().to_string();
        assert!(err.contains("DetectorSpec.efficiency") && err.contains("detectors.a.efficiency"), "{err}");
    }
}
