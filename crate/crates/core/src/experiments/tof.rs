//! Time-of-flight dispersion measurement.
//!
//! The local photon of each pair takes a short reference path with a fixed
//! delay, passes an ideal wavelength demultiplexer and is detected on the
//! channel of its wavelength bin (one detector per channel, all with the
//! parameters of detector A). The companion crosses the fiber under test to
//! detector B. For every coincidence the delay t_B − t_A is accumulated in the
//! bin of the local photon, so the mean delay traces the fiber group delay at
//! the conjugate wavelength plus a constant.

use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::detection::{detect_stream, pair_coincidences, DetectorId, DetectorSpec, TimeTag};
use crate::error::{Error, Result};
use crate::fiber::{propagate, FiberSpec};
use crate::rng::{self, StreamKind};
use crate::source::{emit_pairs, SourceSpec};
use crate::units::{conjugate_wavelength, Photon, SplitTime, Wavelength};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofSettings {
    /// Lower edge of the first wavelength bin of the local photon, nm.
    pub lambda_start_nm: f64,
    /// Upper edge of the last bin, nm.
    pub lambda_stop_nm: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width_nm: f64,
    pub duration_s: f64,
    #[serde(default = "default_window")]
    pub window_ns: f64,
    /// Delay of the local reference path. When absent it is matched to the
    /// fiber delay at the conjugate of the grid center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_delay_ps: Option<f64>,
}

fn default_bin_width() -> f64 {
    4.0
}

fn default_window() -> f64 {
    10.0
}

impl TofSettings {
    pub fn num_bins(&self) -> usize {
        ((self.lambda_stop_nm - self.lambda_start_nm) / self.bin_width_nm + 1e-9).round() as usize
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lambda_start_nm + (k as f64 + 0.5) * self.bin_width_nm
    }

    fn bin_of(&self, lambda_nm: f64) -> Option<usize> {
        let u = (lambda_nm - self.lambda_start_nm) / self.bin_width_nm;
        if u >= 0.0 && u < self.num_bins() as f64 {
            Some(u as usize)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_nm > 0.0) {
            return Err(Error::validation("tof.bin_width_nm", "bin width must be positive"));
        }
        if !(self.lambda_stop_nm > self.lambda_start_nm) {
            return Err(Error::validation("tof.lambda_stop_nm", "grid must have stop > start"));
        }
        let n = (self.lambda_stop_nm - self.lambda_start_nm) / self.bin_width_nm;
        if (n - n.round()).abs() > 1e-6 || n.round() < 1.0 {
            return Err(Error::validation(
                "tof.bin_width_nm",
                "grid span must be a whole number of bins",
            ));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::validation("tof.duration_s", "duration must be positive"));
        }
        if !(self.window_ns > 0.0) {
            return Err(Error::validation("tof.window_ns", "coincidence window must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TofBin {
    /// Bin center of the local photon, nm.
    pub lambda_local_nm: f64,
    /// Conjugate of the bin center, the wavelength that crossed the fiber.
    pub lambda_conjugate_nm: f64,
    pub mean_dt_ps: f64,
    /// Sample standard deviation of Δt within the bin.
    pub std_dt_ps: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TofScanResult {
    pub lambda_pump_nm: f64,
    pub fiber: FiberSpec,
    pub wdm_bin_width_nm: f64,
    pub reference_delay_ps: f64,
    pub duration_s: f64,
    pub singles_local: u64,
    pub singles_remote: u64,
    pub bins: Vec<TofBin>,
    pub provenance: Provenance,
}

impl TofScanResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda_local_nm,lambda_conjugate_nm,mean_dt_ps,std_dt_ps,count\n");
        for b in &self.bins {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lambda_local_nm, b.lambda_conjugate_nm, b.mean_dt_ps, b.std_dt_ps, b.count
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

/// Runs the time-of-flight experiment. Detector A's id is the base id of the
/// channel detectors: channel k records with id `A + k`.
pub fn run_tof_dispersion(
    source: &SourceSpec,
    fiber: &FiberSpec,
    detectors: (&DetectorSpec, &DetectorSpec),
    settings: &TofSettings,
    seed: u64,
) -> Result<TofScanResult> {
    let (det_a, det_b) = detectors;
    source.validate()?;
    settings.validate()?;
    det_a.validate_at("detectors.a")?;
    det_b.validate_at("detectors.b")?;
    let profile = source.profile()?;
    let (lo, hi) = profile.support;
    if settings.lambda_start_nm < lo || settings.lambda_stop_nm > hi {
        return Err(Error::Config(format!(
            "wavelength grid [{}, {}] nm lies outside the local photon band [{lo:.3}, {hi:.3}] nm",
            settings.lambda_start_nm, settings.lambda_stop_nm
        )));
    }
    let pump = source.pump();
    let conj = |l: f64| -> Result<f64> {
        Ok(conjugate_wavelength(pump, Wavelength::new(l)?)
            .map_err(|e| Error::Config(e.to_string()))?
            .nm())
    };
    // The companion band is the image of the whole local support.
    let companion_lo = conj(hi)?;
    let companion_hi = if lo > source.lambda_pump_nm { conj(lo)? } else { f64::INFINITY };
    fiber
        .validate_band(companion_lo, companion_hi.min(1e5))
        .map_err(|e| Error::Config(format!("companion band outside fiber model validity: {e}")))?;

    let nbins = settings.num_bins();
    let center = 0.5 * (settings.lambda_start_nm + settings.lambda_stop_nm);
    let reference_delay_ps = match settings.reference_delay_ps {
        Some(d) => d,
        None => fiber.group_delay(conj(center)?),
    };
    if u32::try_from(det_a.id.0 as u64 + nbins as u64).is_err() {
        return Err(Error::Config("channel detector ids overflow".into()));
    }
    if (det_a.id.0..det_a.id.0 + nbins as u32).contains(&det_b.id.0) {
        return Err(Error::Config(format!(
            "detector B id {} collides with channel ids {}..{}",
            det_b.id.0,
            det_a.id.0,
            det_a.id.0 + nbins as u32
        )));
    }

    let pairs = emit_pairs(source, seed, settings.duration_s)?;

    let mut local: Vec<Vec<SplitTime>> = vec![Vec::new(); nbins];
    let mut remote: Vec<SplitTime> = Vec::with_capacity(pairs.len());
    let mut fiber_rng = rng::stream(seed, StreamKind::Fiber, 0);
    for p in &pairs {
        if let Some(k) = settings.bin_of(p.lambda_signal.nm()) {
            local[k].push(p.t_emit.add_seconds(reference_delay_ps * 1e-12));
        }
        if let Some(arr) = propagate(p, fiber, Photon::Idler, &mut fiber_rng) {
            remote.push(arr.t);
        }
    }
    drop(pairs);
    remote.sort_unstable();

    let mut tags_a: Vec<TimeTag> = Vec::new();
    for (k, arrivals) in local.iter().enumerate() {
        let spec = DetectorSpec {
            id: DetectorId(det_a.id.0 + k as u32),
            ..*det_a
        };
        let mut r = rng::stream(seed, StreamKind::Detector, 1 + k as u64);
        tags_a.extend(detect_stream(arrivals, &spec, settings.duration_s, &mut r)?);
    }
    drop(local);
    tags_a.sort_by(|x, y| x.t.cmp(&y.t).then(x.detector.0.cmp(&y.detector.0)));
    let mut rb = rng::stream(seed, StreamKind::Detector, 0);
    let tags_b = detect_stream(&remote, det_b, settings.duration_s, &mut rb)?;

    let mut acc = vec![Welford::default(); nbins];
    for c in pair_coincidences(&tags_a, &tags_b, settings.window_ns * 1e-9)? {
        let k = (tags_a[c.a].detector.0 - det_a.id.0) as usize;
        acc[k].push(c.dt_s * 1e12);
    }

    let bins = acc
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let l = settings.bin_center(k);
            Ok(TofBin {
                lambda_local_nm: l,
                lambda_conjugate_nm: conj(l)?,
                mean_dt_ps: if w.n > 0 { w.mean } else { f64::NAN },
                std_dt_ps: w.std(),
                count: w.n,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TofScanResult {
        lambda_pump_nm: source.lambda_pump_nm,
        fiber: *fiber,
        wdm_bin_width_nm: settings.bin_width_nm,
        reference_delay_ps,
        duration_s: settings.duration_s,
        singles_local: tags_a.len() as u64,
        singles_remote: tags_b.len() as u64,
        bins,
        provenance: Provenance::new(Some(seed))
            .with("source", source)
            .with("fiber", fiber)
            .with("detector_a", det_a)
            .with("detector_b", det_b)
            .with("settings", settings),
    })
}
