//! Polarization mode dispersion from a type II coincidence interferogram.
//!
//! Both photons of a type II pair cross the birefringent sample and meet on
//! a beam splitter after a scanned relative delay ε. When ε cancels the
//! sample's differential group delay the two-photon amplitudes overlap and
//! coincidences drop:
//!
//! R(ε) = B₀ [1 − V g(ε − Δτ)],
//!
//! where g is the normalized Fourier transform of the downconversion
//! spectrum. A Gaussian spectrum of FWHM Δω gives a Gaussian g with
//! σ_t = 1/σ_ω. The rectangular shape stands for a rectangular two-photon
//! time amplitude of length T = 2π/Δω, whose spectrum is sinc² with first
//! zeros at ±Δω and whose g is a triangle of base 2T.

use serde::{Deserialize, Serialize};

use super::{poisson, InterferogramScan, Provenance, ScanAxis, ScanGrid, ScanPoint};
use crate::error::{Error, Result};
use crate::fiber::BirefringentElement;
use crate::numeric::FWHM_PER_SIGMA;
use crate::rng::{self, StreamKind};
use crate::source::{PhaseMatching, SourceSpec, SpectralShape};
use crate::units::bandwidth_to_angular;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmdSettings {
    /// Relative delay grid, fs.
    pub delay_fs: ScanGrid,
    /// Mean counts per point on the baseline.
    #[serde(default = "default_counts")]
    pub counts_per_point: f64,
    #[serde(default = "default_true")]
    pub shot_noise: bool,
    /// Dip visibility V.
    #[serde(default = "default_visibility")]
    pub visibility: f64,
}

fn default_counts() -> f64 {
    2.5e4
}

fn default_true() -> bool {
    true
}

fn default_visibility() -> f64 {
    1.0
}

impl PmdSettings {
    pub fn validate(&self) -> Result<()> {
        self.delay_fs.validate("pmd.delay_fs")?;
        if !(self.counts_per_point > 0.0) {
            return Err(Error::validation("pmd.counts_per_point", "counts per point must be positive"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::validation("pmd.visibility", "visibility must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Envelope g(t) for a spectrum of FWHM (or full width) `delta_omega` rad/s, t in fs.
pub fn dip_envelope(shape: SpectralShape, delta_omega: f64, t_fs: f64) -> f64 {
    let t = t_fs * 1e-15;
    match shape {
        SpectralShape::Gaussian => {
            let sigma_w = delta_omega / FWHM_PER_SIGMA;
            (-0.5 * (sigma_w * t).powi(2)).exp()
        }
        SpectralShape::Rectangular => {
            let width = std::f64::consts::TAU / delta_omega;
            (1.0 - t.abs() / width).max(0.0)
        }
    }
}

/// Width parameter w of the envelope in fs: σ_t for Gaussian, half-base for triangular.
pub fn envelope_width_fs(shape: SpectralShape, delta_omega: f64) -> f64 {
    match shape {
        SpectralShape::Gaussian => FWHM_PER_SIGMA / delta_omega * 1e15,
        SpectralShape::Rectangular => std::f64::consts::TAU / delta_omega * 1e15,
    }
}

/// Spectral width Δω of a source, rad/s.
pub fn source_bandwidth(source: &SourceSpec) -> f64 {
    bandwidth_to_angular(source.signal_center_nm, source.signal_fwhm_nm)
}

pub fn run_pmd_interferogram(
    source: &SourceSpec,
    sample: &BirefringentElement,
    settings: &PmdSettings,
    seed: u64,
) -> Result<InterferogramScan> {
    if source.phase_matching != PhaseMatching::TypeII {
        return Err(Error::Config("PMD interferometry needs a type II source".into()));
    }
    source.validate()?;
    settings.validate()?;
    let dw = source_bandwidth(source);
    let mut noise = rng::stream(seed, StreamKind::ShotNoise, 0);
    let points = settings
        .delay_fs
        .points()
        .into_iter()
        .map(|eps| {
            let depth = settings.visibility * dip_envelope(source.spectral_shape, dw, eps - sample.dgd_fs);
            let expected = settings.counts_per_point * (1.0 - depth);
            let rate = if settings.shot_noise {
                poisson(expected, &mut noise)
            } else {
                expected
            };
            ScanPoint {
                x: eps,
                rate_hz: rate,
                expected_rate_hz: expected,
                visibility: depth,
            }
        })
        .collect();
    Ok(InterferogramScan {
        axis: ScanAxis::DelayFs,
        temperature_c: Some(source.temperature_c),
        signal_center_nm: source.signal_center_nm,
        idler_center_nm: source.idler_center_nm(),
        fringe_period: None,
        baseline_rate_hz: settings.counts_per_point,
        points,
        provenance: Provenance::new(Some(seed))
            .with("source", source)
            .with("sample", sample)
            .with("settings", settings),
    })
}
