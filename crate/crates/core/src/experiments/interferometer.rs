//! Unbalanced two-photon interferometer for chromatic dispersion.
//!
//! The long arm holds the test fiber. In the short arm a WDM separates the
//! two bands and the idler band bounces off a movable mirror at displacement
//! x. Only the both-long and both-short amplitudes interfere; the mixed paths
//! arrive at distinct Δt and fall outside the coincidence window. With a
//! monochromatic pump (ω_s + ω_i = ω_p) the coincidence rate is
//!
//! R(x) = R₀ ∫ S(ω_s) [1 + cos Δφ(ω_s, x)] dω_s,
//! Δφ = ψ(ω_s) + ψ(ω_i) − (2x/c) ω_i,
//!
//! where ψ is the fiber phase, the integral of the group delay over ω. The
//! fringe envelope peaks where the mirror delay 2x/c cancels the group-delay
//! difference τ(ω_i) − τ(ω_s) between the band centers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{poisson, InterferogramScan, Provenance, ScanAxis, ScanGrid, ScanPoint};
use crate::error::{Error, Result};
use crate::fiber::FiberSpec;
use crate::numeric::adaptive_simpson;
use crate::rng::{self, StreamKind};
use crate::source::{tune_center_wavelength, SourceSpec};
use crate::units::{
    angular_frequency_to_wavelength, conjugate_wavelength, wavelength_to_angular_frequency, Wavelength,
    SPEED_OF_LIGHT,
};

/// Relative tolerance of the phase quadrature.
pub const PHASE_REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSettings {
    /// Mirror displacement grid, µm.
    pub mirror_um: ScanGrid,
    pub temperatures_c: Vec<f64>,
    /// WDM band edge; defaults to the degeneracy wavelength 2λ_p.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wdm_edge_nm: Option<f64>,
    /// Mean coincidence counts per point away from the envelope.
    #[serde(default = "default_counts")]
    pub counts_per_point: f64,
    #[serde(default = "default_true")]
    pub shot_noise: bool,
    #[serde(default = "default_nodes")]
    pub spectral_nodes: usize,
}

fn default_counts() -> f64 {
    1e4
}

fn default_true() -> bool {
    true
}

fn default_nodes() -> usize {
    2001
}

impl InterferometerSettings {
    pub fn validate(&self) -> Result<()> {
        self.mirror_um.validate("interferometer.mirror_um")?;
        if self.temperatures_c.is_empty() {
            return Err(Error::validation("interferometer.temperatures_c", "temperature grid is empty"));
        }
        if !(self.counts_per_point > 0.0) {
            return Err(Error::validation(
                "interferometer.counts_per_point",
                "counts per point must be positive",
            ));
        }
        if self.spectral_nodes < 3 {
            return Err(Error::validation("interferometer.spectral_nodes", "need at least 3 spectral nodes"));
        }
        Ok(())
    }
}

/// Mirror displacement (µm) whose delay 2x/c equals τ(idler) − τ(signal).
pub fn balanced_mirror_position_um(fiber: &FiberSpec, signal_nm: f64, idler_nm: f64) -> f64 {
    let dt_s = (fiber.group_delay(idler_nm) - fiber.group_delay(signal_nm)) * 1e-12;
    0.5 * SPEED_OF_LIGHT * dt_s * 1e6
}

/// Fiber group delay in seconds at angular frequency `omega`.
fn delay_at(fiber: &FiberSpec, omega: f64) -> f64 {
    let l = angular_frequency_to_wavelength(omega).expect("positive frequency").nm();
    fiber.group_delay(l) * 1e-12
}

/// Fiber phase relative to its value at `omega_c`, minus the linear term
/// τ(ω_c)(ω − ω_c). Keeping the linear part out of the quadrature avoids
/// integrating the large absolute transit time.
pub fn excess_fiber_phase(fiber: &FiberSpec, omega_c: f64, omega: f64) -> f64 {
    let tau_c = delay_at(fiber, omega_c);
    adaptive_simpson(|w| delay_at(fiber, w) - tau_c, omega_c, omega, PHASE_REL_TOL)
}

/// Full fiber phase ψ(ω) − ψ(ω_c) by quadrature of the group delay.
pub fn fiber_phase(fiber: &FiberSpec, omega_c: f64, omega: f64) -> f64 {
    adaptive_simpson(|w| delay_at(fiber, w), omega_c, omega, PHASE_REL_TOL)
}

struct Band {
    signal_center_nm: f64,
    idler_center_nm: f64,
    omega_sc: f64,
    omega_ic: f64,
    /// Signal node frequencies and normalized spectral weights.
    nodes: Vec<(f64, f64)>,
}

fn band(source: &SourceSpec, edge_nm: f64, nodes: usize) -> Result<Band> {
    let profile = source.profile()?;
    let (lo, hi) = profile.support;
    let pump = source.pump();
    let idler_lo = conjugate_wavelength(pump, Wavelength::new(hi)?)?.nm();
    if !(hi < edge_nm && idler_lo > edge_nm) {
        return Err(Error::Config(format!(
            "WDM edge at {edge_nm} nm does not separate signal band [{lo:.2}, {hi:.2}] nm from idler band starting at {idler_lo:.2} nm"
        )));
    }
    let omega_p = pump.to_angular_frequency().rad_per_s();
    let w_lo = wavelength_to_angular_frequency(hi)?.rad_per_s();
    let w_hi = wavelength_to_angular_frequency(lo)?.rad_per_s();
    let step = (w_hi - w_lo) / (nodes - 1) as f64;
    let mut pts: Vec<(f64, f64)> = (0..nodes)
        .map(|k| {
            let w = w_lo + k as f64 * step;
            let l = angular_frequency_to_wavelength(w).expect("positive").nm();
            // Density per unit ω: S(λ)·|dλ/dω| ∝ S(λ)·λ².
            let trap = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            (w, profile.density(l) * l * l * trap)
        })
        .collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    for p in &mut pts {
        p.1 /= total;
    }
    let omega_sc = wavelength_to_angular_frequency(source.signal_center_nm)?.rad_per_s();
    Ok(Band {
        signal_center_nm: source.signal_center_nm,
        idler_center_nm: source.idler_center_nm(),
        omega_sc,
        omega_ic: omega_p - omega_sc,
        nodes: pts,
    })
}

/// Noise-free rate factor Σw(1 + cos Δφ) and visibility |Σw e^{iΔφ}| at each x.
fn envelope(fiber: &FiberSpec, band: &Band, omega_p: f64, xs: &[f64]) -> Vec<(f64, f64)> {
    let tau_sc = delay_at(fiber, band.omega_sc);
    let tau_ic = delay_at(fiber, band.omega_ic);
    // Static part of Δφ per node, independent of the mirror.
    let theta: Vec<(f64, f64, f64)> = band
        .nodes
        .par_iter()
        .map(|&(ws, weight)| {
            let wi = omega_p - ws;
            let ps = excess_fiber_phase(fiber, band.omega_sc, ws);
            let pi = excess_fiber_phase(fiber, band.omega_ic, wi);
            let th = ps + pi + (tau_sc - tau_ic) * (ws - band.omega_sc);
            (th, wi, weight)
        })
        .collect();
    xs.par_iter()
        .map(|&x| {
            let k = 2.0 * x * 1e-6 / SPEED_OF_LIGHT;
            let (mut re, mut im) = (0.0, 0.0);
            for &(th, wi, weight) in &theta {
                // Reduce the large mirror phase before adding the small fiber term.
                let (s, c) = (th - (k * wi).rem_euclid(std::f64::consts::TAU)).sin_cos();
                re += weight * c;
                im += weight * s;
            }
            (1.0 + re, re.hypot(im))
        })
        .collect()
}

/// Runs the mirror scan at every configured crystal temperature.
pub fn run_two_photon_interferometer(
    source: &SourceSpec,
    test_fiber: &FiberSpec,
    settings: &InterferometerSettings,
    seed: u64,
) -> Result<Vec<InterferogramScan>> {
    source.validate()?;
    settings.validate()?;
    test_fiber.validate()?;
    let edge = settings.wdm_edge_nm.unwrap_or(2.0 * source.lambda_pump_nm);
    let omega_p = source.pump().to_angular_frequency().rad_per_s();
    let xs = settings.mirror_um.points();

    settings
        .temperatures_c
        .iter()
        .enumerate()
        .map(|(ti, &temp)| {
            let tuned = tune_center_wavelength(source, temp)?;
            let b = band(&tuned, edge, settings.spectral_nodes)?;
            let (lo, _) = tuned.profile()?.support;
            let idler_hi = conjugate_wavelength(tuned.pump(), Wavelength::new(lo)?)?.nm();
            test_fiber
                .validate_band(lo, idler_hi)
                .map_err(|e| Error::Config(format!("band outside fiber model validity: {e}")))?;
            let env = envelope(test_fiber, &b, omega_p, &xs);
            let mut noise = rng::stream(seed, StreamKind::ShotNoise, ti as u64);
            let points = xs
                .iter()
                .zip(&env)
                .map(|(&x, &(factor, vis))| {
                    let expected = settings.counts_per_point * factor;
                    let rate = if settings.shot_noise {
                        poisson(expected, &mut noise)
                    } else {
                        expected
                    };
                    ScanPoint {
                        x,
                        rate_hz: rate,
                        expected_rate_hz: expected,
                        visibility: vis,
                    }
                })
                .collect();
            Ok(InterferogramScan {
                axis: ScanAxis::MirrorUm,
                temperature_c: Some(temp),
                signal_center_nm: b.signal_center_nm,
                idler_center_nm: b.idler_center_nm,
                fringe_period: Some(b.idler_center_nm / 2000.0),
                baseline_rate_hz: settings.counts_per_point,
                points,
                provenance: Provenance::new(Some(seed))
                    .with("source", &tuned)
                    .with("fiber", test_fiber)
                    .with("settings", settings),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::DispersionModel;
    use std::f64::consts::PI;

    fn settings(grid: ScanGrid, temps: Vec<f64>) -> InterferometerSettings {
        InterferometerSettings {
            mirror_um: grid,
            temperatures_c: temps,
            wdm_edge_nm: None,
            counts_per_point: 1e4,
            shot_noise: false,
            spectral_nodes: 801,
        }
    }

    #[test]
    fn balanced_empty_arms_give_full_visibility() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.0);
        let s = settings(ScanGrid::new(-2.0, 2.0, 0.05).unwrap(), vec![50.0]);
        let scans = run_two_photon_interferometer(&SourceSpec::sec42(), &fiber, &s, 1).unwrap();
        let mid = scans[0].points.iter().find(|p| p.x.abs() < 1e-9).unwrap();
        assert!((mid.visibility - 1.0).abs() < 1e-12);
        assert!((mid.expected_rate_hz - 2e4).abs() < 1e-6);
    }

    #[test]
    fn quadrature_phase_matches_antiderivative() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.002);
        let DispersionModel::Sellmeier3 {
            a_ps_per_km: a,
            b_ps_per_km_nm2: b,
            c_ps_nm2_per_km: c,
        } = fiber.model
        else {
            unreachable!()
        };
        // λ[nm] = K/ω with K = 2πc·10⁹.
        let k = 2.0 * PI * SPEED_OF_LIGHT * 1e9;
        let anti = |w: f64| fiber.length_km * 1e-12 * (a * w - b * k * k / w + c * w.powi(3) / (3.0 * k * k));
        let wc = wavelength_to_angular_frequency(1300.0).unwrap().rad_per_s();
        for l in [1250.0, 1290.0, 1350.0, 1600.0] {
            let w = wavelength_to_angular_frequency(l).unwrap().rad_per_s();
            let exact = anti(w) - anti(wc);
            let num = fiber_phase(&fiber, wc, w);
            assert!((num - exact).abs() <= 1e-9 * exact.abs(), "{l}: {num} vs {exact}");
            let tau_c = fiber.group_delay(1300.0) * 1e-12;
            let excess = excess_fiber_phase(&fiber, wc, w);
            assert!((excess + tau_c * (w - wc) - exact).abs() <= 1e-9 * exact.abs());
        }
    }

    #[test]
    fn envelope_is_unimodal_around_group_delay_difference() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.001);
        let src = SourceSpec::sec42();
        let x0 = balanced_mirror_position_um(&fiber, src.signal_center_nm, src.idler_center_nm());
        let step = 0.1;
        let s = settings(ScanGrid::new(x0 - 150.0, x0 + 150.0, step).unwrap(), vec![50.0]);
        let scan = &run_two_photon_interferometer(&src, &fiber, &s, 1).unwrap()[0];
        let best = scan
            .points
            .iter()
            .max_by(|a, b| a.visibility.total_cmp(&b.visibility))
            .unwrap();
        // Dispersion across the asymmetric band moves the peak by a fraction of
        // a µm from the band-center delay difference; the envelope is ~80 µm wide.
        assert!((best.x - x0).abs() < 1.0, "{} vs {x0}", best.x);
        // Monotone decay on both sides of the optimum.
        let i = scan.points.iter().position(|p| p.x == best.x).unwrap();
        for w in scan.points[..=i].windows(2) {
            assert!(w[1].visibility >= w[0].visibility - 1e-12);
        }
        for w in scan.points[i..].windows(2) {
            assert!(w[1].visibility <= w[0].visibility + 1e-12);
        }
    }

    #[test]
    fn fringe_period_is_half_the_idler_wavelength() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.0);
        let s = settings(ScanGrid::new(0.0, 3.0, 0.01).unwrap(), vec![50.0]);
        let scan = &run_two_photon_interferometer(&SourceSpec::sec42(), &fiber, &s, 1).unwrap()[0];
        let period = scan.fringe_period.unwrap();
        let r = |x: f64| {
            let i = (x / 0.01).round() as usize;
            scan.points[i].expected_rate_hz
        };
        // Maxima at multiples of the period near zero delay.
        assert!(r(0.0) > r(period / 2.0));
        assert!((period - SourceSpec::sec42().idler_center_nm() / 2000.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_sweep_spans_both_bands() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.0);
        let s = settings(ScanGrid::new(0.0, 1.0, 0.5).unwrap(), vec![25.0, 75.0]);
        let scans = run_two_photon_interferometer(&SourceSpec::sec42(), &fiber, &s, 1).unwrap();
        assert!((scans[0].signal_center_nm - 1250.0).abs() < 1e-9);
        assert!((scans[1].signal_center_nm - 1350.0).abs() < 1e-9);
        assert!(scans[0].idler_center_nm > 1590.0 && scans[1].idler_center_nm < 1460.0);
    }

    #[test]
    fn overlapping_bands_are_rejected() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.0);
        let src = SourceSpec {
            signal_center_nm: 1395.0,
            temperature_min_c: 0.0,
            temperature_max_c: 100.0,
            ..SourceSpec::sec42()
        };
        let s = settings(ScanGrid::new(0.0, 1.0, 0.5).unwrap(), vec![50.0]);
        assert!(matches!(
            run_two_photon_interferometer(&src, &fiber, &s, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shot_noise_is_seeded() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.001);
        let mut s = settings(ScanGrid::new(0.0, 5.0, 0.1).unwrap(), vec![40.0]);
        s.shot_noise = true;
        let a = run_two_photon_interferometer(&SourceSpec::sec42(), &fiber, &s, 9).unwrap();
        let b = run_two_photon_interferometer(&SourceSpec::sec42(), &fiber, &s, 9).unwrap();
        assert_eq!(a, b);
        assert!(a[0].points.iter().all(|p| p.rate_hz.fract() == 0.0));
    }
}
