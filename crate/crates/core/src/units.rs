//! Physical quantities, spectral conversions and the pair-level conservation laws.
//!
//! Wavelengths are vacuum wavelengths in nanometres, angular frequencies are in
//! rad/s and times are in seconds. Every unit conversion used elsewhere in the
//! crate goes through this module.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exact vacuum speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NM_PER_M: f64 = 1e9;

/// Vacuum wavelength in nanometres.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Wavelength<T = f64>(T);

impl<T: Num + PartialOrd + Copy> Wavelength<T> {
    pub fn new(nm: T) -> Result<Self> {
        if nm > T::zero() {
            Ok(Self(nm))
        } else {
            Err(Error::Domain("wavelength must be positive".into()))
        }
    }

    #[inline]
    pub fn nm(self) -> T {
        self.0
    }
}

impl<T: Scalar> Wavelength<T> {
    /// Vacuum wavenumber 1/λ in 1/nm.
    #[inline]
    pub fn wavenumber(self) -> T {
        T::one() / self.0
    }

    #[inline]
    pub fn to_angular_frequency(self) -> AngularFrequency<T> {
        AngularFrequency(T::lit(2.0 * PI * SPEED_OF_LIGHT * NM_PER_M) / self.0)
    }
}

/// Angular frequency in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularFrequency<T = f64>(T);

impl<T: Scalar> AngularFrequency<T> {
    pub fn new(rad_per_s: T) -> Result<Self> {
        if rad_per_s > T::zero() && rad_per_s.is_finite() {
            Ok(Self(rad_per_s))
        } else {
            Err(Error::Domain("angular frequency must be positive".into()))
        }
    }

    #[inline]
    pub fn rad_per_s(self) -> T {
        self.0
    }

    #[inline]
    pub fn to_wavelength(self) -> Wavelength<T> {
        Wavelength(T::lit(2.0 * PI * SPEED_OF_LIGHT * NM_PER_M) / self.0)
    }
}

/// ω = 2πc/λ.
pub fn wavelength_to_angular_frequency<T: Scalar>(lambda_nm: T) -> Result<AngularFrequency<T>> {
    Ok(Wavelength::new(lambda_nm)?.to_angular_frequency())
}

/// λ = 2πc/ω.
pub fn angular_frequency_to_wavelength<T: Scalar>(omega: T) -> Result<Wavelength<T>> {
    Ok(AngularFrequency::new(omega)?.to_wavelength())
}

/// Companion wavelength fixed by energy conservation, 1/λ_i = 1/λ_p − 1/λ_s.
///
/// Written as λ_p·λ_s / (λ_s − λ_p) so that exact number types (rationals)
/// give exact results.
pub fn conjugate_wavelength<T: Num + PartialOrd + Copy>(
    pump: Wavelength<T>,
    signal: Wavelength<T>,
) -> Result<Wavelength<T>> {
    if signal.0 <= pump.0 {
        return Err(Error::Domain(
            "signal wavelength must exceed the pump wavelength".into(),
        ));
    }
    Ok(Wavelength(pump.0 * signal.0 / (signal.0 - pump.0)))
}

/// Residual of the energy balance, 1/λ_s + 1/λ_i − 1/λ_p, in 1/nm.
pub fn energy_mismatch<T: Scalar>(
    pump: Wavelength<T>,
    signal: Wavelength<T>,
    idler: Wavelength<T>,
) -> T {
    signal.wavenumber() + idler.wavenumber() - pump.wavenumber()
}

/// Converts a frequency width in Hz to a vacuum-wavenumber width in 1/nm.
#[inline]
pub fn hz_to_wavenumber(hz: f64) -> f64 {
    hz / SPEED_OF_LIGHT / NM_PER_M
}

/// Converts a bandwidth Δλ (nm) around `center` (nm) to an angular-frequency width (rad/s).
#[inline]
pub fn bandwidth_to_angular<T: Scalar>(center_nm: T, width_nm: T) -> T {
    T::lit(2.0 * PI * SPEED_OF_LIGHT * NM_PER_M) * width_nm / (center_nm * center_nm)
}

/// Timestamp split into whole seconds and a sub-second offset in `[0, 1)`.
///
/// A bare `f64` second count loses femtosecond resolution after roughly ten
/// seconds; the split form keeps ~1e-16 s resolution for any run length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitTime {
    secs: i64,
    frac: f64,
}

impl SplitTime {
    pub const ZERO: SplitTime = SplitTime { secs: 0, frac: 0.0 };

    /// Builds a normalized timestamp from a second count and an arbitrary offset.
    pub fn new(secs: i64, offset: f64) -> Self {
        SplitTime { secs, frac: 0.0 }.add_seconds(offset)
    }

    pub fn from_seconds(t: f64) -> Self {
        Self::new(0, t)
    }

    #[inline]
    pub fn seconds(self) -> i64 {
        self.secs
    }

    #[inline]
    pub fn subsecond(self) -> f64 {
        self.frac
    }

    #[must_use]
    pub fn add_seconds(self, dt: f64) -> Self {
        let s = self.frac + dt;
        let whole = s.floor();
        let mut secs = self.secs + whole as i64;
        let mut frac = s - whole;
        if frac >= 1.0 {
            frac -= 1.0;
            secs += 1;
        }
        SplitTime { secs, frac }
    }

    /// `self − earlier` in seconds.
    #[inline]
    pub fn seconds_since(self, earlier: SplitTime) -> f64 {
        (self.secs - earlier.secs) as f64 + (self.frac - earlier.frac)
    }

    /// Lossy single-float view, for display and coarse arithmetic.
    #[inline]
    pub fn as_f64(self) -> f64 {
        self.secs as f64 + self.frac
    }
}

impl Eq for SplitTime {}

impl PartialOrd for SplitTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SplitTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.secs
            .cmp(&other.secs)
            .then_with(|| self.frac.total_cmp(&other.frac))
    }
}

/// Joint polarization of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolarizationDescriptor {
    /// Both photons share one linear polarization; axis angle in rad, in `[0, π)`.
    TypeIFixed { axis: f64 },
    /// Orthogonally correlated pair with no individual polarization.
    TypeIIEntangled,
}

impl PolarizationDescriptor {
    pub fn type_i(axis: f64) -> Self {
        PolarizationDescriptor::TypeIFixed {
            axis: normalize_angle(axis),
        }
    }
}

/// Maps an angle onto `[0, π)`; linear polarization axes are π-periodic.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// One emitted pair. Both photons leave the crystal at `t_emit`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEvent {
    pub t_emit: SplitTime,
    pub lambda_signal: Wavelength,
    pub lambda_idler: Wavelength,
    pub polarization: PolarizationDescriptor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Photon {
    Signal,
    Idler,
}

impl PairEvent {
    #[inline]
    pub fn wavelength(&self, which: Photon) -> Wavelength {
        match which {
            Photon::Signal => self.lambda_signal,
            Photon::Idler => self.lambda_idler,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn wl(nm: f64) -> Wavelength {
        Wavelength::new(nm).unwrap()
    }

    #[test]
    fn degenerate_conjugate_is_twice_pump() {
        let c = conjugate_wavelength(wl(660.0), wl(1320.0)).unwrap();
        assert!((c.nm() - 1320.0).abs() < 1e-9);
    }

    #[test]
    fn conjugate_matches_exact_rational() {
        for &(p, s) in &[(660i64, 1310i64), (700, 1300), (532, 1064), (405, 1550)] {
            let exact = conjugate_wavelength(
                Wavelength::new(Ratio::from_integer(p)).unwrap(),
                Wavelength::new(Ratio::from_integer(s)).unwrap(),
            )
            .unwrap()
            .nm();
            assert_eq!(exact, Ratio::new(p * s, s - p));
            let float = conjugate_wavelength(wl(p as f64), wl(s as f64)).unwrap().nm();
            let reference = *exact.numer() as f64 / *exact.denom() as f64;
            assert!((float - reference).abs() / reference < 1e-14);
        }
        let c = conjugate_wavelength(wl(660.0), wl(1310.0)).unwrap().nm();
        assert!((c - 1330.153846154).abs() < 1e-9);
        let c = conjugate_wavelength(wl(700.0), wl(1300.0)).unwrap().nm();
        assert!((c - 1516.666666667).abs() < 1e-9);
    }

    #[test]
    fn conjugate_rejects_signal_below_pump() {
        assert!(conjugate_wavelength(wl(700.0), wl(700.0)).is_err());
        assert!(conjugate_wavelength(wl(700.0), wl(500.0)).is_err());
    }

    #[test]
    fn angular_frequency_values() {
        let w = wavelength_to_angular_frequency(1550.0_f64).unwrap().rad_per_s();
        assert!((w - 1.215_259_075_683_131e15).abs() / w < 1e-12);
        let a = wavelength_to_angular_frequency(1320.0_f64).unwrap().rad_per_s();
        let b = wavelength_to_angular_frequency(660.0_f64).unwrap().rad_per_s();
        assert_eq!(a / b, 0.5);
        assert!(wavelength_to_angular_frequency(0.0).is_err());
        assert!(wavelength_to_angular_frequency(-3.0).is_err());
        assert!(angular_frequency_to_wavelength(0.0).is_err());
    }

    #[test]
    fn single_precision_conversion() {
        let w = wavelength_to_angular_frequency(1550.0f32).unwrap();
        let back = w.to_wavelength().nm();
        assert!((back - 1550.0).abs() < 1e-3);
    }

    #[test]
    fn split_time_keeps_femtoseconds() {
        let t = SplitTime::new(1_000_000, 0.25);
        let u = t.add_seconds(1e-15);
        assert!((u.seconds_since(t) - 1e-15).abs() < 2e-16);
        let v = SplitTime::new(3, -0.5);
        assert_eq!(v.seconds(), 2);
        assert_eq!(v.subsecond(), 0.5);
        assert!(v < t);
        let w = SplitTime::new(0, 0.999_999_999_999_999_9);
        assert!(w.subsecond() < 1.0);
    }

    #[test]
    fn angles_normalize() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(-0.1) - (PI - 0.1)).abs() < 1e-15);
        assert!((normalize_angle(PI + 0.2) - 0.2).abs() < 1e-15);
        match PolarizationDescriptor::type_i(4.0) {
            PolarizationDescriptor::TypeIFixed { axis } => assert!((0.0..PI).contains(&axis)),
            _ => unreachable!(),
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_to_1e12(lambda in 100.0f64..5000.0) {
                let back = wavelength_to_angular_frequency(lambda).unwrap().to_wavelength().nm();
                prop_assert!((back - lambda).abs() / lambda <= 1e-12);
            }

            #[test]
            fn conjugation_is_an_involution(pump in 300.0f64..900.0, excess in 1.0f64..2000.0) {
                let p = Wavelength::new(pump).unwrap();
                let s = Wavelength::new(pump + excess).unwrap();
                let i = conjugate_wavelength(p, s).unwrap();
                let back = conjugate_wavelength(p, i).unwrap();
                prop_assert!((back.nm() - s.nm()).abs() / s.nm() <= 1e-12);
                prop_assert!(energy_mismatch(p, s, i).abs() * pump <= 1e-14);
            }
        }
    }
}
