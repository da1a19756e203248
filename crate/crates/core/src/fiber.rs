//! Dispersive and birefringent propagation.
//!
//! Group delay is modeled per unit length as either a three-term Sellmeier
//! expression `A + Bλ² + Cλ⁻²` or a parabola around the zero-dispersion
//! wavelength. Delays are in ps, wavelengths in nm, lengths in km.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::{normalize_angle, Photon, PairEvent, SplitTime, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DispersionModel<T = f64> {
    /// τ(λ)/L = A + Bλ² + Cλ⁻².
    Sellmeier3 {
        a_ps_per_km: T,
        b_ps_per_km_nm2: T,
        c_ps_nm2_per_km: T,
    },
    /// τ(λ)/L = τ₀ + (S₀/2)(λ − λ₀)².
    Quadratic {
        tau0_ps_per_km: T,
        lambda0_nm: T,
        s0_ps_per_nm2_km: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec<T = f64> {
    pub length_km: T,
    pub model: DispersionModel<T>,
    pub attenuation_db_per_km: T,
}

/// Group index of standard single-mode fiber near 1310 nm, used to pin the
/// absolute delay of the fixtures.
const SMF_GROUP_DELAY_PS_PER_KM: f64 = 4.896e6;

impl<T: Scalar> FiberSpec<T> {
    /// Sellmeier3 fiber with the given zero-dispersion wavelength and slope there
    /// (S₀ = 8B, λ₀ = (C/B)^¼).
    pub fn sellmeier_from_zero(length_km: T, lambda0_nm: T, s0: T, attenuation_db_per_km: T) -> Self {
        let b = s0 / T::lit(8.0);
        let c = b * lambda0_nm.powi(4);
        let a = T::lit(SMF_GROUP_DELAY_PS_PER_KM) - T::lit(2.0) * b * lambda0_nm * lambda0_nm;
        FiberSpec {
            length_km,
            model: DispersionModel::Sellmeier3 {
                a_ps_per_km: a,
                b_ps_per_km_nm2: b,
                c_ps_nm2_per_km: c,
            },
            attenuation_db_per_km,
        }
    }

    /// Standard single-mode fiber fixture: λ₀ = 1312 nm, S₀ = 0.092 ps/(nm²·km), 0.35 dB/km.
    pub fn smf_fixture(length_km: T) -> Self {
        Self::sellmeier_from_zero(length_km, T::lit(1312.0), T::lit(0.092), T::lit(0.35))
    }

    /// Group delay per unit length, ps/km.
    pub fn group_delay_per_km(&self, lambda_nm: T) -> T {
        match self.model {
            DispersionModel::Sellmeier3 {
                a_ps_per_km,
                b_ps_per_km_nm2,
                c_ps_nm2_per_km,
            } => {
                let l2 = lambda_nm * lambda_nm;
                a_ps_per_km + b_ps_per_km_nm2 * l2 + c_ps_nm2_per_km / l2
            }
            DispersionModel::Quadratic {
                tau0_ps_per_km,
                lambda0_nm,
                s0_ps_per_nm2_km,
            } => {
                let d = lambda_nm - lambda0_nm;
                tau0_ps_per_km + s0_ps_per_nm2_km / T::lit(2.0) * d * d
            }
        }
    }

    /// Total group delay through the fiber, ps.
    pub fn group_delay(&self, lambda_nm: T) -> T {
        self.length_km * self.group_delay_per_km(lambda_nm)
    }

    /// Chromatic dispersion D(λ) = (1/L)·dτ/dλ, ps/(nm·km).
    pub fn dispersion_coefficient(&self, lambda_nm: T) -> T {
        match self.model {
            DispersionModel::Sellmeier3 {
                b_ps_per_km_nm2,
                c_ps_nm2_per_km,
                ..
            } => {
                T::lit(2.0) * b_ps_per_km_nm2 * lambda_nm
                    - T::lit(2.0) * c_ps_nm2_per_km / (lambda_nm * lambda_nm * lambda_nm)
            }
            DispersionModel::Quadratic {
                lambda0_nm,
                s0_ps_per_nm2_km,
                ..
            } => s0_ps_per_nm2_km * (lambda_nm - lambda0_nm),
        }
    }

    pub fn zero_dispersion_wavelength(&self) -> Result<T> {
        match self.model {
            DispersionModel::Sellmeier3 {
                b_ps_per_km_nm2: b,
                c_ps_nm2_per_km: c,
                ..
            } => {
                if b <= T::zero() || c <= T::zero() {
                    return Err(Error::ModelDegenerate(
                        "Sellmeier3 needs B > 0 and C > 0 for a zero-dispersion wavelength".into(),
                    ));
                }
                Ok((c / b).sqrt().sqrt())
            }
            DispersionModel::Quadratic { lambda0_nm, .. } => Ok(lambda0_nm),
        }
    }

    /// Dispersion slope at λ₀, ps/(nm²·km).
    pub fn zero_dispersion_slope(&self) -> Result<T> {
        match self.model {
            DispersionModel::Sellmeier3 { b_ps_per_km_nm2, .. } => {
                self.zero_dispersion_wavelength()?;
                Ok(T::lit(8.0) * b_ps_per_km_nm2)
            }
            DispersionModel::Quadratic { s0_ps_per_nm2_km, .. } => Ok(s0_ps_per_nm2_km),
        }
    }

    /// Probability that a photon survives the fiber, 10^(−αL/10).
    pub fn survival_probability(&self) -> T {
        T::lit(10.0).powf(-self.attenuation_db_per_km * self.length_km / T::lit(10.0))
    }

    /// Smallest group delay over `[lo, hi]` nm. Both models are convex in λ
    /// with their only stationary point at λ₀.
    pub fn min_group_delay(&self, lo: T, hi: T) -> T {
        let mut m = self.group_delay(lo).min(self.group_delay(hi));
        if let Ok(l0) = self.zero_dispersion_wavelength() {
            if l0 > lo && l0 < hi {
                m = m.min(self.group_delay(l0));
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= T::zero()) {
            return Err(Error::validation("fiber.length_km", "FiberSpec.length must be non-negative"));
        }
        if !(self.attenuation_db_per_km >= T::zero()) {
            return Err(Error::validation(
                "fiber.attenuation_db_per_km",
                "FiberSpec.attenuation must be non-negative",
            ));
        }
        if let DispersionModel::Sellmeier3 {
            b_ps_per_km_nm2,
            c_ps_nm2_per_km,
            ..
        } = self.model
        {
            if !(b_ps_per_km_nm2 > T::zero()) {
                return Err(Error::validation("fiber.model.b_ps_per_km_nm2", "Sellmeier3 requires B > 0"));
            }
            if !(c_ps_nm2_per_km > T::zero()) {
                return Err(Error::validation("fiber.model.c_ps_nm2_per_km", "Sellmeier3 requires C > 0"));
            }
        }
        Ok(())
    }

    /// Checks that the delay is non-negative across the band the fiber will carry.
    pub fn validate_band(&self, lo: T, hi: T) -> Result<()> {
        self.validate()?;
        if self.min_group_delay(lo, hi) < T::zero() {
            return Err(Error::validation(
                "fiber.model",
                format!("group delay is negative somewhere in [{lo}, {hi}] nm"),
            ));
        }
        Ok(())
    }
}

/// A photon leaving the fiber.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub t: SplitTime,
    pub lambda_nm: f64,
}

/// Sends one photon of `event` through `fiber`; `None` when the photon is lost.
pub fn propagate<R: Rng + ?Sized>(
    event: &PairEvent,
    fiber: &FiberSpec<f64>,
    which: Photon,
    rng: &mut R,
) -> Option<Arrival> {
    let survive = rng.random::<f64>() < fiber.survival_probability();
    if !survive {
        return None;
    }
    let lambda_nm = event.wavelength(which).nm();
    Some(Arrival {
        t: event.t_emit.add_seconds(fiber.group_delay(lambda_nm) * 1e-12),
        lambda_nm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisComponent {
    Fast,
    Slow,
}

/// A birefringent retarder with a fixed differential group delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirefringentElement<T = f64> {
    pub dgd_fs: T,
    pub axis_angle_rad: T,
}

impl<T: Scalar> BirefringentElement<T> {
    pub fn new(dgd_fs: T, axis_angle_rad: T) -> Result<Self> {
        if !(dgd_fs >= T::zero()) {
            return Err(Error::validation("sample.dgd_fs", "BirefringentElement.dgd must be non-negative"));
        }
        Ok(BirefringentElement {
            dgd_fs,
            axis_angle_rad: T::lit(normalize_angle(axis_angle_rad.as_f64())),
        })
    }

    /// A plate of birefringence Δn and thickness `thickness_mm`: Δτ = Δn·L/c.
    pub fn plate(delta_n: T, thickness_mm: T, axis_angle_rad: T) -> Result<Self> {
        let seconds = delta_n * thickness_mm * T::lit(1e-3) / T::lit(SPEED_OF_LIGHT);
        Self::new(seconds * T::lit(1e15), axis_angle_rad)
    }

    /// Delay of one eigen-polarization relative to the fast axis, fs.
    pub fn dgd_phase_delay(&self, component: AxisComponent) -> T {
        match component {
            AxisComponent::Fast => T::zero(),
            AxisComponent::Slow => self.dgd_fs,
        }
    }

    /// Series combination of two elements whose axes are parallel or crossed.
    pub fn then(&self, next: &Self) -> Result<Self> {
        let pi = T::PI();
        let mut rel = (next.axis_angle_rad - self.axis_angle_rad).abs();
        if rel > pi / T::lit(2.0) {
            rel = pi - rel;
        }
        let tol = T::lit(1e-9);
        if rel <= tol {
            Self::new(self.dgd_fs + next.dgd_fs, self.axis_angle_rad)
        } else if (rel - pi / T::lit(2.0)).abs() <= tol {
            if self.dgd_fs >= next.dgd_fs {
                Self::new(self.dgd_fs - next.dgd_fs, self.axis_angle_rad)
            } else {
                Self::new(next.dgd_fs - self.dgd_fs, next.axis_angle_rad)
            }
        } else {
            Err(Error::Domain(
                "only parallel or crossed birefringent elements can be combined".into(),
            ))
        }
    }
}
