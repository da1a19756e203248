//! Estimators turning raw scans into dispersion, delay and efficiency figures.

pub mod dip;
pub mod dispersion;
pub mod efficiency;
pub mod envelope;

pub use dip::{fit_dip_center, DipEnvelope, DipFit};
pub use dispersion::{
    fit_delay_differences, fit_group_delay, fit_sellmeier, lambda0_with_stderr, DelaySample, DispersionFit,
    RelativeDelayFit, SellmeierFit,
};
pub use efficiency::{estimate_efficiency, estimate_efficiency_with, Corrections, EfficiencyEstimate, EfficiencyOptions};
pub use envelope::{demodulate, fit_visibility_envelope, EnvelopeFit, VisibilitySample};
