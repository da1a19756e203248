//! Absolute detection efficiency from calibration counts.
//!
//! η̂_A = (n_ab − n_acc) / (n_b − d_b T), with n_acc = n_a n_b τ_w / T the
//! expected accidentals and d_b T the expected dark counts of B.
//!
//! Uncertainty, first-order propagation with n_ab and n_b Poisson:
//!
//! var η̂_A = [n_ab + var n_acc + η̂² n_b − 2η̂ n_ab] / (n_b − d_b T)²,
//! var n_acc = n_acc² (1/n_a + 1/n_b).
//!
//! The cross term uses cov(n_ab, n_b) = n_ab: every coincidence also counts
//! as a B single. Without noise this reduces to the binomial η(1 − η)/n_b.
//! The configured dark rate is taken as known and carries no variance.

use serde::{Deserialize, Serialize};

use crate::detection::accidental_estimate;
use crate::error::{Error, Result};
use crate::experiments::{content_hash, CalibrationCounts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyOptions {
    pub subtract_accidentals: bool,
    pub subtract_dark: bool,
}

impl Default for EfficiencyOptions {
    fn default() -> Self {
        EfficiencyOptions {
            subtract_accidentals: true,
            subtract_dark: true,
        }
    }
}

impl EfficiencyOptions {
    /// The bare ratio n_ab/n_b.
    pub fn raw() -> Self {
        EfficiencyOptions {
            subtract_accidentals: false,
            subtract_dark: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    /// Expected accidental coincidences removed from n_ab.
    pub accidentals_subtracted: f64,
    /// Expected dark counts removed from n_b.
    pub dark_singles_subtracted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta: f64,
    pub eta_stderr: f64,
    pub corrections: Corrections,
    /// Corrected ratio before clipping to [0, 1].
    pub unclipped: f64,
    pub clipped: bool,
    pub scan_hash: String,
}

pub fn estimate_efficiency(counts: &CalibrationCounts) -> Result<EfficiencyEstimate> {
    estimate_efficiency_with(counts, EfficiencyOptions::default())
}

pub fn estimate_efficiency_with(counts: &CalibrationCounts, options: EfficiencyOptions) -> Result<EfficiencyEstimate> {
    let (n_a, n_b, n_ab) = (counts.n_a as f64, counts.n_b as f64, counts.n_ab as f64);
    let acc = if options.subtract_accidentals {
        accidental_estimate(n_a, n_b, counts.window_ns, counts.duration_s)?
    } else {
        0.0
    };
    let dark = if options.subtract_dark {
        counts.dark_b_hz * counts.duration_s
    } else {
        0.0
    };
    let den = n_b - dark;
    if !(den > 0.0) {
        return Err(Error::InsufficientCounts(format!(
            "B singles {n_b} do not exceed the expected dark counts {dark}"
        )));
    }
    let eta = (n_ab - acc) / den;
    let var_acc = if acc > 0.0 { acc * acc * (1.0 / n_a + 1.0 / n_b) } else { 0.0 };
    let var = (n_ab + var_acc + eta * eta * n_b - 2.0 * eta * n_ab) / (den * den);
    let clipped = !(0.0..=1.0).contains(&eta);
    Ok(EfficiencyEstimate {
        eta: eta.clamp(0.0, 1.0),
        eta_stderr: var.max(0.0).sqrt(),
        corrections: Corrections {
            accidentals_subtracted: acc,
            dark_singles_subtracted: dark,
        },
        unclipped: eta,
        clipped,
        scan_hash: content_hash(counts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorSpec;
    use crate::experiments::{run_detector_calibration, Provenance};
    use crate::source::SourceSpec;

    fn counts(n_a: u64, n_b: u64, n_ab: u64) -> CalibrationCounts {
        CalibrationCounts {
            n_a,
            n_b,
            n_ab,
            duration_s: 1.0,
            window_ns: 1.0,
            dark_a_hz: 0.0,
            dark_b_hz: 0.0,
            pairs_emitted: 0,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn direct_substitution() {
        let e = estimate_efficiency_with(&counts(5000, 10_000, 2000), EfficiencyOptions::raw()).unwrap();
        assert!((e.eta - 0.2).abs() < 1e-15);
        let e = estimate_efficiency_with(&counts(7000, 7000, 7000), EfficiencyOptions::raw()).unwrap();
        assert_eq!(e.eta, 1.0);
        assert_eq!(e.eta_stderr, 0.0);
        assert!(!e.clipped);
    }

    #[test]
    fn binomial_limit_of_the_variance() {
        let e = estimate_efficiency_with(&counts(1000, 10_000, 2000), EfficiencyOptions::raw()).unwrap();
        assert!((e.eta_stderr - (0.2f64 * 0.8 / 1e4).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dark_dominated_b_is_rejected() {
        let mut c = counts(100, 100, 10);
        c.dark_b_hz = 200.0;
        assert!(matches!(estimate_efficiency(&c), Err(Error::InsufficientCounts(_))));
    }

    #[test]
    fn out_of_range_ratio_is_clipped_and_flagged() {
        let mut c = counts(1000, 1000, 900);
        c.dark_b_hz = 500.0;
        let e = estimate_efficiency(&c).unwrap();
        assert!(e.clipped && e.eta == 1.0 && e.unclipped > 1.0);
    }

    #[test]
    fn corrections_remove_noise_bias() {
        let a = DetectorSpec {
            efficiency: 0.2,
            dark_rate_hz: 2e4,
            ..DetectorSpec::ideal(0)
        };
        let b = DetectorSpec {
            efficiency: 0.3,
            dark_rate_hz: 2e4,
            ..DetectorSpec::ideal(1)
        };
        let c = run_detector_calibration(&SourceSpec::fig1(), &a, &b, 0.5, 20.0, 7).unwrap();
        let corrected = estimate_efficiency(&c).unwrap();
        let raw = estimate_efficiency_with(&c, EfficiencyOptions::raw()).unwrap();
        assert!((corrected.eta - 0.2).abs() < 3.0 * corrected.eta_stderr, "{corrected:?}");
        assert!((raw.eta - 0.2).abs() > 3.0 * raw.eta_stderr, "{raw:?}");
    }
}
