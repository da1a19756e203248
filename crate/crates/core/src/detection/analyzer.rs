//! Linear polarization analyzers in front of the detectors.
//!
//! Type I pairs carry a definite shared axis, so each photon obeys Malus' law
//! independently. Type II pairs have no individual polarization: the first
//! photon to be analyzed passes with probability 1/2 at any angle, and the
//! outcome projects its partner onto the orthogonal polarization.

use rand::Rng;

use crate::units::{Photon, PolarizationDescriptor};

/// Result of analyzing the partner photon first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyzerRecord {
    pub angle_rad: f64,
    pub passed: bool,
}

pub fn pass_probability(
    polarization: &PolarizationDescriptor,
    _which: Photon,
    analyzer_angle_rad: f64,
    partner: Option<AnalyzerRecord>,
) -> f64 {
    match *polarization {
        PolarizationDescriptor::TypeIFixed { axis } => (analyzer_angle_rad - axis).cos().powi(2),
        PolarizationDescriptor::TypeIIEntangled => match partner {
            None => 0.5,
            // Partner passed at α, so this photon is polarized along α + π/2.
            Some(AnalyzerRecord { angle_rad, passed: true }) => (analyzer_angle_rad - angle_rad).sin().powi(2),
            // Partner was blocked at α, so it was projected onto α + π/2 and this one onto α.
            Some(AnalyzerRecord { angle_rad, passed: false }) => (analyzer_angle_rad - angle_rad).cos().powi(2),
        },
    }
}

/// Samples whether `which` passes an analyzer at `analyzer_angle_rad`.
pub fn analyzer_outcome<R: Rng + ?Sized>(
    polarization: &PolarizationDescriptor,
    which: Photon,
    analyzer_angle_rad: f64,
    partner: Option<AnalyzerRecord>,
    rng: &mut R,
) -> bool {
    rng.random::<f64>() < pass_probability(polarization, which, analyzer_angle_rad, partner)
}

/// Probability that both photons pass analyzers at `alpha` (signal) and `beta` (idler).
pub fn joint_pass_probability(polarization: &PolarizationDescriptor, alpha: f64, beta: f64) -> f64 {
    let first = pass_probability(polarization, Photon::Signal, alpha, None);
    let second = pass_probability(
        polarization,
        Photon::Idler,
        beta,
        Some(AnalyzerRecord {
            angle_rad: alpha,
            passed: true,
        }),
    );
    first * second
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const T2: PolarizationDescriptor = PolarizationDescriptor::TypeIIEntangled;

    #[test]
    fn type_ii_parallel_analyzers_never_both_pass() {
        for a in [0.0, 0.3, FRAC_PI_4, 1.7, 3.0] {
            assert_eq!(joint_pass_probability(&T2, a, a), 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let first = analyzer_outcome(&T2, Photon::Signal, 0.7, None, &mut rng);
            if first {
                let rec = AnalyzerRecord { angle_rad: 0.7, passed: true };
                assert!(!analyzer_outcome(&T2, Photon::Idler, 0.7, Some(rec), &mut rng));
            }
        }
    }

    #[test]
    fn type_ii_orthogonal_partner_always_passes() {
        let rec = AnalyzerRecord { angle_rad: 0.0, passed: true };
        assert_eq!(pass_probability(&T2, Photon::Idler, FRAC_PI_2, Some(rec)), 1.0);
    }

    #[test]
    fn type_ii_marginal_is_unpolarized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        for angle in [0.0, 0.4, 1.2, 2.5] {
            let k = (0..n)
                .filter(|_| analyzer_outcome(&T2, Photon::Signal, angle, None, &mut rng))
                .count();
            let sigma = (n as f64 * 0.25).sqrt();
            assert!((k as f64 - n as f64 / 2.0).abs() < 3.0 * sigma, "{angle}: {k}");
        }
    }

    #[test]
    fn type_i_follows_malus() {
        let p = PolarizationDescriptor::type_i(0.2);
        assert!((pass_probability(&p, Photon::Signal, 0.2, None) - 1.0).abs() < 1e-15);
        assert!(pass_probability(&p, Photon::Signal, 0.2 + FRAC_PI_2, None) < 1e-30);
        assert!((pass_probability(&p, Photon::Idler, 0.2 + FRAC_PI_4, None) - 0.5).abs() < 1e-15);
    }
}
