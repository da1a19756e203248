//! Coincidence-dip fit for the differential group delay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{content_hash, InterferogramScan};
use crate::linalg::{LevenbergMarquardt, Matrix, ResidualModel};
use crate::numeric::FWHM_PER_SIGMA;

/// Chance that a dip-free scan passes the dip-visibility check.
const FALSE_DIP_PROBABILITY: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipEnvelope {
    Triangular,
    Gaussian,
}

impl DipEnvelope {
    /// g(u) and dg/du.
    fn eval(self, u: f64) -> (f64, f64) {
        match self {
            DipEnvelope::Triangular => {
                if u.abs() < 1.0 {
                    (1.0 - u.abs(), -u.signum())
                } else {
                    (0.0, 0.0)
                }
            }
            DipEnvelope::Gaussian => {
                let g = (-0.5 * u * u).exp();
                (g, -u * g)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub dgd_fs: f64,
    pub dgd_stderr_fs: f64,
    pub visibility: f64,
    pub baseline: f64,
    /// Half-base of the triangle or σ of the Gaussian, fs.
    pub width_fs: f64,
    pub envelope: DipEnvelope,
    pub reduced_chi2: f64,
    pub scan_hash: String,
}

struct DipModel<'a> {
    x: &'a [f64],
    y: &'a [f64],
    sigma: Vec<f64>,
    envelope: DipEnvelope,
}

impl DipModel<'_> {
    fn model(&self, p: &[f64], x: f64) -> f64 {
        p[0] * (1.0 - p[1] * self.envelope.eval((x - p[2]) / p[3]).0)
    }
}

impl ResidualModel<f64> for DipModel<'_> {
    fn num_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            out[i] = (self.y[i] - self.model(p, self.x[i])) / self.sigma[i];
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut Matrix<f64>) {
        let (b0, v, c, w) = (p[0], p[1], p[2], p[3]);
        for i in 0..self.x.len() {
            let u = (self.x[i] - c) / w;
            let (g, dg) = self.envelope.eval(u);
            let s = -1.0 / self.sigma[i];
            out.set(i, 0, s * (1.0 - v * g));
            out.set(i, 1, s * (-b0 * g));
            out.set(i, 2, s * (b0 * v * dg / w));
            out.set(i, 3, s * (b0 * v * dg * u / w));
        }
    }
}

/// Fits R(ε) = B₀[1 − V g((ε − Δτ)/w)] by Poisson-weighted least squares.
///
/// A first pass weights each point by its observed count; the second pass
/// re-weights with the fitted model, which removes the downward bias that
/// observed-count weights give near the dip floor.
pub fn fit_dip_center(scan: &InterferogramScan, envelope: DipEnvelope) -> Result<DipFit> {
    scan.check_axis()?;
    let x = scan.positions();
    let y = scan.rates();
    let n = x.len();
    if n < 8 {
        return Err(Error::InsufficientCounts(format!("{n} scan points")));
    }
    // Baseline from the outer fifth of the scan on each side.
    let edge = (n / 5).max(1);
    let mut outer: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    outer.sort_by(f64::total_cmp);
    let baseline = outer[outer.len() / 2];
    let noise = baseline.max(1.0).sqrt();
    // The deepest of n pure-noise points sits near √(2 ln n)σ below the
    // baseline, so a single 3σ excursion is not evidence of a dip.
    let threshold = noise * 3f64.max((2.0 * (n as f64 / FALSE_DIP_PROBABILITY).ln()).sqrt());
    let (imin, ymin) = y
        .iter()
        .enumerate()
        .fold((0, f64::MAX), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
    if !(ymin < baseline - threshold) {
        return Err(Error::NoDip(format!(
            "minimum {ymin} is less than {threshold:.1} below the baseline {baseline}"
        )));
    }
    let depth = baseline - ymin;
    let half = baseline - 0.5 * depth;
    let lo = (0..=imin).rev().find(|&i| y[i] > half).map_or(x[0], |i| x[i]);
    let hi = (imin..n).find(|&i| y[i] > half).map_or(x[n - 1], |i| x[i]);
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let fwhm = (hi - lo).max(2.0 * step);
    let w0 = match envelope {
        DipEnvelope::Triangular => fwhm,
        DipEnvelope::Gaussian => fwhm / FWHM_PER_SIGMA,
    };
    let mut params = vec![baseline, depth / baseline, x[imin], w0];
    let lm = LevenbergMarquardt::default();
    let mut report = None;
    for pass in 0..2 {
        let sigma: Vec<f64> = match pass {
            0 => y.iter().map(|v| v.max(1.0).sqrt()).collect(),
            _ => {
                let m = DipModel {
                    x: &x,
                    y: &y,
                    sigma: vec![1.0; n],
                    envelope,
                };
                x.iter().map(|&xi| m.model(&params, xi).max(1.0).sqrt()).collect()
            }
        };
        let model = DipModel {
            x: &x,
            y: &y,
            sigma,
            envelope,
        };
        let r = lm.minimize(&model, &params)?;
        params = r.params.clone();
        report = Some(r);
    }
    let report = report.expect("two passes ran");
    if !params.iter().all(|v| v.is_finite()) || params[3] == 0.0 {
        return Err(Error::NoConvergence("dip fit diverged".into()));
    }
    let chi2 = report.reduced_chi2();
    Ok(DipFit {
        dgd_fs: params[2],
        dgd_stderr_fs: report.stderr_weighted(2) * chi2.max(1.0).sqrt(),
        visibility: params[1],
        baseline: params[0],
        width_fs: params[3].abs(),
        envelope,
        reduced_chi2: chi2,
        scan_hash: content_hash(scan),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_pmd_interferogram, PmdSettings, ScanGrid};
    use crate::fiber::BirefringentElement;
    use crate::source::{SourceSpec, SpectralShape};

    fn settings(noise: bool, counts: f64) -> PmdSettings {
        PmdSettings {
            delay_fs: ScanGrid::new(10.0, 50.0, 0.1).unwrap(),
            counts_per_point: counts,
            shot_noise: noise,
            visibility: 0.95,
        }
    }

    #[test]
    fn noiseless_dip_is_exact() {
        let quartz = BirefringentElement::new(30.02, 0.0).unwrap();
        for (shape, env) in [
            (SpectralShape::Rectangular, DipEnvelope::Triangular),
            (SpectralShape::Gaussian, DipEnvelope::Gaussian),
        ] {
            let src = SourceSpec {
                spectral_shape: shape,
                ..SourceSpec::sec43()
            };
            let scan = run_pmd_interferogram(&src, &quartz, &settings(false, 1e4), 0).unwrap();
            let fit = fit_dip_center(&scan, env).unwrap();
            assert!((fit.dgd_fs - 30.02).abs() < 1e-6, "{shape:?}: {}", fit.dgd_fs);
            assert!((fit.visibility - 0.95).abs() < 1e-6);
            assert!(fit.dgd_stderr_fs > 0.0);
        }
    }

    #[test]
    fn flat_scan_has_no_dip() {
        let mut s = settings(true, 1e4);
        s.visibility = 0.0;
        let scan = run_pmd_interferogram(&SourceSpec::sec43(), &BirefringentElement::new(30.0, 0.0).unwrap(), &s, 3).unwrap();
        assert!(matches!(fit_dip_center(&scan, DipEnvelope::Triangular), Err(Error::NoDip(_))));
    }

    #[test]
    fn noisy_fit_covers_truth() {
        let quartz = BirefringentElement::new(30.02, 0.0).unwrap();
        let mut pulls = Vec::new();
        for seed in 0..30 {
            let scan = run_pmd_interferogram(&SourceSpec::sec43(), &quartz, &settings(true, 1e4), seed).unwrap();
            let fit = fit_dip_center(&scan, DipEnvelope::Triangular).unwrap();
            pulls.push((fit.dgd_fs - 30.02) / fit.dgd_stderr_fs);
        }
        let rms = (pulls.iter().map(|p| p * p).sum::<f64>() / pulls.len() as f64).sqrt();
        assert!(rms > 0.6 && rms < 1.5, "{rms}");
    }
}
