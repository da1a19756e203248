//! Fringe demodulation and envelope location for the mirror scan.
//!
//! The scan is cut into non-overlapping windows of two fringe periods laid out
//! symmetrically about the middle point. In each window the rate is fitted
//! with a + (b + b′u)·cos ku + (c + c′u)·sin ku at the known fringe wavenumber
//! k, u being the offset from the window center. The slope terms absorb the
//! envelope's variation across the window so that the local visibility
//! √(b² + c²)/a does not depend on the fringe phase. Its error comes from the
//! window residuals. A Gaussian
//! with a constant floor is then fitted to the visibility samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{content_hash, InterferogramScan};
use crate::linalg::{lstsq, LevenbergMarquardt, Matrix, ResidualModel};

/// Visibility samples whose spread stays within this fraction of the peak
/// are treated as a flat envelope.
const FLAT_FRACTION: f64 = 0.1;
/// Chance that pure noise produces a visibility sample above the fringe threshold.
const FALSE_FRINGE_PROBABILITY: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySample {
    pub x: f64,
    pub visibility: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub v_max: f64,
    pub x_opt: f64,
    pub x_opt_stderr: f64,
    /// Gaussian σ of the envelope along the scan axis.
    pub width: f64,
    pub floor: f64,
    /// Set when the visibility does not vary over the scan, so no peak can be located.
    pub degenerate: bool,
    pub samples: Vec<VisibilitySample>,
    pub scan_hash: String,
}

/// Local visibility samples from quadrature fits at the fringe wavenumber.
pub fn demodulate(scan: &InterferogramScan) -> Result<Vec<VisibilitySample>> {
    scan.check_axis()?;
    let period = scan
        .fringe_period
        .ok_or_else(|| Error::Config("scan carries no fringe period to demodulate".into()))?;
    let pts = &scan.points;
    if pts.len() < 7 {
        return Err(Error::InsufficientCounts(format!("{} scan points", pts.len())));
    }
    let step = (pts[pts.len() - 1].x - pts[0].x) / (pts.len() - 1) as f64;
    if period < 3.0 * step {
        return Err(Error::Config(format!(
            "scan step {step} does not resolve the fringe period {period}"
        )));
    }
    let half = (period / step).ceil() as usize;
    let win = 2 * half + 1;
    if win > pts.len() {
        return Err(Error::Config("scan shorter than two fringe periods".into()));
    }
    let k = std::f64::consts::TAU / period;
    let mid = pts.len() / 2;
    let mut centers = vec![mid];
    let mut c = mid;
    while c >= win && c - win >= half {
        c -= win;
        centers.push(c);
    }
    c = mid;
    while c + win + half < pts.len() {
        c += win;
        centers.push(c);
    }
    centers.sort_unstable();

    centers
        .into_iter()
        .map(|c| {
            let window = &pts[c - half..=c + half];
            let x0 = pts[c].x;
            let mut design = Matrix::zeros(win, 5);
            let mut rhs = vec![0.0; win];
            for (i, p) in window.iter().enumerate() {
                let u = (p.x - x0) / period;
                let (s, co) = (k * (p.x - x0)).sin_cos();
                design.set(i, 0, 1.0);
                design.set(i, 1, co);
                design.set(i, 2, s);
                design.set(i, 3, u * co);
                design.set(i, 4, u * s);
                rhs[i] = p.rate_hz;
            }
            let sol = lstsq(&design, &rhs)?;
            let (a, b, cc) = (sol.x[0], sol.x[1], sol.x[2]);
            if !(a > 0.0) {
                return Err(Error::NoFringe(format!("non-positive mean rate near x = {x0}")));
            }
            let amp = b.hypot(cc);
            let s2 = sol.residual_norm_sq / (win - 5) as f64;
            // Amplitude error from the quadrature coefficients' covariance.
            let var_amp = if amp > 0.0 {
                (b * b * sol.normal_inverse.get(1, 1)
                    + cc * cc * sol.normal_inverse.get(2, 2)
                    + 2.0 * b * cc * sol.normal_inverse.get(1, 2))
                    / (amp * amp)
                    * s2
            } else {
                s2 * 0.5 * (sol.normal_inverse.get(1, 1) + sol.normal_inverse.get(2, 2))
            };
            let v = amp / a;
            let var_a = sol.normal_inverse.get(0, 0) * s2;
            let stderr = (var_amp / (a * a) + v * v * var_a / (a * a)).sqrt();
            Ok(VisibilitySample {
                x: x0,
                visibility: v,
                stderr,
            })
        })
        .collect()
}

struct GaussianEnvelope<'a> {
    samples: &'a [VisibilitySample],
    weights: Vec<f64>,
}

impl ResidualModel<f64> for GaussianEnvelope<'_> {
    fn num_residuals(&self) -> usize {
        self.samples.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for ((s, w), r) in self.samples.iter().zip(&self.weights).zip(out.iter_mut()) {
            let u = (s.x - p[2]) / p[3];
            *r = w * (s.visibility - p[0] - p[1] * (-0.5 * u * u).exp());
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut Matrix<f64>) {
        for (i, (s, w)) in self.samples.iter().zip(&self.weights).enumerate() {
            let u = (s.x - p[2]) / p[3];
            let g = (-0.5 * u * u).exp();
            out.set(i, 0, -w);
            out.set(i, 1, -w * g);
            out.set(i, 2, -w * p[1] * g * u / p[3]);
            out.set(i, 3, -w * p[1] * g * u * u / p[3]);
        }
    }
}

/// Locates the visibility maximum of a fringe scan.
pub fn fit_visibility_envelope(scan: &InterferogramScan) -> Result<EnvelopeFit> {
    let samples = demodulate(scan)?;
    if samples.len() < 5 {
        return Err(Error::InsufficientCounts(format!(
            "{} visibility samples; widen the scan",
            samples.len()
        )));
    }
    let scan_hash = content_hash(scan);
    let (imax, vmax) = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.visibility))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let vmin = samples.iter().map(|s| s.visibility).fold(f64::MAX, f64::min);
    let mut errs: Vec<f64> = samples.iter().map(|s| s.stderr).collect();
    errs.sort_by(f64::total_cmp);
    let floor_noise = errs[errs.len() / 2];
    // Without fringes each sample is a Rayleigh variable of scale `floor_noise`;
    // the threshold keeps the largest of them below it with high probability.
    let threshold = floor_noise * (2.0 * (samples.len() as f64 / FALSE_FRINGE_PROBABILITY).ln()).sqrt();
    if !(vmax > threshold) || vmax <= 0.0 {
        return Err(Error::NoFringe(format!(
            "peak visibility {vmax:.3e} does not rise above the noise threshold {threshold:.3e}"
        )));
    }
    let (first, last) = (samples[0].x, samples[samples.len() - 1].x);
    if vmax - vmin <= (FLAT_FRACTION * vmax).max(threshold) {
        return Ok(EnvelopeFit {
            v_max: vmax,
            x_opt: 0.5 * (first + last),
            x_opt_stderr: (last - first) / 12f64.sqrt(),
            width: f64::INFINITY,
            floor: vmin,
            degenerate: true,
            samples,
            scan_hash,
        });
    }

    // Initial width from the extent above half maximum.
    let halfmax = vmin + 0.5 * (vmax - vmin);
    let above: Vec<f64> = samples.iter().filter(|s| s.visibility >= halfmax).map(|s| s.x).collect();
    let spacing = (last - first) / (samples.len() - 1) as f64;
    let fwhm = (above[above.len() - 1] - above[0]).max(spacing);
    let initial = [vmin, vmax - vmin, samples[imax].x, fwhm / 2.3548];
    let weighted = errs[0] > 0.0;
    let model = GaussianEnvelope {
        samples: &samples,
        weights: samples
            .iter()
            .map(|s| if weighted { 1.0 / s.stderr } else { 1.0 })
            .collect(),
    };
    let report = LevenbergMarquardt::default().minimize(&model, &initial)?;
    let p = &report.params;
    if !(p[3].abs() > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NoConvergence("envelope fit collapsed".into()));
    }
    Ok(EnvelopeFit {
        v_max: p[0] + p[1],
        x_opt: p[2],
        x_opt_stderr: report.stderr_scaled(2),
        width: p[3].abs(),
        floor: p[0],
        degenerate: false,
        samples,
        scan_hash,
    })
}
