//! Group-delay fits and the zero-dispersion wavelength.
//!
//! τ(λ) = A + Bλ² + Cλ⁻² is linear in (A, B, C); it is solved by QR on the
//! scaled variable u = λ/λ_ref to keep the columns well conditioned.
//! λ₀ = (C/B)^¼ and S₀ = 8B per unit length. The λ₀ standard error follows
//! from first-order propagation of the (B, C) covariance:
//!
//! var λ₀ = (λ₀/4)² [var B/B² + var C/C² − 2 cov(B, C)/(BC)].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{content_hash, TofScanResult};
use crate::linalg::{lstsq, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SellmeierFit<T = f64> {
    /// Fitted (A, B, C) in the units of the data.
    pub params: [T; 3],
    pub covariance: [[T; 3]; 3],
    pub residual_rms: T,
    pub chi2: T,
    pub dof: usize,
}

impl<T: Scalar> SellmeierFit<T> {
    pub fn eval(&self, lambda: T) -> T {
        let [a, b, c] = self.params;
        a + b * lambda * lambda + c / (lambda * lambda)
    }

    /// Zero-dispersion wavelength and its standard error.
    pub fn lambda0(&self) -> Result<(T, T)> {
        let [_, b, c] = self.params;
        lambda0_with_stderr(b, c, self.covariance[1][1], self.covariance[2][2], self.covariance[1][2])
    }
}

/// λ₀ = (C/B)^¼ with its propagated standard error.
pub fn lambda0_with_stderr<T: Scalar>(b: T, c: T, var_b: T, var_c: T, cov_bc: T) -> Result<(T, T)> {
    if !(b > T::zero()) || !(c > T::zero()) {
        return Err(Error::ModelDegenerate(format!("fitted B = {b}, C = {c}; both must be positive")));
    }
    let l0 = (c / b).powf(T::lit(0.25));
    let rel = var_b / (b * b) + var_c / (c * c) - T::lit(2.0) * cov_bc / (b * c);
    Ok((l0, l0 / T::lit(4.0) * rel.max(T::zero()).sqrt()))
}

/// Weighted least squares of `A + Bλ² + Cλ⁻²`. With `sigma` the rows carry
/// weights 1/σ² and the covariance is scaled by the reduced χ² when that
/// exceeds one; without it the covariance is scaled by the residual variance.
pub fn fit_sellmeier<T: Scalar>(lambda: &[T], delay: &[T], sigma: Option<&[T]>) -> Result<SellmeierFit<T>> {
    let n = lambda.len();
    if n != delay.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::Domain("wavelength, delay and sigma lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::InsufficientCounts(format!("{n} points for a 3-parameter fit")));
    }
    let lref = lambda.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
    let mut design = Matrix::zeros(n, 3);
    let mut rhs = vec![T::zero(); n];
    for i in 0..n {
        let w = sigma.map_or(T::one(), |s| T::one() / s[i]);
        let u2 = (lambda[i] / lref).powi(2);
        design.set(i, 0, w);
        design.set(i, 1, w * u2);
        design.set(i, 2, w / u2);
        rhs[i] = w * delay[i];
    }
    let sol = lstsq(&design, &rhs)?;
    let dof = n - 3;
    let chi2 = sol.residual_norm_sq;
    let scale = match (sigma, dof) {
        (_, 0) => T::one(),
        (Some(_), _) => (chi2 / T::from_usize(dof).unwrap()).max(T::one()),
        (None, _) => chi2 / T::from_usize(dof).unwrap(),
    };
    // Back to (A, B, C): B = b/λ_ref², C = c·λ_ref².
    let jac = [T::one(), T::one() / (lref * lref), lref * lref];
    let params = [sol.x[0] * jac[0], sol.x[1] * jac[1], sol.x[2] * jac[2]];
    let mut covariance = [[T::zero(); 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sol.normal_inverse.get(i, j) * jac[i] * jac[j] * scale;
        }
    }
    let mut fit = SellmeierFit {
        params,
        covariance,
        residual_rms: T::zero(),
        chi2,
        dof,
    };
    let ss: T = lambda
        .iter()
        .zip(delay)
        .map(|(l, d)| (*d - fit.eval(*l)).powi(2))
        .sum();
    fit.residual_rms = (ss / T::from_usize(n).unwrap()).sqrt();
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionFit {
    pub lambda0_nm: f64,
    pub lambda0_stderr_nm: f64,
    /// S₀ = 8B per km; absent for a zero-length fiber.
    pub slope_s0_ps_per_nm2_km: Option<f64>,
    pub residual_rms_ps: f64,
    /// (A, B, C) of the total measured delay: ps, ps/nm², ps·nm².
    pub params: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub bins_used: usize,
    pub weighted: bool,
    pub scan_hash: String,
}

/// Fits the per-bin mean delays against the conjugate wavelengths.
pub fn fit_group_delay(scan: &TofScanResult) -> Result<DispersionFit> {
    let used: Vec<_> = scan
        .bins
        .iter()
        .filter(|b| b.count > 0 && b.mean_dt_ps.is_finite())
        .collect();
    if used.len() < 4 {
        return Err(Error::InsufficientCounts(format!(
            "{} populated bins; at least 4 are needed",
            used.len()
        )));
    }
    let weighted = used.iter().all(|b| b.count > 1 && b.std_dt_ps > 0.0);
    let lambda: Vec<f64> = used.iter().map(|b| b.lambda_conjugate_nm).collect();
    let delay: Vec<f64> = used.iter().map(|b| b.mean_dt_ps).collect();
    let sigma: Vec<f64> = used.iter().map(|b| b.std_dt_ps / (b.count as f64).sqrt()).collect();
    let fit = fit_sellmeier(&lambda, &delay, weighted.then_some(sigma.as_slice()))?;
    let (l0, se) = fit.lambda0()?;
    let len = scan.fiber.length_km;
    Ok(DispersionFit {
        lambda0_nm: l0,
        lambda0_stderr_nm: se,
        slope_s0_ps_per_nm2_km: (len > 0.0).then(|| 8.0 * fit.params[1] / len),
        residual_rms_ps: fit.residual_rms,
        params: fit.params,
        covariance: fit.covariance,
        bins_used: used.len(),
        weighted,
        scan_hash: content_hash(scan),
    })
}

/// One measured group-delay difference τ(λ_i) − τ(λ_s), ps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub delay_ps: f64,
    pub stderr_ps: f64,
}

/// The wavelength-dependent part Bλ² + Cλ⁻² of a group-delay curve, recovered
/// from differences between pairs of wavelengths. The constant A cancels in
/// every difference, so the curve is known up to an offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeDelayFit {
    pub b: f64,
    pub c: f64,
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
}

impl RelativeDelayFit {
    /// τ(λ) − A, ps.
    pub fn relative_delay(&self, lambda_nm: f64) -> f64 {
        self.b * lambda_nm * lambda_nm + self.c / (lambda_nm * lambda_nm)
    }

    pub fn lambda0(&self) -> Result<(f64, f64)> {
        lambda0_with_stderr(self.b, self.c, self.covariance[0][0], self.covariance[1][1], self.covariance[0][1])
    }
}

pub fn fit_delay_differences(samples: &[DelaySample]) -> Result<RelativeDelayFit> {
    if samples.len() < 2 {
        return Err(Error::InsufficientCounts(format!("{} delay samples for 2 parameters", samples.len())));
    }
    let lref = samples.iter().map(|s| s.signal_nm).sum::<f64>() / samples.len() as f64;
    let n = samples.len();
    let weighted = samples.iter().all(|s| s.stderr_ps > 0.0);
    let mut design = Matrix::zeros(n, 2);
    let mut rhs = vec![0.0; n];
    for (i, s) in samples.iter().enumerate() {
        let w = if weighted { 1.0 / s.stderr_ps } else { 1.0 };
        let (ui, us) = ((s.idler_nm / lref).powi(2), (s.signal_nm / lref).powi(2));
        design.set(i, 0, w * (ui - us));
        design.set(i, 1, w * (1.0 / ui - 1.0 / us));
        rhs[i] = w * s.delay_ps;
    }
    let sol = lstsq(&design, &rhs)?;
    let dof = n - 2;
    let chi2 = sol.residual_norm_sq;
    let scale = match (weighted, dof) {
        (_, 0) => 1.0,
        (true, _) => (chi2 / dof as f64).max(1.0),
        (false, _) => chi2 / dof as f64,
    };
    let jac = [1.0 / (lref * lref), lref * lref];
    let mut covariance = [[0.0; 2]; 2];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sol.normal_inverse.get(i, j) * jac[i] * jac[j] * scale;
        }
    }
    Ok(RelativeDelayFit {
        b: sol.x[0] * jac[0],
        c: sol.x[1] * jac[1],
        covariance,
        chi2,
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Provenance, TofBin};
    use crate::fiber::{DispersionModel, FiberSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scan_from(fiber: &FiberSpec, lambdas: &[f64], std: f64, count: u64, offset: f64) -> TofScanResult {
        TofScanResult {
            lambda_pump_nm: 660.0,
            fiber: *fiber,
            wdm_bin_width_nm: 4.0,
            reference_delay_ps: 0.0,
            duration_s: 1.0,
            singles_local: 0,
            singles_remote: 0,
            bins: lambdas
                .iter()
                .map(|&l| TofBin {
                    lambda_local_nm: l,
                    lambda_conjugate_nm: l,
                    mean_dt_ps: fiber.group_delay(l) + offset,
                    std_dt_ps: std,
                    count,
                })
                .collect(),
            provenance: Provenance::default(),
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_sellmeier_is_recovered_exactly() {
        let fiber = FiberSpec::<f64>::smf_fixture(10.0);
        let scan = scan_from(&fiber, &grid(1260.0, 1380.0, 30), 0.0, 100, 0.0);
        let fit = fit_group_delay(&scan).unwrap();
        let DispersionModel::Sellmeier3 {
            a_ps_per_km: a,
            b_ps_per_km_nm2: b,
            c_ps_nm2_per_km: c,
        } = fiber.model
        else {
            unreachable!()
        };
        for (got, want) in fit.params.iter().zip([a * 10.0, b * 10.0, c * 10.0]) {
            assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((fit.lambda0_nm - 1312.0).abs() < 1e-6);
        assert!((fit.slope_s0_ps_per_nm2_km.unwrap() - 0.092).abs() < 1e-9);
        assert!(!fit.weighted);
    }

    #[test]
    fn single_precision_fit() {
        let fiber = FiberSpec::<f64>::smf_fixture(1.0);
        let l: Vec<f32> = grid(1250.0, 1400.0, 20).iter().map(|&x| x as f32).collect();
        // Remove the large constant so the single-precision data keep the curvature.
        let base = fiber.group_delay(1312.0);
        let d: Vec<f32> = l.iter().map(|&x| (fiber.group_delay(x as f64) - base) as f32).collect();
        let fit = fit_sellmeier(&l, &d, None).unwrap();
        let (l0, _) = fit.lambda0().unwrap();
        assert!((l0 - 1312.0).abs() < 0.5, "{l0}");
    }

    #[test]
    fn constant_offset_does_not_move_lambda0() {
        let fiber = FiberSpec::<f64>::smf_fixture(10.0);
        let l = grid(1270.0, 1370.0, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut scan = scan_from(&fiber, &l, 140.0, 10_000, 0.0);
        for b in &mut scan.bins {
            b.mean_dt_ps += noise.sample(&mut rng);
        }
        let base = fit_group_delay(&scan).unwrap();
        for b in &mut scan.bins {
            b.mean_dt_ps -= 12_345.678;
        }
        let shifted = fit_group_delay(&scan).unwrap();
        assert!((base.lambda0_nm - shifted.lambda0_nm).abs() < 1e-6);
        assert!(base.lambda0_stderr_nm > 0.0 && base.weighted);
    }

    #[test]
    fn collinear_bins_are_rank_deficient() {
        let fiber = FiberSpec::<f64>::smf_fixture(10.0);
        let scan = scan_from(&fiber, &[1300.0, 1300.0, 1300.0, 1300.0], 1.0, 10, 0.0);
        assert!(matches!(fit_group_delay(&scan), Err(Error::RankDeficient(_))));
        let few = scan_from(&fiber, &[1290.0, 1300.0, 1310.0], 1.0, 10, 0.0);
        assert!(matches!(fit_group_delay(&few), Err(Error::InsufficientCounts(_))));
    }

    #[test]
    fn negative_curvature_is_degenerate() {
        let l = grid(1250.0, 1350.0, 10);
        let d: Vec<f64> = l.iter().map(|x| -0.01 * x * x).collect();
        let fit = fit_sellmeier(&l, &d, None).unwrap();
        assert!(matches!(fit.lambda0(), Err(Error::ModelDegenerate(_))));
    }

    /// Brute force: for each trial λ₀ the model A + B(λ² + λ₀⁴/λ²) is linear in (A, B).
    fn grid_fit(l: &[f64], d: &[f64], lo: f64, hi: f64, step: f64) -> f64 {
        let mut best = (f64::INFINITY, lo);
        let mut l0 = lo;
        while l0 <= hi {
            let x: Vec<f64> = l.iter().map(|v| v * v + l0.powi(4) / (v * v)).collect();
            let n = l.len() as f64;
            let (mx, my) = (x.iter().sum::<f64>() / n, d.iter().sum::<f64>() / n);
            let sxy: f64 = x.iter().zip(d).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let slope = sxy / sxx;
            let rss: f64 = x.iter().zip(d).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
            if rss < best.0 {
                best = (rss, l0);
            }
            l0 += step;
        }
        best.1
    }

    #[test]
    fn quadratic_truth_agrees_with_grid_fit() {
        let fiber = FiberSpec {
            length_km: 10.0,
            model: DispersionModel::Quadratic {
                tau0_ps_per_km: 4.9e6,
                lambda0_nm: 1312.0,
                s0_ps_per_nm2_km: 0.092,
            },
            attenuation_db_per_km: 0.0,
        };
        let l = grid(1252.0, 1372.0, 31);
        let scan = scan_from(&fiber, &l, 0.0, 10, 0.0);
        let fit = fit_group_delay(&scan).unwrap();
        assert!(fit.residual_rms_ps > 0.0 && fit.residual_rms_ps.is_finite());
        let d: Vec<f64> = l.iter().map(|&x| fiber.group_delay(x)).collect();
        let brute = grid_fit(&l, &d, 1300.0, 1325.0, 0.001);
        assert!((fit.lambda0_nm - brute).abs() < 2e-3, "{} vs {brute}", fit.lambda0_nm);
    }

    // The propagated λ₀ error must agree with the spread of refits on
    // resampled residuals.
    #[test]
    fn lambda0_stderr_matches_bootstrap() {
        let fiber = FiberSpec::<f64>::smf_fixture(10.0);
        let l = grid(1270.0, 1370.0, 25);
        let sigma = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, sigma).unwrap();
        let d: Vec<f64> = l.iter().map(|&x| fiber.group_delay(x) + noise.sample(&mut rng)).collect();
        let s = vec![sigma; l.len()];
        let fit = fit_sellmeier(&l, &d, Some(&s)).unwrap();
        let (l0, se) = fit.lambda0().unwrap();
        let resid: Vec<f64> = l.iter().zip(&d).map(|(x, y)| y - fit.eval(*x)).collect();
        let inflate = (l.len() as f64 / (l.len() - 3) as f64).sqrt();
        let mut draws = Vec::new();
        for _ in 0..200 {
            let yb: Vec<f64> = l
                .iter()
                .map(|&x| fit.eval(x) + inflate * resid[rand::Rng::random_range(&mut rng, 0..resid.len())])
                .collect();
            draws.push(fit_sellmeier(&l, &yb, Some(&s)).unwrap().lambda0().unwrap().0);
        }
        let m = draws.iter().sum::<f64>() / 200.0;
        let sd = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!((m - l0).abs() < 3.0 * sd / 200f64.sqrt() + 0.1 * sd);
        assert!((sd / se - 1.0).abs() < 0.25, "bootstrap {sd} vs propagated {se}");
    }

    #[test]
    fn delay_differences_recover_the_curve() {
        let fiber = FiberSpec::<f64>::smf_fixture(0.001);
        let samples: Vec<DelaySample> = [1250.0, 1275.0, 1300.0, 1325.0, 1350.0]
            .iter()
            .map(|&s| {
                let i = 700.0 * s / (s - 700.0);
                DelaySample {
                    signal_nm: s,
                    idler_nm: i,
                    delay_ps: fiber.group_delay(i) - fiber.group_delay(s),
                    stderr_ps: 0.0,
                }
            })
            .collect();
        let fit = fit_delay_differences(&samples).unwrap();
        let (l0, _) = fit.lambda0().unwrap();
        assert!((l0 - 1312.0).abs() < 1e-6);
        let rel = |l| fit.relative_delay(l) - fit.relative_delay(1250.0);
        let truth = |l| fiber.group_delay(l) - fiber.group_delay(1250.0);
        for l in [1300.0, 1450.0, 1600.0] {
            assert!((rel(l) - truth(l)).abs() < 1e-9);
        }
    }
}
