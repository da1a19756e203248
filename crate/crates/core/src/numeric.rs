//! Quadrature and sampling helpers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, rel_tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / T::lit(2.0);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    // The absolute target is anchored to the coarse estimate, with a floor for
    // integrals that nearly cancel.
    let scale = whole.abs().max(((b - a) * (fa.abs() + fm.abs() + fb.abs())).abs() * T::lit(1e-3));
    let eps = (rel_tol * scale).max(T::min_positive_value());
    recurse(&f, a, b, fa, fm, fb, whole, eps, MAX_DEPTH)
}

#[inline]
fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    eps: T,
    depth: u32,
) -> T {
    let m = (a + b) / T::lit(2.0);
    let lm = (a + m) / T::lit(2.0);
    let rm = (m + b) / T::lit(2.0);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * eps {
        return left + right + delta / T::lit(15.0);
    }
    let half = eps / T::lit(2.0);
    recurse(f, a, m, fa, flm, fm, left, half, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, half, depth - 1)
}

/// Standard normal deviate truncated to `[-limit, limit]` by rejection.
pub fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= limit {
            return z;
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// FWHM-to-sigma factor of a Gaussian, 2·sqrt(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let v = adaptive_simpson(|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10);
        assert!((v - 2.0).abs() < 1e-9);
        let v = adaptive_simpson(|x: f64| 1.0 / x, 1.0, 10.0, 1e-11);
        assert!((v - 10f64.ln()).abs() / 10f64.ln() < 1e-10);
        let v = adaptive_simpson(|x: f32| x.exp(), 0.0, 1.0, 1e-6);
        assert!((v - (1f32.exp() - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn reversed_interval_changes_sign() {
        let a = adaptive_simpson(|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        let b = adaptive_simpson(|x: f64| x.exp(), 1.0, 0.0, 1e-12);
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn cdf_symmetry() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) + normal_cdf(-1.0) - 1.0).abs() < 1e-14);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
    }
}
