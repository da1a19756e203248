//! Dense least squares for the small problems in the estimation module.
//!
//! Linear problems go through a column-scaled Householder QR; nonlinear ones
//! through a Levenberg–Marquardt loop whose damped steps are solved with the
//! same QR. Parameter counts here never exceed a handful.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix rows");
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }
}

/// Solution of `min ||A x − b||₂`.
#[derive(Clone, Debug)]
pub struct LstsqSolution<T> {
    pub x: Vec<T>,
    /// `(AᵀA)⁻¹`, the unscaled parameter covariance.
    pub normal_inverse: Matrix<T>,
    pub residual_norm_sq: T,
}

/// Least squares via Householder QR with unit-norm column scaling.
pub fn lstsq<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<LstsqSolution<T>> {
    let (m, n) = (a.rows, a.cols);
    if m < n || n == 0 {
        return Err(Error::RankDeficient(format!(
            "{m} equations for {n} unknowns"
        )));
    }
    assert_eq!(b.len(), m);

    let mut scale = vec![T::zero(); n];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = (0..m).map(|i| a.get(i, j).powi(2)).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::RankDeficient(format!("column {j} is zero or non-finite")));
        }
        *s = norm;
    }
    let mut r = a.clone();
    for i in 0..m {
        for (j, s) in scale.iter().enumerate() {
            let v = r.get(i, j) / *s;
            r.set(i, j, v);
        }
    }
    let mut qtb = b.to_vec();

    for k in 0..n {
        let norm = (k..m).map(|i| r.get(i, k).powi(2)).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if r.get(k, k) > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm_sq: T = v.iter().map(|x| *x * *x).sum();
        if vnorm_sq == T::zero() {
            continue;
        }
        for j in k..n {
            let dot: T = (k..m).map(|i| v[i - k] * r.get(i, j)).sum();
            let f = T::lit(2.0) * dot / vnorm_sq;
            for i in k..m {
                let val = r.get(i, j) - f * v[i - k];
                r.set(i, j, val);
            }
        }
        let dot: T = (k..m).map(|i| v[i - k] * qtb[i]).sum();
        let f = T::lit(2.0) * dot / vnorm_sq;
        for i in k..m {
            qtb[i] -= f * v[i - k];
        }
    }

    let diag_max = (0..n).map(|k| r.get(k, k).abs()).fold(T::zero(), T::max);
    let tol = diag_max * T::epsilon() * T::lit(64.0) * T::from_usize(m.max(n)).unwrap();
    for k in 0..n {
        if r.get(k, k).abs() <= tol {
            return Err(Error::RankDeficient(format!(
                "column {k} is linearly dependent on the others"
            )));
        }
    }

    // Back substitution for R y = Qᵀb, then undo the column scaling.
    let mut y = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut acc = qtb[k];
        for j in k + 1..n {
            acc -= r.get(k, j) * y[j];
        }
        y[k] = acc / r.get(k, k);
    }
    let x: Vec<T> = y.iter().zip(&scale).map(|(v, s)| *v / *s).collect();
    let residual_norm_sq = qtb[n..].iter().map(|v| *v * *v).sum();

    // R⁻¹ (upper triangular), then (AᵀA)⁻¹ = S⁻¹ R⁻¹ R⁻ᵀ S⁻¹.
    let mut rinv = Matrix::zeros(n, n);
    for c in 0..n {
        for k in (0..=c).rev() {
            let mut acc = if k == c { T::one() } else { T::zero() };
            for j in k + 1..=c {
                acc -= r.get(k, j) * rinv.get(j, c);
            }
            rinv.set(k, c, acc / r.get(k, k));
        }
    }
    let mut normal_inverse = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s: T = (i.max(j)..n).map(|k| rinv.get(i, k) * rinv.get(j, k)).sum();
            normal_inverse.set(i, j, s / (scale[i] * scale[j]));
        }
    }

    Ok(LstsqSolution {
        x,
        normal_inverse,
        residual_norm_sq,
    })
}

/// A nonlinear least-squares model: residuals `r(p)` and optionally their Jacobian.
pub trait ResidualModel<T: Scalar> {
    fn num_residuals(&self) -> usize;

    fn residuals(&self, params: &[T], out: &mut [T]);

    /// Jacobian `∂r_i/∂p_j`; central finite differences unless overridden.
    fn jacobian(&self, params: &[T], out: &mut Matrix<T>) {
        let m = self.num_residuals();
        let mut plus = vec![T::zero(); m];
        let mut minus = vec![T::zero(); m];
        let mut p = params.to_vec();
        let h0 = T::epsilon().cbrt();
        for j in 0..params.len() {
            let h = h0 * params[j].abs().max(T::one());
            p[j] = params[j] + h;
            self.residuals(&p, &mut plus);
            p[j] = params[j] - h;
            self.residuals(&p, &mut minus);
            p[j] = params[j];
            for i in 0..m {
                out.set(i, j, (plus[i] - minus[i]) / (T::lit(2.0) * h));
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LevenbergMarquardt<T> {
    /// Convergence threshold on the relative parameter change.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for LevenbergMarquardt<T> {
    fn default() -> Self {
        LevenbergMarquardt {
            tolerance: T::lit(1e-10).max(T::epsilon() * T::lit(16.0)),
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport<T> {
    pub params: Vec<T>,
    /// `(JᵀJ)⁻¹` at the solution; multiply by `reduced_chi2` when residuals are unweighted.
    pub normal_inverse: Matrix<T>,
    pub chi2: T,
    pub dof: usize,
    pub iterations: usize,
}

impl<T: Scalar> FitReport<T> {
    pub fn reduced_chi2(&self) -> T {
        if self.dof == 0 {
            T::zero()
        } else {
            self.chi2 / T::from_usize(self.dof).unwrap()
        }
    }

    /// Standard error of parameter `j` assuming residuals already carry 1/σ weights.
    pub fn stderr_weighted(&self, j: usize) -> T {
        self.normal_inverse.get(j, j).max(T::zero()).sqrt()
    }

    /// Standard error of parameter `j` with the residual variance estimated from the fit.
    pub fn stderr_scaled(&self, j: usize) -> T {
        (self.normal_inverse.get(j, j).max(T::zero()) * self.reduced_chi2()).sqrt()
    }
}

impl<T: Scalar> LevenbergMarquardt<T> {
    pub fn minimize<M: ResidualModel<T>>(&self, model: &M, initial: &[T]) -> Result<FitReport<T>> {
        let n = initial.len();
        let m = model.num_residuals();
        if m < n {
            return Err(Error::RankDeficient(format!("{m} residuals for {n} parameters")));
        }
        let mut p = initial.to_vec();
        let mut r = vec![T::zero(); m];
        model.residuals(&p, &mut r);
        let mut cost = sum_sq(&r);
        if !cost.is_finite() {
            return Err(Error::NoConvergence("non-finite residuals at the initial point".into()));
        }
        let mut jac = Matrix::zeros(m, n);
        let mut lambda = T::lit(1e-3);
        let mut trial_r = vec![T::zero(); m];
        let mut iterations = 0;

        'outer: while iterations < self.max_iterations {
            iterations += 1;
            model.jacobian(&p, &mut jac);
            let diag: Vec<T> = (0..n)
                .map(|j| (0..m).map(|i| jac.get(i, j).powi(2)).sum::<T>().sqrt().max(T::min_positive_value().sqrt()))
                .collect();

            loop {
                // Damped step: [J; √λ·D] δ = [−r; 0].
                let mut aug = Matrix::zeros(m + n, n);
                for i in 0..m {
                    for j in 0..n {
                        aug.set(i, j, jac.get(i, j));
                    }
                }
                for j in 0..n {
                    aug.set(m + j, j, lambda.sqrt() * diag[j]);
                }
                let mut rhs: Vec<T> = r.iter().map(|v| -*v).collect();
                rhs.extend(std::iter::repeat_n(T::zero(), n));
                let step = lstsq(&aug, &rhs)?.x;
                let trial: Vec<T> = p.iter().zip(&step).map(|(a, d)| *a + *d).collect();
                model.residuals(&trial, &mut trial_r);
                let trial_cost = sum_sq(&trial_r);

                let rel_change = step
                    .iter()
                    .zip(&p)
                    .map(|(d, a)| d.abs() / (a.abs() + T::lit(1e-12)))
                    .fold(T::zero(), T::max);

                if trial_cost.is_finite() && trial_cost <= cost {
                    let improved = cost - trial_cost;
                    p = trial;
                    std::mem::swap(&mut r, &mut trial_r);
                    cost = trial_cost;
                    lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                    if rel_change < self.tolerance || improved <= cost * T::epsilon() {
                        break 'outer;
                    }
                    break;
                }
                lambda *= T::lit(4.0);
                if lambda > T::lit(1e16) || rel_change < self.tolerance * T::lit(1e-2) {
                    // No downhill step left at any damping: stationary point.
                    break 'outer;
                }
            }
        }

        model.jacobian(&p, &mut jac);
        let zero = vec![T::zero(); m];
        let normal_inverse = lstsq(&jac, &zero)?.normal_inverse;
        Ok(FitReport {
            params: p,
            normal_inverse,
            chi2: cost,
            dof: m - n,
            iterations,
        })
    }
}

fn sum_sq<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0], vec![0.0, 1.0]]);
        let x_true = [1.5, -0.25];
        let b: Vec<f64> = (0..3)
            .map(|i| a.get(i, 0) * x_true[0] + a.get(i, 1) * x_true[1])
            .collect();
        let s = lstsq(&a, &b).unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-14 && (s.x[1] + 0.25).abs() < 1e-14);
        assert!(s.residual_norm_sq < 1e-25);
        // (AᵀA)⁻¹ for AᵀA = [[5,5],[5,11]] is [[11,-5],[-5,5]]/30.
        assert!((s.normal_inverse.get(0, 0) - 11.0 / 30.0).abs() < 1e-14);
        assert!((s.normal_inverse.get(0, 1) + 5.0 / 30.0).abs() < 1e-14);
    }

    #[test]
    fn collinear_columns_are_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(lstsq(&a, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient(_))));
    }

    struct Exponential {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl ResidualModel<f64> for Exponential {
        fn num_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for ((o, x), y) in out.iter_mut().zip(&self.x).zip(&self.y) {
                *o = p[0] * (-p[1] * x).exp() - y;
            }
        }
    }

    #[test]
    fn lm_recovers_exponential_decay() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let model = Exponential { x, y };
        let fit = LevenbergMarquardt::default().minimize(&model, &[1.0, 0.1]).unwrap();
        assert!((fit.params[0] - 3.0).abs() < 1e-9);
        assert!((fit.params[1] - 0.7).abs() < 1e-9);
        assert!(fit.chi2 < 1e-18);
    }

    struct Rosenbrock;
    impl ResidualModel<f64> for Rosenbrock {
        fn num_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let fit = LevenbergMarquardt::default().minimize(&Rosenbrock, &[-1.2, 1.0]).unwrap();
        assert!((fit.params[0] - 1.0).abs() < 1e-8, "{:?}", fit.params);
        assert!((fit.params[1] - 1.0).abs() < 1e-8);
    }
}
