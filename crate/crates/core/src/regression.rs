// SPDX-License-Identifier: Apache-2.0

//! Kernel ridge regression in dual form.
//!
//! Minimizing `(λ/2)‖w‖² + (1/n) Σ (⟨w, φ(x_i)⟩ - y_i)²` over the RKHS gives
//! `w = Σ α_i φ(x_i)` with `(K + (nλ/2) I) α = y`.

use crate::error::{check_lambda, check_min_len, check_same_len, check_unit_domain, Error, Result};
use crate::kernel::KernelSpec;

const JITTER: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FittedRegressor {
    dual_coefficients: Vec<f64>,
    train_inputs: Vec<f64>,
    kernel: KernelSpec,
    lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector(pub Vec<f64>);

impl ResidualVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// In-place Cholesky factorization of a row-major SPD matrix (lower triangle).
/// Returns `false` if a pivot is not strictly positive.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / diag;
        }
    }
    true
}

fn cholesky_solve(factor: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z = rhs.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= factor[i * n + k] * z[k];
        }
        z[i] = s / factor[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= factor[k * n + i] * z[k];
        }
        z[i] = s / factor[i * n + i];
    }
    z
}

/// Solves `(K + ridge I) α = y`, retrying with jitter if `K` is numerically singular.
pub(crate) fn solve_dual(gram: &[f64], n: usize, ridge: f64, y: &[f64]) -> Vec<f64> {
    let mut jitter = 0.0;
    loop {
        let mut a = gram.to_vec();
        for i in 0..n {
            a[i * n + i] += ridge + jitter;
        }
        if cholesky_in_place(&mut a, n) {
            return cholesky_solve(&a, n, y);
        }
        jitter = if jitter == 0.0 { JITTER } else { jitter * 10.0 };
    }
}

pub fn fit_krr(x_train: &[f64], y_train: &[f64], kernel: KernelSpec, lambda: f64) -> Result<FittedRegressor> {
    check_same_len(x_train, y_train)?;
    check_min_len(x_train, 1)?;
    check_lambda(lambda)?;
    check_unit_domain(x_train)?;
    check_unit_domain(y_train)?;
    let n = x_train.len();
    let gram = kernel.gram(x_train);
    let ridge = n as f64 * lambda / 2.0;
    let alpha = solve_dual(&gram, n, ridge, y_train);
    Ok(FittedRegressor {
        dual_coefficients: alpha,
        train_inputs: x_train.to_vec(),
        kernel,
        lambda,
    })
}

impl FittedRegressor {
    pub fn dual_coefficients(&self) -> &[f64] {
        &self.dual_coefficients
    }

    pub fn train_inputs(&self) -> &[f64] {
        &self.train_inputs
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn predict_one(&self, x: f64) -> f64 {
        self.dual_coefficients
            .iter()
            .zip(&self.train_inputs)
            .map(|(a, xi)| a * self.kernel.eval(*xi, x))
            .sum()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let bound: f64 = self.dual_coefficients.iter().map(|a| a.abs()).sum();
        x.iter()
            .map(|&q| {
                let p = self.predict_one(q);
                debug_assert!(p.abs() <= bound * (1.0 + 1e-12) + 1e-300);
                p
            })
            .collect()
    }

    /// `y - f(x)` elementwise.
    pub fn residuals(&self, x_test: &[f64], y_test: &[f64]) -> Result<ResidualVector> {
        check_same_len(x_test, y_test)?;
        check_min_len(x_test, 1)?;
        let pred = self.predict(x_test);
        Ok(ResidualVector(y_test.iter().zip(pred).map(|(y, p)| y - p).collect()))
    }

    /// Value of the regularized objective at the fitted solution.
    pub fn objective(&self, y_train: &[f64]) -> f64 {
        let n = self.train_inputs.len();
        let gram = self.kernel.gram(&self.train_inputs);
        let alpha = &self.dual_coefficients;
        let mut norm = 0.0;
        let mut loss = 0.0;
        for i in 0..n {
            let fitted: f64 = (0..n).map(|j| gram[i * n + j] * alpha[j]).sum();
            norm += alpha[i] * fitted;
            loss += (fitted - y_train[i]).powi(2);
        }
        self.lambda / 2.0 * norm + loss / n as f64
    }
}

pub fn predict(model: &FittedRegressor, x: &[f64]) -> Vec<f64> {
    model.predict(x)
}

pub fn residuals(model: &FittedRegressor, x_test: &[f64], y_test: &[f64]) -> Result<ResidualVector> {
    model.residuals(x_test, y_test)
}

/// Worst-case change of any test residual when one of `n` training pairs is replaced:
/// `8 / (n λ^{3/2})`.
pub fn residual_perturbation_bound(n: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(8.0 / (n as f64 * lambda.powf(1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn se(h: f64) -> KernelSpec {
        KernelSpec::squared_exponential(h).unwrap()
    }

    #[test]
    fn single_point_closed_form() {
        for y0 in [-1.0, -0.3, 0.0, 0.75, 1.0] {
            let model = fit_krr(&[0.4], &[y0], se(1.0), 1.0).unwrap();
            let p = model.predict(&[0.4])[0];
            assert!((p - 2.0 / 3.0 * y0).abs() < 1e-15);
        }
    }

    #[test]
    fn heavy_regularization_shrinks() {
        let x: Vec<f64> = (0..40).map(|i| -1.0 + i as f64 / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.signum()).collect();
        let tight = fit_krr(&x, &y, se(0.02), 1.0).unwrap();
        let loose = fit_krr(&x, &y, se(0.02), 1e-4).unwrap();
        let max_abs = |m: &FittedRegressor| m.predict(&x).iter().fold(0.0f64, |a, p| a.max(p.abs()));
        assert!(max_abs(&tight) < 0.06);
        assert!(max_abs(&loose) > 0.9);
    }

    #[test]
    fn dual_system_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 5, 50, 200] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let lambda = 1e-3;
            let model = fit_krr(&x, &y, se(0.3), lambda).unwrap();
            let gram = model.kernel().gram(&x);
            let alpha = model.dual_coefficients();
            let ridge = n as f64 * lambda / 2.0;
            for i in 0..n {
                let lhs: f64 = (0..n).map(|j| gram[i * n + j] * alpha[j]).sum::<f64>() + ridge * alpha[i];
                assert!((lhs - y[i]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn duplicate_inputs_still_solve() {
        let x = vec![0.5; 30];
        let y: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 0.2 } else { -0.2 }).collect();
        let model = fit_krr(&x, &y, se(1.0), 1e-9).unwrap();
        assert!(model.dual_coefficients().iter().all(|a| a.is_finite()));
    }

    #[test]
    fn input_validation() {
        let k = se(1.0);
        assert!(matches!(
            fit_krr(&[0.0], &[0.0], k, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            fit_krr(&[0.0], &[0.0], k, 1.5),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            fit_krr(&[1.2], &[0.0], k, 0.5),
            Err(Error::OutOfDomain { index: 0, .. })
        ));
        assert!(matches!(
            fit_krr(&[0.1], &[-1.01], k, 0.5),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(fit_krr(&[], &[], k, 0.5).is_err());
        assert!(fit_krr(&[0.1, 0.2], &[0.0], k, 0.5).is_err());
    }

    #[test]
    fn predict_and_residuals() {
        let x = [-0.8, -0.1, 0.3, 0.9];
        let y = [0.5, -0.2, 0.1, 0.7];
        let model = fit_krr(&x, &y, se(0.5), 0.1).unwrap();
        assert!(model.predict(&[]).is_empty());

        let gram = model.kernel().gram(&x);
        let fitted = model.predict(&x);
        for i in 0..4 {
            let k_alpha: f64 = (0..4).map(|j| gram[i * 4 + j] * model.dual_coefficients()[j]).sum();
            assert!((fitted[i] - k_alpha).abs() < 1e-15);
        }

        let xt = [0.0, 0.5, -0.5];
        let p = model.predict(&xt);
        let zero = model.residuals(&xt, &p).unwrap();
        assert!(zero.as_slice().iter().all(|r| r.abs() < 1e-15));

        let yt = [0.1, 0.2, 0.3];
        let base = model.residuals(&xt, &yt).unwrap();
        let shifted: Vec<f64> = yt.iter().map(|v| v + 0.25).collect();
        let moved = model.residuals(&xt, &shifted).unwrap();
        for (a, b) in base.as_slice().iter().zip(moved.as_slice()) {
            assert!((b - a - 0.25).abs() < 1e-15);
        }
        // independent kernel evaluation
        for (j, &q) in xt.iter().enumerate() {
            let direct: f64 = x
                .iter()
                .zip(model.dual_coefficients())
                .map(|(xi, a)| a * (-(xi - q) * (xi - q) / (2.0 * 0.25)).exp())
                .sum();
            assert!((base.as_slice()[j] - (yt[j] - direct)).abs() < 1e-14);
        }
        assert!(model.residuals(&xt, &yt[..2]).is_err());
    }

    #[test]
    fn perturbation_bound_values() {
        assert!((residual_perturbation_bound(100, 0.25).unwrap() - 0.64).abs() < 1e-15);
        assert_eq!(residual_perturbation_bound(8, 1.0).unwrap(), 1.0);
        let a = residual_perturbation_bound(50, 0.3).unwrap();
        let b = residual_perturbation_bound(100, 0.3).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert!(residual_perturbation_bound(10, 0.0).is_err());
        assert!(residual_perturbation_bound(10, 1.1).is_err());
    }
}
