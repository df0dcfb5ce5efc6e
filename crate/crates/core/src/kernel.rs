// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
}

/// A bounded kernel `k(u, v) = exp(-(u - v)^2 / (2 h^2))` with values in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn squared_exponential(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", bandwidth, "must be positive and finite"));
        }
        Ok(Self {
            family: KernelFamily::SquaredExponential,
            bandwidth,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let d = (u - v) / self.bandwidth;
                (-0.5 * d * d).exp()
            }
        }
    }

    /// Lipschitz constant of `v -> k(u, v)` used by the training-set HSIC bound.
    ///
    /// The exact constant is `e^{-1/2} / h`; the bound uses the conservative `1 / h`.
    pub fn lipschitz(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// Dense Gram matrix, row-major, `values.len()^2` entries.
    pub fn gram(&self, values: &[f64]) -> Vec<f64> {
        let m = values.len();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            out[i * m + i] = 1.0;
            for j in (i + 1)..m {
                let k = self.eval(values[i], values[j]);
                out[i * m + j] = k;
                out[j * m + i] = k;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_bandwidth() {
        assert!(KernelSpec::squared_exponential(0.0).is_err());
        assert!(KernelSpec::squared_exponential(-1.0).is_err());
        assert!(KernelSpec::squared_exponential(f64::NAN).is_err());
    }

    #[test]
    fn bounded_by_one() {
        let k = KernelSpec::squared_exponential(0.3).unwrap();
        assert_eq!(k.eval(0.2, 0.2), 1.0);
        for &(u, v) in &[(0.0, 1.0), (-5.0, 5.0), (1e-9, 0.0)] {
            let val = k.eval(u, v);
            assert!(val > 0.0 || (u - v).abs() > 1.0);
            assert!(val <= 1.0);
        }
    }

    #[test]
    fn lipschitz_dominates_slope() {
        let k = KernelSpec::squared_exponential(0.5).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..2000 {
            let v = -3.0 + 6.0 * i as f64 / 2000.0;
            let slope = (k.eval(0.0, v + h) - k.eval(0.0, v - h)) / (2.0 * h);
            worst = worst.max(slope.abs());
        }
        assert!(worst <= k.lipschitz());
        assert!((worst - (-0.5f64).exp() / 0.5).abs() < 1e-3);
    }
}
