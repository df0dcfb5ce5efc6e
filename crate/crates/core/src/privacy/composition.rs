// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-mechanism budget `3ε = ε' / (2 √(6 ln(1/δ')))` that keeps three
/// repeated `(3ε, δ)` mechanisms within `(ε', 3δ + δ')` overall.
///
/// Callers divide the result by 3 to get the Laplace `ε` used inside one
/// private log-IQR release.
pub fn advanced_composition_budget(epsilon_total: f64, delta_prime: f64) -> Result<f64> {
    if !(epsilon_total > 0.0 && epsilon_total <= 1.0) {
        return Err(Error::invalid("epsilon_total", epsilon_total, "must lie in (0, 1]"));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid("delta_prime", delta_prime, "must lie in (0, 1)"));
    }
    Ok(epsilon_total / (2.0 * (6.0 * (1.0 / delta_prime).ln()).sqrt()))
}

/// An `(ε, δ)` pair, summed under simple composition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta }
    }

    /// Budget of the three-fold composition: `(ε', 3δ + δ')`.
    pub fn advanced_triple(epsilon_total: f64, delta: f64, delta_prime: f64) -> Self {
        Self::new(epsilon_total, 3.0 * delta + delta_prime)
    }
}

impl std::ops::Add for Budget {
    type Output = Budget;

    fn add(self, rhs: Budget) -> Budget {
        Budget::new(self.epsilon + rhs.epsilon, self.delta + rhs.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_values() {
        let b = advanced_composition_budget(1.0, 1e-6).unwrap();
        let expected = 1.0 / (2.0 * (6.0 * 1e6f64.ln()).sqrt());
        assert_eq!(b, expected);
        assert!((b - 0.054920).abs() < 5e-6, "{b}");
        let half = advanced_composition_budget(0.5, 1e-6).unwrap();
        assert!((half - b / 2.0).abs() < 1e-16);
        assert!(advanced_composition_budget(1.0 + 1e-9, 1e-6).is_err());
        assert!(advanced_composition_budget(0.0, 1e-6).is_err());
        assert!(advanced_composition_budget(0.5, 0.0).is_err());
    }

    #[test]
    fn triple_bookkeeping() {
        let t = Budget::advanced_triple(0.9, 0.01, 1e-6);
        assert_eq!(t.epsilon, 0.9);
        assert!((t.delta - 0.030001).abs() < 1e-15);
        let s = Budget::new(1.0, 0.0) + Budget::new(0.5, 0.01);
        assert_eq!(s, Budget::new(1.5, 0.01));
    }
}
