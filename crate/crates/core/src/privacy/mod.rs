// SPDX-License-Identifier: Apache-2.0

//! Differential-privacy mechanisms and sensitivity calculators.

mod composition;
mod iqr;
mod laplace;
mod sensitivity;
mod stability;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, NoiseRng, Part};

pub use composition::{advanced_composition_budget, Budget};
pub use iqr::{iqr_attack_count, iqr_bins, private_log_iqr, ptr_log_iqr, train_iqr_attack_count, LogInterval};
pub use laplace::{laplace_mechanism, laplace_sample};
pub use sensitivity::{
    test_sensitivity, train_sensitivity_hsic, HsicBound, SensitivityBound, SensitivityFormula, SensitivityInputs,
};
pub use stability::{propose_test_release_stable, rank_train_stability_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    seed: u64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", epsilon, "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid("delta", delta, "must lie in [0, 1)"));
        }
        Ok(Self { epsilon, delta, seed })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.delta, self.seed)
    }

    /// Independent noise stream for one labelled call.
    pub fn rng(&self, label: &str) -> NoiseRng {
        seed::stream(self.seed, &[Part::Str(label)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReleaseOutcome {
    Released(f64),
    Bottom,
}

impl ReleaseOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            ReleaseOutcome::Released(v) => Some(*v),
            ReleaseOutcome::Bottom => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, ReleaseOutcome::Bottom)
    }
}
