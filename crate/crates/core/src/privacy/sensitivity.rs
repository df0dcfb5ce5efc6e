// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{check_lambda, Error, Result};
use crate::scores::ScoreKind;

/// Which global-sensitivity bound to use for test-set HSIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HsicBound {
    /// `(16m - 8) / (m - 1)^2`
    Loose,
    /// `(12m - 11) / (m - 1)^2`
    #[default]
    Improved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SensitivityFormula {
    SpearmanTest,
    KendallTest,
    HsicTest(HsicBound),
    HsicTrain,
    ResidualBound,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensitivityInputs {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub lipschitz: Option<f64>,
}

/// A sensitivity value together with the formula and inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    value: f64,
    formula: SensitivityFormula,
    inputs: SensitivityInputs,
}

fn evaluate(formula: SensitivityFormula, inputs: &SensitivityInputs, constant: f64) -> Option<f64> {
    let m = inputs.m.map(|m| m as f64);
    let n = inputs.n.map(|n| n as f64);
    Some(match formula {
        SensitivityFormula::SpearmanTest => 30.0 / m?,
        SensitivityFormula::KendallTest => 4.0 / m?,
        SensitivityFormula::HsicTest(HsicBound::Loose) => (16.0 * m? - 8.0) / (m? - 1.0).powi(2),
        SensitivityFormula::HsicTest(HsicBound::Improved) => (12.0 * m? - 11.0) / (m? - 1.0).powi(2),
        SensitivityFormula::HsicTrain => {
            let residual_scale = 8.0 / inputs.lambda?.powf(1.5);
            residual_scale * 32.0 * inputs.lipschitz? * m?.sqrt() / n?
        }
        SensitivityFormula::ResidualBound => 8.0 / (n? * inputs.lambda?.powf(1.5)),
        SensitivityFormula::Constant => constant,
    })
}

impl SensitivityBound {
    /// A bound that is not tied to any formula (for example, a zero-noise baseline).
    pub fn constant(value: f64) -> Self {
        assert!(value >= 0.0 && value.is_finite());
        Self {
            value,
            formula: SensitivityFormula::Constant,
            inputs: SensitivityInputs::default(),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn formula(&self) -> SensitivityFormula {
        self.formula
    }

    pub fn inputs(&self) -> &SensitivityInputs {
        &self.inputs
    }

    /// Re-evaluates the formula on the recorded inputs.
    pub fn recompute(&self) -> Option<f64> {
        evaluate(self.formula, &self.inputs, self.value)
    }

    fn build(formula: SensitivityFormula, inputs: SensitivityInputs) -> Self {
        let value = evaluate(formula, &inputs, 0.0).expect("inputs cover the formula");
        debug_assert!(value >= 0.0 && value.is_finite());
        Self { value, formula, inputs }
    }
}

/// Global sensitivity of a score under one test-pair substitution.
pub fn test_sensitivity(kind: ScoreKind, m: usize, hsic_bound: HsicBound) -> Result<SensitivityBound> {
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let formula = match kind {
        ScoreKind::SpearmanRho => SensitivityFormula::SpearmanTest,
        ScoreKind::KendallTau => SensitivityFormula::KendallTest,
        ScoreKind::Hsic => SensitivityFormula::HsicTest(hsic_bound),
        ScoreKind::Iqr | ScoreKind::Variance => {
            return Err(Error::Unsupported(format!(
                "global test-set sensitivity for the {kind} score (it is unbounded)"
            )))
        }
    };
    Ok(SensitivityBound::build(
        formula,
        SensitivityInputs {
            m: Some(m),
            ..Default::default()
        },
    ))
}

/// HSIC sensitivity to one training-pair substitution: `(8/λ^{3/2}) · 32 L √m / n`.
pub fn train_sensitivity_hsic(m: usize, n: usize, lambda: f64, lipschitz: f64) -> Result<SensitivityBound> {
    check_lambda(lambda)?;
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid("lipschitz", lipschitz, "must be positive"));
    }
    Ok(SensitivityBound::build(
        SensitivityFormula::HsicTrain,
        SensitivityInputs {
            m: Some(m),
            n: Some(n),
            lambda: Some(lambda),
            lipschitz: Some(lipschitz),
        },
    ))
}

impl SensitivityBound {
    pub fn residual(n: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(Self::build(
            SensitivityFormula::ResidualBound,
            SensitivityInputs {
                n: Some(n),
                lambda: Some(lambda),
                ..Default::default()
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_set_values() {
        let s = |k, m| test_sensitivity(k, m, HsicBound::Improved).unwrap().value();
        assert!((s(ScoreKind::SpearmanRho, 100) - 0.3).abs() < 1e-15);
        assert!((s(ScoreKind::KendallTau, 100) - 0.04).abs() < 1e-15);
        assert!((s(ScoreKind::Hsic, 100) - 1189.0 / 9801.0).abs() < 1e-15);
        let loose = test_sensitivity(ScoreKind::Hsic, 100, HsicBound::Loose)
            .unwrap()
            .value();
        assert!((loose - 1592.0 / 9801.0).abs() < 1e-15);
        assert!(loose > s(ScoreKind::Hsic, 100));
        assert!(matches!(
            test_sensitivity(ScoreKind::Iqr, 10, HsicBound::Improved),
            Err(Error::Unsupported(_))
        ));
        assert!(test_sensitivity(ScoreKind::Variance, 10, HsicBound::Improved).is_err());
        assert!(test_sensitivity(ScoreKind::KendallTau, 1, HsicBound::Improved).is_err());
    }

    #[test]
    fn train_values() {
        let b = train_sensitivity_hsic(100, 1000, 1.0, 1.0).unwrap();
        assert!((b.value() - 2.56).abs() < 1e-12);
        let quad = train_sensitivity_hsic(400, 1000, 1.0, 1.0).unwrap();
        assert!((quad.value() - 2.0 * b.value()).abs() < 1e-12);
        let dbl = train_sensitivity_hsic(100, 2000, 1.0, 1.0).unwrap();
        assert!((dbl.value() - b.value() / 2.0).abs() < 1e-12);
        assert!(train_sensitivity_hsic(100, 1000, 0.0, 1.0).is_err());
        assert!(train_sensitivity_hsic(100, 1000, 2.0, 1.0).is_err());
    }

    #[test]
    fn recompute_matches() {
        for b in [
            test_sensitivity(ScoreKind::SpearmanRho, 17, HsicBound::Improved).unwrap(),
            test_sensitivity(ScoreKind::Hsic, 33, HsicBound::Loose).unwrap(),
            train_sensitivity_hsic(50, 70, 0.3, 2.0).unwrap(),
            SensitivityBound::residual(100, 0.25).unwrap(),
        ] {
            assert_eq!(b.recompute(), Some(b.value()));
        }
        assert!((SensitivityBound::residual(100, 0.25).unwrap().value() - 0.64).abs() < 1e-15);
    }
}
