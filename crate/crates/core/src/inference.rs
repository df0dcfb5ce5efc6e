// SPDX-License-Identifier: Apache-2.0

//! Additive-noise-model inference: fit both directions on the training half,
//! score each residual against its candidate cause on the test half, and
//! prefer the direction with the smaller score. Private variants protect
//! either half of the split.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{Direction, SplitData};
use crate::error::{check_lambda, Error, Result};
use crate::kernel::KernelSpec;
use crate::privacy::{
    advanced_composition_budget, iqr_bins, laplace_mechanism, private_log_iqr, propose_test_release_stable,
    ptr_log_iqr, rank_train_stability_distance, test_sensitivity, train_iqr_attack_count, train_sensitivity_hsic,
    Budget, HsicBound, PrivacyParams, ReleaseOutcome,
};
use crate::regression::{fit_krr, residual_perturbation_bound, ResidualVector};
use crate::scores::{self, median_heuristic_bandwidth, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    XcausesY,
    YcausesX,
    Tie,
    Abstain,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::XcausesY => "X->Y",
            Decision::YcausesX => "Y->X",
            Decision::Tie => "tie",
            Decision::Abstain => "abstain",
        }
    }

    /// `None` when the truth is unknown or no direction was chosen.
    pub fn is_correct(self, truth: Direction) -> Option<bool> {
        match (self, truth) {
            (_, Direction::Unknown) | (Decision::Abstain, _) => None,
            (Decision::Tie, _) => Some(false),
            (Decision::XcausesY, t) => Some(t == Direction::XcausesY),
            (Decision::YcausesX, t) => Some(t == Direction::YcausesX),
        }
    }

    fn compare(s_xy: f64, s_yx: f64) -> Self {
        if s_xy < s_yx {
            Decision::XcausesY
        } else if s_yx < s_xy {
            Decision::YcausesX
        } else {
            Decision::Tie
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the HSIC kernels on the score arguments are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreKernel {
    /// One fixed kernel for both arguments. Required by every private path.
    Fixed(KernelSpec),
    /// Median pairwise distance of each argument. Non-private only.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnmConfig {
    pub score: ScoreKind,
    pub regression_kernel: KernelSpec,
    pub score_kernel: ScoreKernel,
    pub lambda: f64,
    pub hsic_bound: HsicBound,
}

impl AnmConfig {
    pub fn new(score: ScoreKind, regression_kernel: KernelSpec, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            score,
            regression_kernel,
            score_kernel: ScoreKernel::MedianHeuristic,
            lambda,
            hsic_bound: HsicBound::default(),
        })
    }

    pub fn with_score_kernel(mut self, kernel: ScoreKernel) -> Self {
        self.score_kernel = kernel;
        self
    }

    pub fn with_hsic_bound(mut self, bound: HsicBound) -> Self {
        self.hsic_bound = bound;
        self
    }

    fn fixed_score_kernel(&self) -> Result<KernelSpec> {
        match self.score_kernel {
            ScoreKernel::Fixed(k) => Ok(k),
            ScoreKernel::MedianHeuristic => Err(Error::Unsupported(
                "data-dependent HSIC bandwidth in a private run (configure a fixed bandwidth)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub score_kind: ScoreKind,
    pub s_xy: f64,
    pub s_yx: f64,
    pub margin: f64,
    pub decision: Decision,
}

impl InferenceReport {
    pub fn new(score_kind: ScoreKind, s_xy: f64, s_yx: f64) -> Self {
        Self {
            score_kind,
            s_xy,
            s_yx,
            margin: (s_yx - s_xy).abs(),
            decision: Decision::compare(s_xy, s_yx),
        }
    }
}

/// Everything computed on the test half: the report plus the inputs that
/// produced it, which the private paths need.
#[derive(Debug, Clone, PartialEq)]
pub struct AnmFit {
    pub report: InferenceReport,
    pub x_test: Vec<f64>,
    pub y_test: Vec<f64>,
    /// `y' - f̂(x')`
    pub residual_y: ResidualVector,
    /// `x' - ĝ(y')`
    pub residual_x: ResidualVector,
    pub n: usize,
}

fn score_pair(config: &AnmConfig, a: &[f64], b: &[f64]) -> Result<f64> {
    let (ka, kb) = match config.score_kernel {
        ScoreKernel::Fixed(k) => (k, k),
        ScoreKernel::MedianHeuristic if config.score == ScoreKind::Hsic => (
            KernelSpec::squared_exponential(median_heuristic_bandwidth(a)?)?,
            KernelSpec::squared_exponential(median_heuristic_bandwidth(b)?)?,
        ),
        // unused by the non-kernel scores
        ScoreKernel::MedianHeuristic => (config.regression_kernel, config.regression_kernel),
    };
    Ok(scores::score(config.score, a, b, &ka, &kb)?.value)
}

pub fn anm_fit(split: &SplitData, config: &AnmConfig) -> Result<AnmFit> {
    let (train, test) = (&split.train, &split.test);
    if test.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: test.len(),
        });
    }
    let forward = fit_krr(&train.x, &train.y, config.regression_kernel, config.lambda)?;
    let backward = fit_krr(&train.y, &train.x, config.regression_kernel, config.lambda)?;
    let residual_y = forward.residuals(&test.x, &test.y)?;
    let residual_x = backward.residuals(&test.y, &test.x)?;
    let s_xy = score_pair(config, &test.x, residual_y.as_slice())?;
    let s_yx = score_pair(config, &test.y, residual_x.as_slice())?;
    Ok(AnmFit {
        report: InferenceReport::new(config.score, s_xy, s_yx),
        x_test: test.x.clone(),
        y_test: test.y.clone(),
        residual_y,
        residual_x,
        n: train.len(),
    })
}

pub fn anm_infer(split: &SplitData, config: &AnmConfig) -> Result<InferenceReport> {
    Ok(anm_fit(split, config)?.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateInferenceReport {
    pub score_kind: ScoreKind,
    pub outcome_xy: ReleaseOutcome,
    pub outcome_yx: ReleaseOutcome,
    pub decision: Decision,
    /// Scale of the Laplace noise on each released score (`Δ/ε`, or `1/ε` for PTR releases).
    pub noise_scale: f64,
    /// Closed-form probability of a correct decision given the non-private
    /// margin. An evaluation aid: it depends on unreleased data.
    pub predicted_utility: Option<f64>,
    /// Total privacy cost of the run under the accounting used by the path.
    pub budget: Budget,
}

impl PrivateInferenceReport {
    fn from_outcomes(
        score_kind: ScoreKind,
        outcome_xy: ReleaseOutcome,
        outcome_yx: ReleaseOutcome,
        noise_scale: f64,
        predicted_utility: Option<f64>,
        budget: Budget,
    ) -> Self {
        let decision = match (outcome_xy, outcome_yx) {
            (ReleaseOutcome::Released(a), ReleaseOutcome::Released(b)) => Decision::compare(a, b),
            _ => Decision::Abstain,
        };
        Self {
            score_kind,
            outcome_xy,
            outcome_yx,
            decision,
            noise_scale,
            predicted_utility,
            budget,
        }
    }

    /// `|p_yx - p_xy|` of the released values, if both were released.
    pub fn released_margin(&self) -> Option<f64> {
        Some((self.outcome_yx.value()? - self.outcome_xy.value()?).abs())
    }
}

/// Laplace noise on both scores, protecting one test pair. Total cost `(2ε, 0)`.
pub fn private_test_infer<R: RngCore + ?Sized>(
    report: &InferenceReport,
    m: usize,
    hsic_bound: HsicBound,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<PrivateInferenceReport> {
    let kind = report.score_kind;
    if matches!(kind, ScoreKind::Iqr | ScoreKind::Variance) {
        return Err(Error::Unsupported(format!(
            "Laplace release of the {kind} score (use the IQR propose-test-release path)"
        )));
    }
    let eps = params.epsilon();
    let sensitivity = test_sensitivity(kind, m, hsic_bound)?;
    let p_xy = laplace_mechanism(report.s_xy, &sensitivity, eps, rng);
    let p_yx = laplace_mechanism(report.s_yx, &sensitivity, eps, rng);
    let sigma = sensitivity.value() / eps;
    Ok(PrivateInferenceReport::from_outcomes(
        kind,
        ReleaseOutcome::Released(p_xy),
        ReleaseOutcome::Released(p_yx),
        sigma,
        (sigma > 0.0)
            .then(|| utility_two_score(report.margin, sigma))
            .transpose()?,
        Budget::new(2.0 * eps, 0.0),
    ))
}

fn sum_released(a: ReleaseOutcome, b: ReleaseOutcome) -> ReleaseOutcome {
    match (a, b) {
        (ReleaseOutcome::Released(u), ReleaseOutcome::Released(v)) => ReleaseOutcome::Released(u + v),
        _ => ReleaseOutcome::Bottom,
    }
}

/// Four private log-IQR releases protecting one test pair. `params.epsilon()`
/// is the total `ε'`; each release runs at `advanced_composition_budget(ε', δ')/3`.
///
/// Draw order: `x'`, `r'_Y`, `y'`, `r'_X`, each on its own stream so an early
/// ⊥ does not shift later noise.
pub fn private_test_infer_iqr(
    fit: &AnmFit,
    params: &PrivacyParams,
    delta_prime: f64,
) -> Result<PrivateInferenceReport> {
    let inner = advanced_composition_budget(params.epsilon(), delta_prime)? / 3.0;
    let inner_params = params.with_epsilon(inner)?;
    let release = |values: &[f64], label: &str| private_log_iqr(values, &inner_params, &mut params.rng(label));
    let p_x = release(&fit.x_test, "iqr-test/x")?;
    let p_ry = release(fit.residual_y.as_slice(), "iqr-test/r_y")?;
    let p_y = release(&fit.y_test, "iqr-test/y")?;
    let p_rx = release(fit.residual_x.as_slice(), "iqr-test/r_x")?;
    let sigma = 1.0 / inner;
    let predicted = match (scores::log_iqr(&fit.x_test), scores::log_iqr(&fit.y_test)) {
        (Ok(_), Ok(_)) if fit.report.score_kind == ScoreKind::Iqr => {
            Some(utility_four_score(fit.report.margin, sigma)?)
        }
        _ => None,
    };
    Ok(PrivateInferenceReport::from_outcomes(
        ScoreKind::Iqr,
        sum_released(p_x, p_ry),
        sum_released(p_y, p_rx),
        sigma,
        predicted,
        Budget::advanced_triple(params.epsilon(), params.delta(), delta_prime),
    ))
}

/// Releases both scores protecting one training pair.
///
/// * rank scores: propose-test-release on the residual-rank stability
///   distance, `(2ε, 2δ)` in total;
/// * HSIC: Laplace noise at the training sensitivity, `(2ε, 0)`;
/// * IQR: the test-set IQRs are exact (they do not depend on training data)
///   and the residual IQRs go through propose-test-release with attack counts
///   derived from the residual perturbation bound, `(6ε, 2δ)`.
pub fn private_train_infer(fit: &AnmFit, config: &AnmConfig, params: &PrivacyParams) -> Result<PrivateInferenceReport> {
    check_lambda(config.lambda)?;
    let (eps, delta) = (params.epsilon(), params.delta());
    let (n, m, lambda) = (fit.n, fit.report_m(), config.lambda);
    let kind = config.score;
    match kind {
        ScoreKind::SpearmanRho | ScoreKind::KendallTau => {
            let d_xy = rank_train_stability_distance(&fit.residual_y, n, lambda)?;
            let d_yx = rank_train_stability_distance(&fit.residual_x, n, lambda)?;
            let o_xy = propose_test_release_stable(fit.report.s_xy, d_xy, params, &mut params.rng("rank-train/xy"))?;
            let o_yx = propose_test_release_stable(fit.report.s_yx, d_yx, params, &mut params.rng("rank-train/yx"))?;
            Ok(PrivateInferenceReport::from_outcomes(
                kind,
                o_xy,
                o_yx,
                1.0 / eps,
                None,
                Budget::new(2.0 * eps, 2.0 * delta),
            ))
        }
        ScoreKind::Hsic => {
            let kernel = config.fixed_score_kernel()?;
            let sensitivity = train_sensitivity_hsic(m, n, lambda, kernel.lipschitz())?;
            let mut rng = params.rng("hsic-train");
            let p_xy = laplace_mechanism(fit.report.s_xy, &sensitivity, eps, &mut rng);
            let p_yx = laplace_mechanism(fit.report.s_yx, &sensitivity, eps, &mut rng);
            let sigma = sensitivity.value() / eps;
            Ok(PrivateInferenceReport::from_outcomes(
                kind,
                ReleaseOutcome::Released(p_xy),
                ReleaseOutcome::Released(p_yx),
                sigma,
                Some(utility_two_score(fit.report.margin, sigma)?),
                Budget::new(2.0 * eps, 0.0),
            ))
        }
        ScoreKind::Iqr => {
            let shift = residual_perturbation_bound(n, lambda)?;
            let release = |residual: &ResidualVector, label: &str| -> Result<ReleaseOutcome> {
                let range = scores::iqr(residual.as_slice())?;
                let mut rng = params.rng(label);
                if range <= 0.0 {
                    return ptr_log_iqr(0.0, [0, 0], params, &mut rng).map(|_| ReleaseOutcome::Bottom);
                }
                let q = range.ln();
                let [b1, b2] = iqr_bins(q);
                let counts = [
                    train_iqr_attack_count(range, b1, shift)?,
                    train_iqr_attack_count(range, b2, shift)?,
                ];
                ptr_log_iqr(q, counts, params, &mut rng)
            };
            let q_x = scores::log_iqr(&fit.x_test)?;
            let q_y = scores::log_iqr(&fit.y_test)?;
            let o_xy = release(&fit.residual_y, "iqr-train/r_y")?;
            let o_yx = release(&fit.residual_x, "iqr-train/r_x")?;
            let shifted = |o: ReleaseOutcome, q: f64| match o {
                ReleaseOutcome::Released(v) => ReleaseOutcome::Released(v + q),
                ReleaseOutcome::Bottom => ReleaseOutcome::Bottom,
            };
            let sigma = 1.0 / eps;
            Ok(PrivateInferenceReport::from_outcomes(
                kind,
                shifted(o_xy, q_x),
                shifted(o_yx, q_y),
                sigma,
                Some(utility_two_score(fit.report.margin, sigma)?),
                Budget::new(6.0 * eps, 2.0 * delta),
            ))
        }
        ScoreKind::Variance => Err(Error::Unsupported(
            "private release of the variance score (its sensitivity is unbounded)".into(),
        )),
    }
}

/// Runs the training-set mechanism, then adds test-set Laplace noise to
/// whatever it released. Budgets add.
pub fn private_joint_infer(fit: &AnmFit, config: &AnmConfig, params: &PrivacyParams) -> Result<PrivateInferenceReport> {
    let kind = config.score;
    if matches!(kind, ScoreKind::Iqr | ScoreKind::Variance) {
        return Err(Error::Unsupported(format!(
            "joint training and test privacy for the {kind} score"
        )));
    }
    let train = private_train_infer(fit, config, params)?;
    let m = fit.report_m();
    let sensitivity = test_sensitivity(kind, m, config.hsic_bound)?;
    let mut rng = params.rng("joint-test");
    let mut noised = |o: ReleaseOutcome| match o {
        ReleaseOutcome::Released(v) => {
            ReleaseOutcome::Released(laplace_mechanism(v, &sensitivity, params.epsilon(), &mut rng))
        }
        ReleaseOutcome::Bottom => ReleaseOutcome::Bottom,
    };
    let (o_xy, o_yx) = (noised(train.outcome_xy), noised(train.outcome_yx));
    let test_sigma = sensitivity.value() / params.epsilon();
    let (sigma, predicted) = if kind.is_rank() {
        (test_sigma, Some(utility_two_score(fit.report.margin, test_sigma)?))
    } else {
        // sum of two Laplace variables per score: no closed form here
        (train.noise_scale + test_sigma, None)
    };
    Ok(PrivateInferenceReport::from_outcomes(
        kind,
        o_xy,
        o_yx,
        sigma,
        predicted,
        train.budget + Budget::new(2.0 * params.epsilon(), 0.0),
    ))
}

impl AnmFit {
    pub fn report_m(&self) -> usize {
        self.x_test.len()
    }
}

/// Which half of the split the private run protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrivacyTarget {
    Test,
    Train,
    Both,
}

impl PrivacyTarget {
    pub fn name(self) -> &'static str {
        match self {
            PrivacyTarget::Test => "test",
            PrivacyTarget::Train => "train",
            PrivacyTarget::Both => "both",
        }
    }
}

impl FromStr for PrivacyTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "test" => Ok(PrivacyTarget::Test),
            "train" => Ok(PrivacyTarget::Train),
            "both" => Ok(PrivacyTarget::Both),
            _ => Err(format!("unknown target '{s}' (expected test, train or both)")),
        }
    }
}

/// Dispatches to the private path for `target` and score kind.
pub fn private_infer(
    fit: &AnmFit,
    config: &AnmConfig,
    target: PrivacyTarget,
    params: &PrivacyParams,
    delta_prime: f64,
) -> Result<PrivateInferenceReport> {
    match (target, config.score) {
        (PrivacyTarget::Test, ScoreKind::Iqr) => private_test_infer_iqr(fit, params, delta_prime),
        (PrivacyTarget::Test, ScoreKind::Hsic) => {
            config.fixed_score_kernel()?;
            private_test_infer(
                &fit.report,
                fit.report_m(),
                config.hsic_bound,
                params,
                &mut params.rng("test"),
            )
        }
        (PrivacyTarget::Test, _) => private_test_infer(
            &fit.report,
            fit.report_m(),
            config.hsic_bound,
            params,
            &mut params.rng("test"),
        ),
        (PrivacyTarget::Train, _) => private_train_infer(fit, config, params),
        (PrivacyTarget::Both, _) => private_joint_infer(fit, config, params),
    }
}

fn check_utility_args(gamma: f64, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", sigma, "must be positive"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", gamma, "must be non-negative"));
    }
    Ok(())
}

/// `P(γ + L1 - L2 > 0)` for independent `L1, L2 ~ Lap(0, σ)`:
/// `1 - ((γ + 2σ) / (4σ)) e^{-γ/σ}`.
pub fn utility_two_score(gamma: f64, sigma: f64) -> Result<f64> {
    check_utility_args(gamma, sigma)?;
    let t = gamma / sigma;
    Ok(1.0 - (t + 2.0) / 4.0 * (-t).exp())
}

/// Same with two Laplace terms on each side:
/// `1 - e^{-γ/σ} (48σ³ + 33σ²γ + 9σγ² + γ³) / (96σ³)`.
pub fn utility_four_score(gamma: f64, sigma: f64) -> Result<f64> {
    check_utility_args(gamma, sigma)?;
    let t = gamma / sigma;
    Ok(1.0 - (-t).exp() * (48.0 + 33.0 * t + 9.0 * t * t + t * t * t) / 96.0)
}

/// Bound `3δ/2` on the probability that a private IQR is released from a
/// dataset whose attack counts are small.
pub fn iqr_release_failure_bound(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 2.0 / 3.0) {
        return Err(Error::invalid("delta", delta, "must lie in (0, 2/3)"));
    }
    Ok(1.5 * delta)
}
