// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration and the factorial sweep runner.
//!
//! Every trial owns a seed derived from the master seed and its cell label,
//! so results do not depend on scheduling or thread count.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::data::{load_pairs_dir, load_pairs_file, normalize, split, synth_anm, Direction, SamplePairs, Shape};
use crate::error::{check_lambda, Error, Result};
use crate::inference::{
    anm_fit, private_infer, AnmConfig, AnmFit, Decision, InferenceReport, PrivacyTarget, PrivateInferenceReport,
    ScoreKernel,
};
use crate::kernel::KernelSpec;
use crate::privacy::{HsicBound, PrivacyParams};
use crate::report::{Outcome, ResultRow};
use crate::scores::ScoreKind;
use crate::seed::{self, Part};

pub const DEFAULT_REGRESSION_BANDWIDTH: f64 = 0.5;
/// Fixed HSIC bandwidth used by private runs when none is configured.
pub const DEFAULT_SCORE_BANDWIDTH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic { shape: Shape, n_total: usize, noise: f64 },
    File(PathBuf),
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub datasets: DatasetSpec,
    pub scores: Vec<ScoreKind>,
    /// Empty for a non-private run.
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub delta: f64,
    pub delta_prime: f64,
    pub target: PrivacyTarget,
    pub trials: usize,
    pub seed: u64,
    pub hsic_bound: HsicBound,
    /// HSIC bandwidth; `None` means the median heuristic (non-private) or
    /// [`DEFAULT_SCORE_BANDWIDTH`] (private).
    pub score_bandwidth: Option<f64>,
    pub regression_bandwidth: f64,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: DatasetSpec::Synthetic {
                shape: Shape::Cubic,
                n_total: 500,
                noise: 0.3,
            },
            scores: vec![ScoreKind::Hsic],
            epsilons: Vec::new(),
            lambdas: vec![0.1],
            delta: 0.01,
            delta_prime: 1e-6,
            target: PrivacyTarget::Test,
            trials: 1,
            seed: 0,
            hsic_bound: HsicBound::Improved,
            score_bandwidth: None,
            regression_bandwidth: DEFAULT_REGRESSION_BANDWIDTH,
            test_fraction: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn is_private(&self) -> bool {
        !self.epsilons.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::invalid("scores", 0.0, "grid must be nonempty"));
        }
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambda", 0.0, "grid must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", 0.0, "must be at least 1"));
        }
        for &lambda in &self.lambdas {
            check_lambda(lambda)?;
        }
        for &eps in &self.epsilons {
            PrivacyParams::new(eps, self.delta, 0)?;
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::invalid("delta", self.delta, "must lie in [0, 1)"));
        }
        if !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return Err(Error::invalid("delta_prime", self.delta_prime, "must lie in (0, 1)"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(
                "test_fraction",
                self.test_fraction,
                "must lie in (0, 1)",
            ));
        }
        KernelSpec::squared_exponential(self.regression_bandwidth)?;
        if let Some(h) = self.score_bandwidth {
            KernelSpec::squared_exponential(h)?;
        }
        if let DatasetSpec::Synthetic { n_total, noise, .. } = self.datasets {
            if n_total < 8 {
                return Err(Error::TooFewSamples {
                    needed: 8,
                    got: n_total,
                });
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::invalid("noise", noise, "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn anm_config(&self, score: ScoreKind, lambda: f64) -> Result<AnmConfig> {
        let score_kernel = match (self.score_bandwidth, self.is_private()) {
            (Some(h), _) => ScoreKernel::Fixed(KernelSpec::squared_exponential(h)?),
            (None, true) => ScoreKernel::Fixed(KernelSpec::squared_exponential(DEFAULT_SCORE_BANDWIDTH)?),
            (None, false) => ScoreKernel::MedianHeuristic,
        };
        Ok(AnmConfig::new(
            score,
            KernelSpec::squared_exponential(self.regression_bandwidth)?,
            lambda,
        )?
        .with_score_kernel(score_kernel)
        .with_hsic_bound(self.hsic_bound))
    }
}

/// A dataset as the sweep sees it: either fixed data or a generator re-drawn per trial.
#[derive(Debug, Clone)]
enum Source {
    Fixed(SamplePairs),
    Generated { shape: Shape, n_total: usize, noise: f64 },
}

impl Source {
    fn id(&self) -> String {
        match self {
            Source::Fixed(s) => s.id.clone(),
            Source::Generated { shape, .. } => format!("synthetic-{}", shape.name()),
        }
    }

    fn samples(&self, master: u64, trial: usize) -> Result<SamplePairs> {
        match self {
            Source::Fixed(s) => Ok(s.clone()),
            Source::Generated { shape, n_total, noise } => {
                let data_seed = seed::derive(
                    master,
                    &[Part::Str("data"), Part::Str(&self.id()), Part::Int(trial as u64)],
                );
                synth_anm(*shape, *n_total, *noise, data_seed)
            }
        }
    }
}

fn load_sources(spec: &DatasetSpec) -> Result<Vec<Source>> {
    let normalized = |raw: Vec<SamplePairs>| -> Result<Vec<Source>> {
        raw.iter().map(|s| Ok(Source::Fixed(normalize(s)?))).collect()
    };
    match spec {
        DatasetSpec::Synthetic { shape, n_total, noise } => Ok(vec![Source::Generated {
            shape: *shape,
            n_total: *n_total,
            noise: *noise,
        }]),
        DatasetSpec::File(path) => normalized(vec![load_pairs_file(path)?]),
        DatasetSpec::Dir(path) => {
            let all = load_pairs_dir(path)?;
            if all.is_empty() {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: 0,
                    message: "directory contains no .txt pairs files".into(),
                });
            }
            normalized(all)
        }
    }
}

/// Seed of one trial in one grid cell. `eps_index` is `None` for non-private runs.
pub fn trial_seed(
    master: u64,
    dataset: &str,
    score: ScoreKind,
    eps_index: Option<usize>,
    lambda_index: usize,
    trial: usize,
) -> u64 {
    let eps_part = match eps_index {
        Some(i) => Part::Int(i as u64),
        None => Part::Str("non-private"),
    };
    seed::derive(
        master,
        &[
            Part::Str(dataset),
            Part::Str(score.name()),
            eps_part,
            Part::Int(lambda_index as u64),
            Part::Int(trial as u64),
        ],
    )
}

fn fit_trial(
    config: &ExperimentConfig,
    source: &Source,
    score: ScoreKind,
    lambda: f64,
    trial: usize,
) -> Result<(AnmFit, Direction)> {
    let data = source.samples(config.seed, trial)?;
    let split_seed = seed::derive(
        config.seed,
        &[Part::Str("split"), Part::Str(&source.id()), Part::Int(trial as u64)],
    );
    let parts = split(&data, config.test_fraction, split_seed)?;
    let fit = anm_fit(&parts, &config.anm_config(score, lambda)?)?;
    Ok((fit, data.ground_truth))
}

fn trial_row(dataset: &str, score: ScoreKind, epsilon: Option<f64>, lambda: f64, seed: u64) -> ResultRow {
    ResultRow {
        dataset: dataset.to_string(),
        score: score.name().to_string(),
        epsilon,
        lambda,
        seed: Some(seed),
        outcome: Outcome::Failed(String::new()),
        margin: None,
        sigma: None,
        predicted_utility: None,
    }
}

fn decided(decision: Decision, truth: Direction) -> Outcome {
    Outcome::Trial {
        decision: decision.name().to_string(),
        correct: decision.is_correct(truth),
        abstained: decision == Decision::Abstain,
    }
}

/// Rows of one `(dataset, score, λ, trial)` unit, one per ε (or one non-private row).
fn run_unit(
    config: &ExperimentConfig,
    source: &Source,
    score: ScoreKind,
    lambda_index: usize,
    trial: usize,
) -> Vec<ResultRow> {
    let dataset = source.id();
    let lambda = config.lambdas[lambda_index];
    let fitted = fit_trial(config, source, score, lambda, trial);
    if !config.is_private() {
        let mut row = trial_row(
            &dataset,
            score,
            None,
            lambda,
            trial_seed(config.seed, &dataset, score, None, lambda_index, trial),
        );
        match fitted {
            Ok((fit, truth)) => {
                row.outcome = decided(fit.report.decision, truth);
                row.margin = Some(fit.report.margin);
            }
            Err(e) => row.outcome = Outcome::Failed(e.to_string()),
        }
        return vec![row];
    }
    config
        .epsilons
        .iter()
        .enumerate()
        .map(|(ei, &eps)| {
            let noise_seed = trial_seed(config.seed, &dataset, score, Some(ei), lambda_index, trial);
            let mut row = trial_row(&dataset, score, Some(eps), lambda, noise_seed);
            let released = fitted.as_ref().map_err(|e| e.to_string()).and_then(|(fit, truth)| {
                let params = PrivacyParams::new(eps, config.delta, noise_seed).map_err(|e| e.to_string())?;
                let anm = config.anm_config(score, lambda).map_err(|e| e.to_string())?;
                private_infer(fit, &anm, config.target, &params, config.delta_prime)
                    .map(|p| (p, *truth))
                    .map_err(|e| e.to_string())
            });
            match released {
                Ok((p, truth)) => {
                    row.outcome = decided(p.decision, truth);
                    row.margin = p.released_margin();
                    row.sigma = Some(p.noise_scale);
                    row.predicted_utility = p.predicted_utility;
                }
                Err(message) => row.outcome = Outcome::Failed(message),
            }
            row
        })
        .collect()
}

/// Mean correct-rate counts an abstention as not correct; trials with
/// unknown truth or errors are left out of it.
pub fn aggregate(cell: &[ResultRow]) -> ResultRow {
    let first = &cell[0];
    let trials: Vec<&ResultRow> = cell.iter().filter(|r| r.is_trial()).collect();
    let mut judged = 0usize;
    let mut correct = 0usize;
    for r in &trials {
        if let Outcome::Trial {
            correct: c, abstained, ..
        } = r.outcome
        {
            if c.is_some() || abstained {
                judged += 1;
                correct += usize::from(c == Some(true));
            }
        }
    }
    let abstained = trials.iter().filter(|r| r.is_abstained()).count();
    let mean = |f: fn(&ResultRow) -> Option<f64>| {
        let vals: Vec<f64> = trials.iter().filter_map(|r| f(r)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    ResultRow {
        dataset: first.dataset.clone(),
        score: first.score.clone(),
        epsilon: first.epsilon,
        lambda: first.lambda,
        seed: None,
        outcome: Outcome::Aggregate {
            correct_rate: (judged > 0).then(|| correct as f64 / judged as f64),
            abstain_rate: if trials.is_empty() {
                0.0
            } else {
                abstained as f64 / trials.len() as f64
            },
        },
        margin: mean(|r| r.margin),
        sigma: mean(|r| r.sigma),
        predicted_utility: mean(|r| r.predicted_utility),
    }
}

/// Full factorial sweep. Rows are ordered dataset, score, ε, λ, trial, and
/// each cell's trials are followed by its aggregate row.
///
/// `threads = Some(k)` runs on a dedicated pool of `k` threads.
pub fn cmd_sweep(config: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let sources = load_sources(&config.datasets)?;
    let mut units = Vec::new();
    for (di, _) in sources.iter().enumerate() {
        for &score in &config.scores {
            for li in 0..config.lambdas.len() {
                for trial in 0..config.trials {
                    units.push((di, score, li, trial));
                }
            }
        }
    }
    let work = || -> Vec<Vec<ResultRow>> {
        units
            .par_iter()
            .map(|&(di, score, li, trial)| run_unit(config, &sources[di], score, li, trial))
            .collect()
    };
    let unit_rows = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Unsupported(format!("thread pool ({e})")))?
            .install(work),
        None => work(),
    };

    let n_eps = config.epsilons.len().max(1);
    let n_lambda = config.lambdas.len();
    let index = |di: usize, si: usize, li: usize, trial: usize| {
        ((di * config.scores.len() + si) * n_lambda + li) * config.trials + trial
    };
    let mut rows = Vec::with_capacity(unit_rows.len() * n_eps + units.len());
    for di in 0..sources.len() {
        for si in 0..config.scores.len() {
            #[allow(clippy::needless_range_loop)]
            for ei in 0..n_eps {
                for li in 0..n_lambda {
                    let cell: Vec<ResultRow> = (0..config.trials)
                        .map(|t| unit_rows[index(di, si, li, t)][ei].clone())
                        .collect();
                    let summary = aggregate(&cell);
                    rows.extend(cell);
                    rows.push(summary);
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct InferOutput {
    pub dataset: String,
    pub truth: Direction,
    pub n: usize,
    pub m: usize,
    pub report: InferenceReport,
    pub private: Option<PrivateInferenceReport>,
    pub rows: Vec<ResultRow>,
}

/// One inference on one dataset with the first score, λ and ε of the config.
pub fn cmd_infer(config: &ExperimentConfig) -> Result<InferOutput> {
    config.validate()?;
    let sources = load_sources(&config.datasets)?;
    if sources.len() != 1 {
        return Err(Error::Unsupported(format!(
            "infer over {} datasets (use sweep)",
            sources.len()
        )));
    }
    let source = &sources[0];
    let dataset = source.id();
    let score = config.scores[0];
    let lambda = config.lambdas[0];
    let (fit, truth) = fit_trial(config, source, score, lambda, 0)?;
    let mut base = trial_row(
        &dataset,
        score,
        None,
        lambda,
        trial_seed(config.seed, &dataset, score, None, 0, 0),
    );
    base.outcome = decided(fit.report.decision, truth);
    base.margin = Some(fit.report.margin);
    let mut rows = vec![base];
    let private = match config.epsilons.first() {
        Some(&eps) => {
            let noise_seed = trial_seed(config.seed, &dataset, score, Some(0), 0, 0);
            let params = PrivacyParams::new(eps, config.delta, noise_seed)?;
            let p = private_infer(
                &fit,
                &config.anm_config(score, lambda)?,
                config.target,
                &params,
                config.delta_prime,
            )?;
            let mut row = trial_row(&dataset, score, Some(eps), lambda, noise_seed);
            row.outcome = decided(p.decision, truth);
            row.margin = p.released_margin();
            row.sigma = Some(p.noise_scale);
            row.predicted_utility = p.predicted_utility;
            // the non-private row would expose exact scores in a private report
            rows = vec![row];
            Some(p)
        }
        None => None,
    };
    Ok(InferOutput {
        dataset,
        truth,
        n: fit.n,
        m: fit.report_m(),
        report: fit.report,
        private,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(epsilons: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            datasets: DatasetSpec::Synthetic {
                shape: Shape::Cubic,
                n_total: 80,
                noise: 0.3,
            },
            scores: vec![ScoreKind::KendallTau, ScoreKind::Hsic],
            epsilons,
            lambdas: vec![0.01, 0.1],
            trials: 3,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn sweep_layout() {
        let rows = cmd_sweep(&small(vec![0.5, 2.0]), None).unwrap();
        // 2 scores × 2 ε × 2 λ cells, 3 trials + 1 aggregate each
        assert_eq!(rows.len(), 8 * 4);
        assert!(rows
            .chunks(4)
            .all(|c| c[3].seed.is_none() && c[..3].iter().all(|r| r.seed.is_some())));
        assert_eq!(rows[0].score, "kendall");
        assert_eq!(rows[0].epsilon, Some(0.5));
        assert_eq!(rows[4].lambda, 0.1);
        assert!(rows.iter().all(|r| !matches!(r.outcome, Outcome::Failed(_))));
    }

    #[test]
    fn sweep_is_thread_independent() {
        let config = small(vec![1.0]);
        let a = cmd_sweep(&config, Some(1)).unwrap();
        let b = cmd_sweep(&config, Some(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell_matches_infer() {
        let config = ExperimentConfig {
            scores: vec![ScoreKind::KendallTau],
            lambdas: vec![0.1],
            epsilons: vec![1.0],
            trials: 1,
            ..small(vec![])
        };
        let sweep = cmd_sweep(&config, None).unwrap();
        let single = cmd_infer(&config).unwrap();
        assert_eq!(sweep[0], single.rows[0]);
    }

    #[test]
    fn errors_stay_in_row() {
        // ε > 1 is outside the IQR composition budget; the run continues
        let config = ExperimentConfig {
            scores: vec![ScoreKind::Iqr, ScoreKind::KendallTau],
            epsilons: vec![2.0],
            lambdas: vec![0.1],
            ..small(vec![])
        };
        let rows = cmd_sweep(&config, None).unwrap();
        assert!(matches!(rows[0].outcome, Outcome::Failed(_)));
        assert!(rows[4..].iter().all(|r| !matches!(r.outcome, Outcome::Failed(_))));
    }

    #[test]
    fn validation() {
        let mut c = small(vec![]);
        c.lambdas.clear();
        assert!(c.validate().is_err());
        let mut c = small(vec![0.0]);
        assert!(c.validate().is_err());
        c = small(vec![]);
        c.trials = 0;
        assert!(c.validate().is_err());
        c = small(vec![]);
        c.lambdas = vec![1.5];
        assert!(c.validate().is_err());
    }
}
