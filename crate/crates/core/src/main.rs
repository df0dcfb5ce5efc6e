// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use privcause::audit::{audit_residual_bound, audit_test_sensitivity, verify_utility, SensitivityAudit};
use privcause::data::{Direction, Shape};
use privcause::experiment::{
    cmd_infer, cmd_sweep, DatasetSpec, ExperimentConfig, DEFAULT_REGRESSION_BANDWIDTH, DEFAULT_SCORE_BANDWIDTH,
};
use privcause::inference::{Decision, PrivacyTarget};
use privcause::kernel::KernelSpec;
use privcause::privacy::{HsicBound, ReleaseOutcome};
use privcause::report::{emit_report, Format};
use privcause::scores::ScoreKind;
use privcause::{Error, Result};

#[derive(Parser)]
#[command(
    name = "privcause",
    version,
    about = "Differentially private additive-noise-model causal inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer the causal direction of one dataset.
    Infer(RunArgs),
    /// Run a factorial grid of datasets, scores, epsilons, lambdas and trials.
    Sweep(RunArgs),
    /// Compare the closed-form utility predictions with simulation.
    VerifyUtility(UtilityArgs),
    /// Audit the sensitivity bounds by single-substitution search.
    VerifySensitivity(SensitivityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Cubic,
    Sigmoid,
    LinearGaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Test,
    Train,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Loose,
    Improved,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<BoundArg> for HsicBound {
    fn from(b: BoundArg) -> Self {
        match b {
            BoundArg::Loose => HsicBound::Loose,
            BoundArg::Improved => HsicBound::Improved,
        }
    }
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Score kinds, comma separated (spearman, kendall, hsic, iqr, variance).
    #[arg(long, value_delimiter = ',', default_value = "hsic")]
    score: Vec<ScoreKind>,
    /// Privacy levels, comma separated. Omit for a non-private run.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Regularization strengths in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 1e-6)]
    delta_prime: f64,
    /// Which half of the split to protect.
    #[arg(long, value_enum, default_value = "test")]
    target: TargetArg,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// A directory of two-column pairs files.
    #[arg(long, conflicts_with_all = ["synthetic", "pairs_file"])]
    pairs_dir: Option<PathBuf>,
    /// A single two-column pairs file.
    #[arg(long, conflicts_with = "synthetic")]
    pairs_file: Option<PathBuf>,
    /// Synthetic additive-noise data (the default when no files are given).
    #[arg(long, value_enum)]
    synthetic: Option<ShapeArg>,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, value_enum, default_value = "improved")]
    hsic_bound: BoundArg,
    /// Fixed HSIC kernel bandwidth. Non-private runs default to the median heuristic.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REGRESSION_BANDWIDTH)]
    regression_bandwidth: f64,
    #[arg(long, default_value_t = 0.5)]
    test_fraction: f64,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        let datasets = if let Some(dir) = &self.pairs_dir {
            DatasetSpec::Dir(dir.clone())
        } else if let Some(file) = &self.pairs_file {
            DatasetSpec::File(file.clone())
        } else {
            let shape = match self.synthetic.unwrap_or(ShapeArg::Cubic) {
                ShapeArg::Cubic => Shape::Cubic,
                ShapeArg::Sigmoid => Shape::Sigmoid,
                ShapeArg::LinearGaussian => Shape::LinearGaussian,
            };
            DatasetSpec::Synthetic {
                shape,
                n_total: self.samples,
                noise: self.noise,
            }
        };
        ExperimentConfig {
            datasets,
            scores: self.score.clone(),
            epsilons: self.epsilon.clone(),
            lambdas: self.lambda.clone(),
            delta: self.delta,
            delta_prime: self.delta_prime,
            target: match self.target {
                TargetArg::Test => PrivacyTarget::Test,
                TargetArg::Train => PrivacyTarget::Train,
                TargetArg::Both => PrivacyTarget::Both,
            },
            trials: self.trials,
            seed: self.seed,
            hsic_bound: self.hsic_bound.into(),
            score_bandwidth: self.bandwidth,
            regression_bandwidth: self.regression_bandwidth,
            test_fraction: self.test_fraction,
        }
    }
}

#[derive(Args)]
struct UtilityArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.04,0.1,0.2,1")]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.1,1")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Test-set sizes for the score audits.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Replacement values per coordinate.
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
    /// Training-set size for the regression audit.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SCORE_BANDWIDTH)]
    bandwidth: f64,
    #[arg(long, default_value_t = DEFAULT_REGRESSION_BANDWIDTH)]
    regression_bandwidth: f64,
    #[arg(long, value_enum, default_value = "improved")]
    hsic_bound: BoundArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_table<T: Serialize>(rows: &[T], format: FormatArg, out: Option<&Path>) -> Result<()> {
    let encode = |e: &dyn std::fmt::Display| Error::Encode(e.to_string());
    let text = match format {
        FormatArg::Json => serde_json::to_string_pretty(rows).map_err(|e| encode(&e))? + "\n",
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| encode(&e))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| encode(&e))?).map_err(|e| encode(&e))?
        }
    };
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn outcome_text(o: ReleaseOutcome) -> String {
    match o {
        ReleaseOutcome::Released(v) => format!("{v:.6}"),
        ReleaseOutcome::Bottom => "bottom".into(),
    }
}

fn run_infer(args: &RunArgs) -> Result<ExitCode> {
    let out = cmd_infer(&args.config())?;
    println!("dataset: {} (n = {}, m = {})", out.dataset, out.n, out.m);
    if out.truth != Direction::Unknown {
        println!("ground truth: {}", out.truth);
    }
    let code = match &out.private {
        None => {
            let r = &out.report;
            println!("score: {}", r.score_kind);
            println!("s_xy: {:.6}  s_yx: {:.6}", r.s_xy, r.s_yx);
            println!("margin: {:.6}", r.margin);
            println!("decision: {}", r.decision);
            ExitCode::SUCCESS
        }
        Some(p) => {
            println!(
                "score: {} (private, target {})",
                p.score_kind,
                args.config().target.name()
            );
            println!(
                "p_xy: {}  p_yx: {}",
                outcome_text(p.outcome_xy),
                outcome_text(p.outcome_yx)
            );
            println!("noise scale: {:.6}", p.noise_scale);
            if let Some(u) = p.predicted_utility {
                println!("predicted utility: {u:.6}");
            }
            println!("budget: epsilon {} delta {}", p.budget.epsilon, p.budget.delta);
            println!("decision: {}", p.decision);
            if !matches!(args.config().datasets, DatasetSpec::Synthetic { .. }) {
                println!("caveat: min-max normalization uses the unprivatized extremes of the data");
            }
            if p.decision == Decision::Abstain {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    };
    if let Some(path) = &args.out {
        emit_report(&out.rows, args.format.into(), Some(path))?;
    }
    Ok(code)
}

fn run_sweep(args: &RunArgs) -> Result<ExitCode> {
    let rows = cmd_sweep(&args.config(), args.threads)?;
    emit_report(&rows, args.format.into(), args.out.as_deref())?;
    let trials: Vec<_> = rows.iter().filter(|r| r.is_trial()).collect();
    Ok(if !trials.is_empty() && trials.iter().all(|r| r.is_abstained()) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_verify_utility(args: &UtilityArgs) -> Result<ExitCode> {
    let rows = verify_utility(&args.gamma, &args.sigma, args.draws, args.seed)?;
    write_table(&rows, args.format, args.out.as_deref())?;
    Ok(if rows.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_verify_sensitivity(args: &SensitivityArgs) -> Result<ExitCode> {
    let kernel = KernelSpec::squared_exponential(args.bandwidth)?;
    let mut rows: Vec<SensitivityAudit> = Vec::new();
    for &m in &args.m {
        for kind in [ScoreKind::SpearmanRho, ScoreKind::KendallTau, ScoreKind::Hsic] {
            rows.push(audit_test_sensitivity(
                kind,
                m,
                args.instances,
                args.grid_points,
                kernel,
                args.hsic_bound.into(),
                args.seed,
            )?);
        }
    }
    let regression = KernelSpec::squared_exponential(args.regression_bandwidth)?;
    for &lambda in &args.lambda {
        let m = args.m.iter().copied().max().unwrap_or(50);
        rows.push(audit_residual_bound(
            args.n,
            m,
            lambda,
            regression,
            args.instances,
            args.seed,
        )?);
    }
    write_table(&rows, args.format, args.out.as_deref())?;
    Ok(if rows.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Infer(a) => run_infer(a),
        Command::Sweep(a) => run_sweep(a),
        Command::VerifyUtility(a) => run_verify_utility(a),
        Command::VerifySensitivity(a) => run_verify_sensitivity(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
