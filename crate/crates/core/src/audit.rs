// SPDX-License-Identifier: Apache-2.0

//! Empirical checks of the closed-form utility predictions and of the
//! sensitivity bounds, by simulation and by exhaustive substitution search.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{utility_four_score, utility_two_score};
use crate::kernel::KernelSpec;
use crate::privacy::{laplace_sample, test_sensitivity, HsicBound};
use crate::regression::{fit_krr, residual_perturbation_bound};
use crate::scores::{clamp_hsic, kendall_tau, spearman_rho, HsicStats, ScoreKind};
use crate::seed::{self, Part};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityFormula {
    TwoScore,
    FourScore,
}

impl UtilityFormula {
    pub fn name(self) -> &'static str {
        match self {
            UtilityFormula::TwoScore => "two-score",
            UtilityFormula::FourScore => "four-score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityCheck {
    pub formula: UtilityFormula,
    pub gamma: f64,
    pub sigma: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub gap: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Simulated `P(γ + Σ L_left - Σ L_right > 0)` with `terms` Laplace draws per side.
pub fn simulate_correct_rate(gamma: f64, sigma: f64, terms: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = seed::stream(seed, &[Part::Str("utility"), Part::Int(terms as u64)]);
    let mut hits = 0usize;
    for _ in 0..draws {
        let mut total = gamma;
        for _ in 0..terms {
            total += laplace_sample(sigma, &mut rng) - laplace_sample(sigma, &mut rng);
        }
        hits += usize::from(total > 0.0);
    }
    hits as f64 / draws as f64
}

/// Closed forms against simulation on every `(γ, σ)` cell; a cell passes
/// when the gap is within three standard errors.
pub fn verify_utility(gammas: &[f64], sigmas: &[f64], draws: usize, seed: u64) -> Result<Vec<UtilityCheck>> {
    if draws < 100_000 {
        return Err(Error::invalid("draws", draws as f64, "must be at least 100000"));
    }
    let mut cells = Vec::new();
    for formula in [UtilityFormula::TwoScore, UtilityFormula::FourScore] {
        for (gi, &gamma) in gammas.iter().enumerate() {
            for (si, &sigma) in sigmas.iter().enumerate() {
                cells.push((formula, gi, gamma, si, sigma));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(formula, gi, gamma, si, sigma)| {
            let (closed, terms) = match formula {
                UtilityFormula::TwoScore => (utility_two_score(gamma, sigma)?, 1),
                UtilityFormula::FourScore => (utility_four_score(gamma, sigma)?, 2),
            };
            let cell_seed = seed::derive(seed, &[Part::Int(gi as u64), Part::Int(si as u64)]);
            let estimate = simulate_correct_rate(gamma, sigma, terms, draws, cell_seed);
            let std_error = (closed * (1.0 - closed) / draws as f64).sqrt().max(1.0 / draws as f64);
            let gap = (estimate - closed).abs();
            Ok(UtilityCheck {
                formula,
                gamma,
                sigma,
                closed_form: closed,
                monte_carlo: estimate,
                gap,
                std_error,
                pass: gap <= 3.0 * std_error,
            })
        })
        .collect()
}

/// Relative slack for floating-point rounding when a bound is attained exactly.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityAudit {
    pub quantity: String,
    pub m: usize,
    pub instances: usize,
    pub empirical_max: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl SensitivityAudit {
    fn new(quantity: String, m: usize, instances: usize, empirical_max: f64, bound: f64) -> Self {
        let ratio = empirical_max / bound;
        Self {
            quantity,
            m,
            instances,
            empirical_max,
            bound,
            ratio,
            pass: ratio <= 1.0 + AUDIT_TOLERANCE,
        }
    }
}

/// Replacement candidates: a uniform grid on `[-1, 1]` plus, for rank
/// scores, one point inside every gap of the sorted values (and beyond both
/// ends), which covers every rank the replacement can take.
fn candidates(values: &[f64], grid_points: usize, with_gaps: bool) -> Vec<f64> {
    let mut out: Vec<f64> = (0..grid_points)
        .map(|g| -1.0 + 2.0 * g as f64 / (grid_points.max(2) - 1) as f64)
        .collect();
    if with_gaps {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        out.push(sorted[0] - 0.5);
        out.push(sorted[sorted.len() - 1] + 0.5);
        out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        out.extend_from_slice(&sorted);
    }
    out
}

fn random_instance<R: Rng>(m: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let coupling: f64 = rng.gen_range(0.0..=1.0);
    let b = a
        .iter()
        .map(|&v| (coupling * v + (1.0 - coupling) * rng.gen_range(-1.0..=1.0)).clamp(-1.0, 1.0))
        .collect();
    (a, b)
}

fn rank_score(kind: ScoreKind, a: &[f64], b: &[f64]) -> f64 {
    let s = match kind {
        ScoreKind::SpearmanRho => spearman_rho(a, b),
        ScoreKind::KendallTau => kendall_tau(a, b),
        _ => unreachable!("rank score expected"),
    };
    s.expect("valid audit instance").value
}

fn max_rank_change(kind: ScoreKind, a: &[f64], b: &[f64], grid_points: usize) -> f64 {
    let base = rank_score(kind, a, b);
    let mut worst = 0f64;
    for swap in [false, true] {
        let (mut u, v) = if swap { (b.to_vec(), a) } else { (a.to_vec(), b) };
        let cands = candidates(&u, grid_points, true);
        for i in 0..u.len() {
            let original = u[i];
            for &c in &cands {
                u[i] = c;
                let s = if swap {
                    rank_score(kind, v, &u)
                } else {
                    rank_score(kind, &u, v)
                };
                worst = worst.max((s - base).abs());
            }
            u[i] = original;
        }
    }
    worst
}

/// HSIC after replacing `a[i]` by `value`, updated from the cached sums in `O(m)`.
/// `hadamard` is the cached `sum(K∘L)` of the unmodified data.
fn hsic_after_substitution(
    stats: &HsicStats,
    hadamard: f64,
    a: &[f64],
    kernel: &KernelSpec,
    i: usize,
    value: f64,
) -> f64 {
    let m = stats.m;
    let (k, l) = (&stats.k, &stats.l);
    let mut hadamard = hadamard;
    let mut new_row_sum = 0.0;
    let mut cross = 0.0;
    let mut k_total = 0.0;
    for j in 0..m {
        let kij_new = if j == i { 1.0 } else { kernel.eval(value, a[j]) };
        new_row_sum += kij_new;
        if j != i {
            let kij = k[i * m + j];
            hadamard += 2.0 * (kij_new - kij) * l[i * m + j];
            let row = stats.k_rows[j] - kij + kij_new;
            cross += row * stats.l_rows[j];
            k_total += row;
        }
    }
    cross += new_row_sum * stats.l_rows[i];
    k_total += new_row_sum;
    let l_total: f64 = stats.l_rows.iter().sum();
    let mf = m as f64;
    let trace = hadamard - 2.0 * cross / mf + k_total * l_total / (mf * mf);
    clamp_hsic(trace / (mf - 1.0).powi(2))
}

fn max_hsic_change(a: &[f64], b: &[f64], kernel: &KernelSpec, grid_points: usize) -> f64 {
    let mut worst = 0f64;
    for (u, v) in [(a, b), (b, a)] {
        let stats = HsicStats::new(u, v, kernel, kernel);
        let base = stats.hsic();
        let hadamard: f64 = stats.k.iter().zip(&stats.l).map(|(x, y)| x * y).sum();
        let cands = candidates(u, grid_points, false);
        for i in 0..u.len() {
            for &c in &cands {
                let s = hsic_after_substitution(&stats, hadamard, u, kernel, i, c);
                worst = worst.max((s - base).abs());
            }
        }
    }
    worst
}

/// Largest single-substitution change of `kind` over random datasets of size `m`.
pub fn audit_test_sensitivity(
    kind: ScoreKind,
    m: usize,
    instances: usize,
    grid_points: usize,
    hsic_kernel: KernelSpec,
    hsic_bound: HsicBound,
    seed: u64,
) -> Result<SensitivityAudit> {
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let bound = test_sensitivity(kind, m, hsic_bound)?.value();
    let worst = (0..instances)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::stream(
                seed,
                &[Part::Str(kind.name()), Part::Int(m as u64), Part::Int(t as u64)],
            );
            let (a, b) = random_instance(m, &mut rng);
            match kind {
                ScoreKind::Hsic => max_hsic_change(&a, &b, &hsic_kernel, grid_points),
                _ => max_rank_change(kind, &a, &b, grid_points),
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(SensitivityAudit::new(
        kind.name().to_string(),
        m,
        instances,
        worst,
        bound,
    ))
}

/// Largest change of any test residual when one training pair is replaced,
/// against `8 / (n λ^{3/2})`.
pub fn audit_residual_bound(
    n: usize,
    m: usize,
    lambda: f64,
    kernel: KernelSpec,
    instances: usize,
    seed: u64,
) -> Result<SensitivityAudit> {
    let bound = residual_perturbation_bound(n, lambda)?;
    let worst = (0..instances)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = seed::stream(seed, &[Part::Str("krr"), Part::Int(n as u64), Part::Int(t as u64)]);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|&v| ((2.0 * v).sin() + rng.gen_range(-0.3..=0.3)).clamp(-1.0, 1.0))
                .collect();
            let x_test: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let base = fit_krr(&x, &y, kernel, lambda)?.predict(&x_test);
            let mut worst = 0f64;
            let replacements = [
                (1.0, -1.0),
                (-1.0, 1.0),
                (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)),
            ];
            for (rx, ry) in replacements {
                let i = rng.gen_range(0..n);
                let (mut x2, mut y2) = (x.clone(), y.clone());
                x2[i] = rx;
                y2[i] = ry;
                let moved = fit_krr(&x2, &y2, kernel, lambda)?.predict(&x_test);
                // residuals y - f(x) differ only through f
                for (p, q) in base.iter().zip(&moved) {
                    worst = worst.max((p - q).abs());
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(SensitivityAudit::new(
        format!("krr-residual(lambda={lambda})"),
        n,
        instances,
        worst,
        bound,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::hsic;

    #[test]
    fn incremental_hsic_matches_recompute() {
        let kernel = KernelSpec::squared_exponential(0.5).unwrap();
        let mut rng = seed::rng_from_seed(3);
        for _ in 0..20 {
            let (a, b) = random_instance(12, &mut rng);
            let stats = HsicStats::new(&a, &b, &kernel, &kernel);
            let hadamard: f64 = stats.k.iter().zip(&stats.l).map(|(x, y)| x * y).sum();
            for i in [0, 5, 11] {
                let v = rng.gen_range(-1.0..=1.0);
                let mut a2 = a.clone();
                a2[i] = v;
                let direct = hsic(&a2, &b, &kernel, &kernel).unwrap().value;
                assert!((hsic_after_substitution(&stats, hadamard, &a, &kernel, i, v) - direct).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn small_audits_pass() {
        let kernel = KernelSpec::squared_exponential(0.5).unwrap();
        for kind in [ScoreKind::SpearmanRho, ScoreKind::KendallTau, ScoreKind::Hsic] {
            let audit = audit_test_sensitivity(kind, 10, 20, 11, kernel, HsicBound::Improved, 1).unwrap();
            assert!(audit.pass, "{audit:?}");
            assert!(audit.empirical_max > 0.0);
        }
        let audit = audit_residual_bound(40, 10, 0.5, kernel, 5, 2).unwrap();
        assert!(audit.pass && audit.empirical_max > 0.0, "{audit:?}");
    }

    #[test]
    fn utility_table_shape() {
        let rows = verify_utility(&[0.0, 1.0], &[1.0], 100_000, 4).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.gap < 0.01));
        assert!(verify_utility(&[0.0], &[1.0], 10, 4).is_err());
    }
}
