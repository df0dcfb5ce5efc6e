// SPDX-License-Identifier: Apache-2.0

//! Dependence scores between a candidate cause and a regression residual.
//!
//! Rank scores break ties by original index, so every input yields a strict
//! permutation of ranks and all scores are deterministic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_min_len, check_same_len, Error, Result};
use crate::kernel::KernelSpec;

/// Negative HSIC values down to this magnitude are rounding noise and are clamped to zero.
pub const HSIC_CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    SpearmanRho,
    KendallTau,
    Hsic,
    Iqr,
    Variance,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::SpearmanRho,
        ScoreKind::KendallTau,
        ScoreKind::Hsic,
        ScoreKind::Iqr,
        ScoreKind::Variance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::SpearmanRho => "spearman",
            ScoreKind::KendallTau => "kendall",
            ScoreKind::Hsic => "hsic",
            ScoreKind::Iqr => "iqr",
            ScoreKind::Variance => "variance",
        }
    }

    pub fn is_rank(self) -> bool {
        matches!(self, ScoreKind::SpearmanRho | ScoreKind::KendallTau)
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown score '{s}' (expected spearman, kendall, hsic, iqr or variance)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub kind: ScoreKind,
    pub value: f64,
}

/// Ranks `1..=m`, one per input element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Indices of `values` in stable increasing order.
pub(crate) fn stable_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order
}

pub fn rank_vector(values: &[f64]) -> Result<RankVector> {
    check_min_len(values, 1)?;
    check_finite(values)?;
    let mut ranks = vec![0; values.len()];
    for (pos, idx) in stable_order(values).into_iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    Ok(RankVector(ranks))
}

fn check_pair(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    check_same_len(a, b)?;
    check_min_len(a, min)?;
    check_finite(a)?;
    check_finite(b)
}

pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<ScoreValue> {
    check_pair(a, b, 2)?;
    let ra = rank_vector(a)?;
    let rb = rank_vector(b)?;
    let sum_sq: u64 = ra
        .as_slice()
        .iter()
        .zip(rb.as_slice())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    let m = a.len() as f64;
    let value = (1.0 - 6.0 * sum_sq as f64 / (m * (m * m - 1.0))).abs();
    Ok(ScoreValue {
        kind: ScoreKind::SpearmanRho,
        value,
    })
}

/// Counts inversions of `seq` by merge sort, sorting it in place.
fn count_inversions(seq: &mut [usize], scratch: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = seq.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        count_inversions(left, sl) + count_inversions(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            scratch[k] = seq[i];
            i += 1;
        } else {
            scratch[k] = seq[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&seq[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&seq[j..n]);
    seq.copy_from_slice(&scratch[..n]);
    inv
}

/// Concordant minus discordant pair count under index tie-breaking, in `O(m log m)`.
pub(crate) fn kendall_balance(a: &[f64], b: &[f64]) -> i64 {
    let rb = rank_vector(b).expect("validated input").into_inner();
    let mut seq: Vec<usize> = stable_order(a).into_iter().map(|i| rb[i]).collect();
    let mut scratch = vec![0; seq.len()];
    let discordant = count_inversions(&mut seq, &mut scratch) as i64;
    let m = a.len() as i64;
    let total = m * (m - 1) / 2;
    (total - discordant) - discordant
}

pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<ScoreValue> {
    check_pair(a, b, 2)?;
    let m = a.len() as f64;
    let balance = kendall_balance(a, b);
    Ok(ScoreValue {
        kind: ScoreKind::KendallTau,
        value: balance.unsigned_abs() as f64 / (0.5 * m * (m - 1.0)),
    })
}

/// Sufficient statistics of `trace(KHLH)` for the centered-matrix identity
/// `trace(KHLH) = sum(K∘L) - (2/m) <K1, L1> + (1/m^2) (1'K1)(1'L1)`.
#[derive(Debug, Clone)]
pub(crate) struct HsicStats {
    pub m: usize,
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    pub k_rows: Vec<f64>,
    pub l_rows: Vec<f64>,
}

impl HsicStats {
    pub fn new(a: &[f64], b: &[f64], ka: &KernelSpec, kb: &KernelSpec) -> Self {
        let m = a.len();
        let k = ka.gram(a);
        let l = kb.gram(b);
        let k_rows = k.chunks(m).map(|r| r.iter().sum()).collect();
        let l_rows = l.chunks(m).map(|r| r.iter().sum()).collect();
        Self {
            m,
            k,
            l,
            k_rows,
            l_rows,
        }
    }

    pub fn trace_khlh(&self) -> f64 {
        let m = self.m as f64;
        let hadamard: f64 = self.k.iter().zip(&self.l).map(|(x, y)| x * y).sum();
        let cross: f64 = self.k_rows.iter().zip(&self.l_rows).map(|(x, y)| x * y).sum();
        let k_sum: f64 = self.k_rows.iter().sum();
        let l_sum: f64 = self.l_rows.iter().sum();
        hadamard - 2.0 * cross / m + k_sum * l_sum / (m * m)
    }

    pub fn hsic(&self) -> f64 {
        let denom = (self.m as f64 - 1.0).powi(2);
        clamp_hsic(self.trace_khlh() / denom)
    }
}

pub(crate) fn clamp_hsic(v: f64) -> f64 {
    if (-HSIC_CLAMP_TOLERANCE..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Biased (V-statistic) HSIC estimate `trace(KHLH) / (m-1)^2`.
pub fn hsic(a: &[f64], b: &[f64], ka: &KernelSpec, kb: &KernelSpec) -> Result<ScoreValue> {
    check_pair(a, b, 2)?;
    for kernel in [ka, kb] {
        if !(kernel.bandwidth() > 0.0) {
            return Err(Error::invalid("bandwidth", kernel.bandwidth(), "must be positive"));
        }
    }
    Ok(ScoreValue {
        kind: ScoreKind::Hsic,
        value: HsicStats::new(a, b, ka, kb).hsic(),
    })
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median pairwise absolute difference. Data-dependent, so only for non-private runs.
pub fn median_heuristic_bandwidth(values: &[f64]) -> Result<f64> {
    check_min_len(values, 2)?;
    check_finite(values)?;
    let m = values.len();
    let mut gaps = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            gaps.push((values[i] - values[j]).abs());
        }
    }
    gaps.sort_by(f64::total_cmp);
    let median = median_of_sorted(&gaps);
    if median <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero"));
    }
    Ok(median)
}

/// Linear-interpolation ("type 7") quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() && frac > 0.0 {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

pub(crate) fn iqr_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)
}

pub fn iqr(values: &[f64]) -> Result<f64> {
    check_min_len(values, 4)?;
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(iqr_sorted(&sorted))
}

pub fn log_iqr(values: &[f64]) -> Result<f64> {
    let range = iqr(values)?;
    if range <= 0.0 {
        return Err(Error::Degenerate("interquartile range is zero"));
    }
    Ok(range.ln())
}

pub fn iqr_score(a: &[f64], b: &[f64]) -> Result<ScoreValue> {
    check_same_len(a, b)?;
    Ok(ScoreValue {
        kind: ScoreKind::Iqr,
        value: log_iqr(a)? + log_iqr(b)?,
    })
}

/// Population variance (divides by `m`).
pub fn variance(values: &[f64]) -> Result<f64> {
    check_min_len(values, 2)?;
    check_finite(values)?;
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m)
}

/// Non-private baseline: `ln V(a) + ln V(b)`.
pub fn variance_score(a: &[f64], b: &[f64]) -> Result<ScoreValue> {
    check_same_len(a, b)?;
    let (va, vb) = (variance(a)?, variance(b)?);
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::Degenerate("variance is zero"));
    }
    Ok(ScoreValue {
        kind: ScoreKind::Variance,
        value: va.ln() + vb.ln(),
    })
}

/// Evaluates `kind` on `(a, b)` with the given HSIC kernels.
pub fn score(kind: ScoreKind, a: &[f64], b: &[f64], ka: &KernelSpec, kb: &KernelSpec) -> Result<ScoreValue> {
    match kind {
        ScoreKind::SpearmanRho => spearman_rho(a, b),
        ScoreKind::KendallTau => kendall_tau(a, b),
        ScoreKind::Hsic => hsic(a, b, ka, kb),
        ScoreKind::Iqr => iqr_score(a, b),
        ScoreKind::Variance => variance_score(a, b),
    }
}
