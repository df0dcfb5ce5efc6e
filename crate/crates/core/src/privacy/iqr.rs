// SPDX-License-Identifier: Apache-2.0

//! Propose-test-release for the log interquartile range.
//!
//! The log-IQR is bracketed by two unit-width bins, the second shifted by
//! one half. For each bin we count how many substitutions an adversary needs
//! to push the log-IQR out of it, noise the counts, and release the log-IQR
//! with Laplace noise only if one of the noisy counts clears
//! `1 + ln(1/δ)/ε`.

use rand::RngCore;

use super::{laplace_sample, PrivacyParams, ReleaseOutcome};
use crate::error::{check_finite, check_min_len, Error, Result};
use crate::scores::iqr_sorted;

/// Half-open interval `[lo, hi)` in log space. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogInterval {
    pub lo: f64,
    pub hi: f64,
}

impl LogInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    /// `ln(iqr)` lies in the interval (`iqr = 0` maps to `-∞`).
    pub fn contains_iqr(&self, iqr: f64) -> bool {
        let q = if iqr > 0.0 { iqr.ln() } else { f64::NEG_INFINITY };
        if q == f64::NEG_INFINITY {
            return self.lo == f64::NEG_INFINITY;
        }
        q >= self.lo && q < self.hi
    }
}

/// `B₁ = [⌊q⌋, ⌊q⌋+1)` and `B₂ = [⌊q+½⌋-½, ⌊q+½⌋+½)`.
pub fn iqr_bins(log_iqr: f64) -> [LogInterval; 2] {
    let b1 = log_iqr.floor();
    let b2 = (log_iqr + 0.5).floor() - 0.5;
    [LogInterval::new(b1, b1 + 1.0), LogInterval::new(b2, b2 + 1.0)]
}

/// Type-7 quartile positions and weights for sample size `m`.
struct QuartileLayout {
    m: usize,
    lower: (usize, f64),
    upper: (usize, f64),
}

impl QuartileLayout {
    fn new(m: usize) -> Self {
        let pos = |p: f64| {
            let h = (m - 1) as f64 * p;
            let j = h.floor() as usize;
            (j, h - j as f64)
        };
        Self {
            m,
            lower: pos(0.25),
            upper: pos(0.75),
        }
    }

    /// Same arithmetic as [`crate::scores::quantile_sorted`], with `y` giving the
    /// sorted value at a position.
    fn iqr_with(&self, y: impl Fn(usize) -> f64) -> f64 {
        let q = |(j, frac): (usize, f64)| {
            if j + 1 < self.m && frac > 0.0 {
                y(j) + frac * (y(j + 1) - y(j))
            } else {
                y(j)
            }
        };
        q(self.upper) - q(self.lower)
    }

    /// Sorted positions that carry nonzero weight in the IQR, and their net weights.
    fn weights(&self) -> Vec<(usize, f64)> {
        let mut w: Vec<(usize, f64)> = Vec::with_capacity(4);
        let mut add = |j: usize, v: f64| {
            if v == 0.0 {
                return;
            }
            match w.iter_mut().find(|(p, _)| *p == j) {
                Some((_, acc)) => *acc += v,
                None => w.push((j, v)),
            }
        };
        let (j1, g1) = self.lower;
        let (j3, g3) = self.upper;
        add(j1, -(1.0 - g1));
        add(j1 + 1, -g1);
        add(j3, 1.0 - g3);
        add(j3 + 1, g3);
        w.sort_by_key(|(p, _)| *p);
        w
    }

    fn first_weighted(&self) -> usize {
        self.lower.0
    }

    fn last_weighted(&self) -> usize {
        let (j3, g3) = self.upper;
        if g3 > 0.0 {
            j3 + 1
        } else {
            j3
        }
    }

    /// Smallest `k` for which the IQR can be made arbitrarily large.
    fn unbounded_from(&self) -> usize {
        (self.first_weighted() + 1).min(self.m - self.last_weighted())
    }

    /// Supremum of the IQR over all datasets within `k` substitutions of `sorted`.
    ///
    /// Optimal attacks move `a` points to `+∞` and `b = k - a` to `-∞`, taken
    /// from between the quartiles, so upper positions read `x[j + a]` and lower
    /// positions `x[j - b]`.
    fn max_iqr(&self, sorted: &[f64], k: usize) -> f64 {
        if k >= self.unbounded_from() {
            return f64::INFINITY;
        }
        let weights = self.weights();
        let sign = |j: usize| weights.iter().find(|(p, _)| *p == j).map_or(0.0, |(_, w)| *w);
        (0..=k)
            .map(|a| {
                let b = k - a;
                self.iqr_with(|j| if sign(j) > 0.0 { sorted[j + a] } else { sorted[j - b] })
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Infimum of the IQR over all datasets within `k` substitutions of `sorted`.
    ///
    /// Optimal attacks drop `a` points from the top and `b = k - a` from the
    /// bottom and insert `k` copies of one value `c`. With `r` kept points
    /// below `c`, sorted position `j` reads `x[j + b]` below the block,
    /// `c` inside it and `x[j - a]` above it.
    fn min_iqr(&self, sorted: &[f64], k: usize) -> f64 {
        let m = self.m;
        if k == 0 {
            return iqr_sorted(sorted);
        }
        if k > self.last_weighted() - self.first_weighted() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for a in 0..=k {
            let b = k - a;
            for r in 0..=(m - k) {
                let lo_c = if r > 0 { Some(sorted[b + r - 1]) } else { None };
                let hi_c = if r < m - k { Some(sorted[b + r]) } else { None };
                for c in [lo_c, hi_c].into_iter().flatten() {
                    let v = self.iqr_with(|j| {
                        if j < r {
                            sorted[j + b]
                        } else if j < r + k {
                            c
                        } else {
                            sorted[j - a]
                        }
                    });
                    best = best.min(v);
                }
            }
        }
        best.max(0.0)
    }
}

/// Smallest `k` in `1..=limit` with `pred(k)`, for a monotone predicate.
fn first_true(limit: usize, pred: impl Fn(usize) -> bool) -> Option<usize> {
    if limit == 0 || !pred(limit) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, limit);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Minimum number of element substitutions that moves `ln IQR(values)` out of
/// `interval`. Returns `m + 1` when no number of substitutions can.
pub fn iqr_attack_count(values: &[f64], interval: LogInterval) -> Result<usize> {
    check_min_len(values, 4)?;
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let current = iqr_sorted(&sorted);
    if current <= 0.0 {
        return Err(Error::Degenerate("interquartile range is zero"));
    }
    if !interval.contains_iqr(current) {
        return Err(Error::invalid(
            "interval",
            current.ln(),
            "must contain the current log-IQR",
        ));
    }
    let m = sorted.len();
    let layout = QuartileLayout::new(m);
    let up = (interval.hi < f64::INFINITY)
        .then(|| first_true(m, |k| layout.max_iqr(&sorted, k).ln() >= interval.hi))
        .flatten();
    let down = (interval.lo > f64::NEG_INFINITY)
        .then(|| {
            first_true(m, |k| {
                let v = layout.min_iqr(&sorted, k);
                v <= 0.0 || v.ln() < interval.lo
            })
        })
        .flatten();
    Ok(match (up, down) {
        (Some(u), Some(d)) => u.min(d),
        (Some(u), None) => u,
        (None, Some(d)) => d,
        (None, None) => m + 1,
    })
}

/// Lower bound on the number of training substitutions that moves the log-IQR
/// of the test residuals out of `interval`, when each substitution moves
/// every residual by at most `shift`.
///
/// `k` substitutions move each quartile by at most `k·shift`, so the IQR
/// stays within `iqr ± 2k·shift`.
pub fn train_iqr_attack_count(iqr: f64, interval: LogInterval, shift: f64) -> Result<usize> {
    if !(iqr > 0.0) {
        return Err(Error::Degenerate("interquartile range is zero"));
    }
    if !(shift > 0.0 && shift.is_finite()) {
        return Err(Error::invalid("shift", shift, "must be positive"));
    }
    if !interval.contains_iqr(iqr) {
        return Err(Error::invalid("interval", iqr.ln(), "must contain the current log-IQR"));
    }
    let step = 2.0 * shift;
    let up = if interval.hi.is_finite() {
        ((interval.hi.exp() - iqr) / step).ceil().max(1.0)
    } else {
        f64::INFINITY
    };
    // need iqr - k·step < e^lo strictly
    let down = if interval.lo.is_finite() {
        ((iqr - interval.lo.exp()) / step).floor() + 1.0
    } else {
        f64::INFINITY
    };
    let count = up.min(down);
    Ok(if count.is_finite() {
        count.min(usize::MAX as f64 / 2.0) as usize
    } else {
        usize::MAX
    })
}

/// Shared release step: given `ln IQR` and the attack count for each bin,
/// returns `ln IQR + Lap(1/ε)` if `max_j (A_j + Lap(1/ε)) > 1 + ln(1/δ)/ε`.
///
/// Noise is drawn in a fixed order: one draw per bin, then the release draw.
pub fn ptr_log_iqr<R: RngCore + ?Sized>(
    log_iqr: f64,
    attack_counts: [usize; 2],
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseOutcome> {
    let (eps, delta) = (params.epsilon(), params.delta());
    if delta <= 0.0 {
        return Err(Error::Unsupported(
            "private IQR release with delta = 0 (it needs delta > 0)".into(),
        ));
    }
    let scale = 1.0 / eps;
    let threshold = 1.0 + (1.0 / delta).ln() / eps;
    let best = attack_counts
        .iter()
        .map(|&a| a as f64 + laplace_sample(scale, rng))
        .fold(f64::NEG_INFINITY, f64::max);
    let release_noise = laplace_sample(scale, rng);
    Ok(if best > threshold {
        ReleaseOutcome::Released(log_iqr + release_noise)
    } else {
        ReleaseOutcome::Bottom
    })
}

/// `(3ε, δ)`-private release of `ln IQR(values)` protecting the elements of `values`.
///
/// A zero IQR yields ⊥ rather than an error, so the failure path has the same
/// privacy behavior as an ordinary abstention. The noise stream is consumed
/// identically in both cases.
pub fn private_log_iqr<R: RngCore + ?Sized>(
    values: &[f64],
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseOutcome> {
    check_min_len(values, 4)?;
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = iqr_sorted(&sorted);
    if range <= 0.0 {
        if params.delta() <= 0.0 {
            return Err(Error::Unsupported(
                "private IQR release with delta = 0 (it needs delta > 0)".into(),
            ));
        }
        for _ in 0..3 {
            laplace_sample(1.0 / params.epsilon(), rng);
        }
        return Ok(ReleaseOutcome::Bottom);
    }
    let q = range.ln();
    let [b1, b2] = iqr_bins(q);
    let counts = [iqr_attack_count(values, b1)?, iqr_attack_count(values, b2)?];
    ptr_log_iqr(q, counts, params, rng)
}
