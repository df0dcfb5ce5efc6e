// SPDX-License-Identifier: Apache-2.0

//! Propose-test-release for functions that are stable under training changes.

use rand::RngCore;

use super::{laplace_sample, PrivacyParams, ReleaseOutcome};
use crate::error::{check_lambda, check_min_len, Error, Result};
use crate::regression::ResidualVector;

/// Lower bound on how many training substitutions are needed before the
/// ranks of the test residuals can change: `⌊n γ λ^{3/2} / 16⌋`, where `γ`
/// is the smallest gap between adjacent sorted residual values.
pub fn rank_train_stability_distance(residuals: &ResidualVector, n: usize, lambda: f64) -> Result<u64> {
    check_min_len(residuals.as_slice(), 2)?;
    check_lambda(lambda)?;
    let mut sorted = residuals.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if gap <= 0.0 {
        return Ok(0);
    }
    Ok((n as f64 * gap * lambda.powf(1.5) / 16.0).floor() as u64)
}

/// Releases `value` unchanged iff `distance + Lap(1/ε) > ln(1/δ)/ε`, otherwise ⊥.
pub fn propose_test_release_stable<R: RngCore + ?Sized>(
    value: f64,
    distance: u64,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseOutcome> {
    let (eps, delta) = (params.epsilon(), params.delta());
    if delta <= 0.0 {
        return Err(Error::Unsupported(
            "propose-test-release with delta = 0 (it needs delta > 0)".into(),
        ));
    }
    let noisy = distance as f64 + laplace_sample(1.0 / eps, rng);
    let threshold = (1.0 / delta).ln() / eps;
    Ok(if noisy > threshold {
        ReleaseOutcome::Released(value)
    } else {
        ReleaseOutcome::Bottom
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn release_rate(distance: u64, eps: f64, delta: f64, draws: usize) -> f64 {
        let params = PrivacyParams::new(eps, delta, 0).unwrap();
        let mut rng = rng_from_seed(77 + distance);
        let mut hits = 0usize;
        for _ in 0..draws {
            match propose_test_release_stable(0.42, distance, &params, &mut rng).unwrap() {
                ReleaseOutcome::Released(v) => {
                    assert_eq!(v, 0.42);
                    hits += 1;
                }
                ReleaseOutcome::Bottom => {}
            }
        }
        hits as f64 / draws as f64
    }

    fn within_3se(hat: f64, p: f64, draws: usize) -> bool {
        let se = (p * (1.0 - p) / draws as f64).sqrt().max(1.0 / draws as f64);
        (hat - p).abs() <= 3.0 * se
    }

    #[test]
    fn distance_examples() {
        let r = ResidualVector(vec![0.0, 0.1, 0.3, 0.7]);
        // γ = 0.1, λ^{3/2} = 0.512: ⌊1000 · 0.1 · 0.512 / 16⌋ = ⌊3.2⌋
        assert_eq!(rank_train_stability_distance(&r, 1000, 0.64).unwrap(), 3);
        let dup = ResidualVector(vec![0.5, -0.2, 0.5, 0.9]);
        assert_eq!(rank_train_stability_distance(&dup, 1_000_000, 1.0).unwrap(), 0);
        let doubled = ResidualVector(r.0.iter().map(|v| v * 2.0).collect());
        let d1 = rank_train_stability_distance(&r, 10_000, 1.0).unwrap();
        let d2 = rank_train_stability_distance(&doubled, 10_000, 1.0).unwrap();
        assert_eq!(d1, 62);
        assert_eq!(d2, 125);
        assert!(rank_train_stability_distance(&r, 10, 0.0).is_err());
        assert!(rank_train_stability_distance(&ResidualVector(vec![1.0]), 10, 0.5).is_err());
    }

    #[test]
    fn requires_positive_delta() {
        let params = PrivacyParams::new(1.0, 0.0, 0).unwrap();
        let out = propose_test_release_stable(1.0, 100, &params, &mut rng_from_seed(0));
        assert!(matches!(out, Err(Error::Unsupported(_))));
    }

    #[test]
    fn release_probabilities() {
        let draws = 200_000;
        // 1 - ½ e^{-(10 - ln 100)}
        let p10 = 1.0 - 0.5 * (-(10.0 - 100f64.ln())).exp();
        assert!((p10 - 0.99773).abs() < 1e-5);
        assert!(within_3se(release_rate(10, 1.0, 0.01, draws), p10, draws));
        // ½ e^{-ln 100} = δ/2
        let hat0 = release_rate(0, 1.0, 0.01, draws);
        assert!(within_3se(hat0, 0.005, draws));
    }

    #[test]
    fn stability_guarantee() {
        let (eps, delta, beta) = (1.0, 0.01, 0.05);
        let needed = (((1.0f64 / delta).ln() + (1.0f64 / beta).ln()) / eps).ceil() as u64;
        let draws = 200_000;
        let hat = release_rate(needed, eps, delta, draws);
        let se = (beta * (1.0 - beta) / draws as f64).sqrt();
        assert!(hat >= 1.0 - beta - 3.0 * se, "{hat}");
    }
}
