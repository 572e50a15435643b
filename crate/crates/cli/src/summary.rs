//! Posterior summary statistics: medians, highest-density intervals,
//! draw-wise RMSE, and Monte-Carlo standard errors.

use ctmcgp_core::error::{Error, Result};
use ctmcgp_core::state::PairIndex;

/// Median of a sample (averages the two central order statistics).
pub fn median(draws: &[f64]) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Shortest contiguous interval containing the given posterior mass.
pub fn hpdi(draws: &[f64], mass: f64) -> (f64, f64) {
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (v[0], v[n - 1]);
    let mut best_width = f64::INFINITY;
    for i in 0..=(n - m) {
        let width = v[i + m - 1] - v[i];
        if width < best_width {
            best_width = width;
            best = (v[i], v[i + m - 1]);
        }
    }
    best
}

/// Root mean square error between a draw and the truth.
pub fn rmse(draw: &[f64], truth: &[f64]) -> f64 {
    let n = draw.len() as f64;
    (draw
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Batch-means Monte-Carlo standard error of the mean.
pub fn mcse(draws: &[f64]) -> f64 {
    let n = draws.len();
    let b = (n as f64).sqrt().floor().max(1.0) as usize;
    let m = n / b;
    if m < 2 {
        return f64::INFINITY;
    }
    let means: Vec<f64> = (0..m)
        .map(|k| draws[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let grand: f64 = means.iter().sum::<f64>() / m as f64;
    let var: f64 = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    (var / m as f64).sqrt()
}

pub fn mean(draws: &[f64]) -> f64 {
    draws.iter().sum::<f64>() / draws.len() as f64
}

/// Map log-rates to normalized log-rates log λ_ij = θ_ij − log β(θ).
///
/// The additive level of θ is not identified by the likelihood (it cancels
/// in the normalization), so posterior summaries and RMSE comparisons
/// against a truth are made on this normalized scale.
pub fn normalized_log_rates(theta: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    let size = ctmcgp_core::rates::infer_size(theta.len())?;
    if pi.len() != size {
        return Err(Error::input("pi length does not match theta dimension"));
    }
    let pairs = PairIndex::new(size);
    let mut beta = 0.0;
    for (k, (i, _)) in pairs.iter().enumerate() {
        beta += pi[i] * theta[k].exp();
    }
    if beta <= 0.0 {
        return Err(Error::numerical("normalizing constant is not positive"));
    }
    let log_beta = beta.ln();
    Ok(theta.iter().map(|t| t - log_beta).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_hpdi_on_degenerate_chains() {
        let draws = vec![2.5; 40];
        assert_eq!(median(&draws), 2.5);
        let (lo, hi) = hpdi(&draws, 0.95);
        assert_eq!(lo, 2.5);
        assert_eq!(hi, 2.5);
    }

    #[test]
    fn hpdi_prefers_the_dense_region() {
        // 95 draws near zero, 5 outliers at 100: the interval must not span
        let mut draws: Vec<f64> = (0..95).map(|k| k as f64 * 0.01).collect();
        draws.extend((0..5).map(|k| 100.0 + k as f64));
        let (lo, hi) = hpdi(&draws, 0.95);
        assert!(lo >= 0.0 && hi <= 1.0, "({lo}, {hi})");
    }

    #[test]
    fn rmse_of_identical_vectors_is_zero() {
        let a = vec![1.0, -2.0, 3.0];
        assert_eq!(rmse(&a, &a), 0.0);
        assert!((rmse(&[1.0, 1.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_removes_the_additive_level() {
        let theta = vec![0.3, -0.5, 0.9, 0.1, -0.2, 0.4];
        let pi = vec![1.0 / 3.0; 3];
        let base = normalized_log_rates(&theta, &pi).unwrap();
        let shifted: Vec<f64> = theta.iter().map(|t| t + 1.7).collect();
        let shifted_norm = normalized_log_rates(&shifted, &pi).unwrap();
        for (a, b) in base.iter().zip(&shifted_norm) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mcse_shrinks_with_sample_size() {
        let small: Vec<f64> = (0..100).map(|k| ((k * 7919) % 100) as f64 / 100.0).collect();
        let big: Vec<f64> = (0..10_000).map(|k| ((k * 7919) % 100) as f64 / 100.0).collect();
        assert!(mcse(&big) < mcse(&small));
    }
}
