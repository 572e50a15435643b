//! CTMC generator construction and normalization.
//!
//! Off-diagonal rates are a link function of unconstrained log-rates θ,
//! ordered by [`PairIndex`](crate::state::PairIndex). Dividing the generator
//! by β = Σ_{i≠j} π_i q_ij rescales time so the chain makes one expected jump
//! per unit: the "evolutionary time" scale. β is linear in Q, so any overall
//! scale factor on Q cancels in the normalized matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::state::PairIndex;

/// Link from unconstrained parameters to nonnegative rates.
///
/// Only the exponential link is implemented; the enum exists so a softplus
/// variant can be added without changing call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFunction {
    Exp,
}

impl LinkFunction {
    pub fn apply(&self, theta: f64) -> f64 {
        match self {
            LinkFunction::Exp => theta.exp(),
        }
    }
}

/// Validate a probability vector and return it renormalized to unit sum.
pub fn probability_vector(v: &[f64], name: &str) -> Result<Array1<f64>> {
    let mut sum = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::input(format!("{name}[{i}] = {x} is not a probability")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(Array1::from_iter(v.iter().map(|&x| x / sum)))
}

/// A CTMC generator, optionally together with its normalized counterpart.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    /// Unnormalized generator Q (events per natural time unit).
    q: Array2<f64>,
    /// Q/β, events per evolutionary time unit. Present after [`RateMatrix::normalize`].
    lambda: Option<Array2<f64>>,
    /// Normalizing constant β = Σ_{i≠j} π_i q_ij.
    beta: Option<f64>,
    /// A-priori state frequencies used for normalization.
    pi: Array1<f64>,
    /// Initial (root) state distribution π*.
    pi_init: Array1<f64>,
}

/// Build a generator from log-rates in pair-index order.
///
/// Diagonals are forced to minus the off-diagonal row sum, so rows sum to
/// zero exactly. π and π* default to uniform.
pub fn build_rate_matrix(theta: &[f64], link: LinkFunction) -> Result<RateMatrix> {
    let size = infer_size(theta.len())?;
    let pairs = PairIndex::new(size);
    let mut q = Array2::<f64>::zeros((size, size));
    for (k, (i, j)) in pairs.iter().enumerate() {
        let t = theta[k];
        if !t.is_finite() {
            return Err(Error::input(format!(
                "theta[{k}] (pair {}→{}) is not finite",
                i + 1,
                j + 1
            )));
        }
        let rate = link.apply(t);
        if !rate.is_finite() {
            return Err(Error::input(format!(
                "rate for pair {}→{} overflows (theta = {t})",
                i + 1,
                j + 1
            )));
        }
        q[[i, j]] = rate;
    }
    for i in 0..size {
        let row_sum: f64 = (0..size).filter(|&j| j != i).map(|j| q[[i, j]]).sum();
        q[[i, i]] = -row_sum;
    }
    let uniform = Array1::from_elem(size, 1.0 / size as f64);
    Ok(RateMatrix {
        q,
        lambda: None,
        beta: None,
        pi: uniform.clone(),
        pi_init: uniform,
    })
}

/// Recover S from a parameter vector of length S²−S.
pub fn infer_size(pair_count: usize) -> Result<usize> {
    let mut s = 2usize;
    while s * s - s < pair_count {
        s += 1;
    }
    if s * s - s != pair_count {
        return Err(Error::input(format!(
            "{pair_count} parameters do not correspond to S²−S for any integer S"
        )));
    }
    Ok(s)
}

impl RateMatrix {
    /// Wrap an existing generator matrix.
    pub fn from_generator(q: Array2<f64>) -> Result<Self> {
        crate::expm::validate_generator(&q)?;
        let size = q.nrows();
        let uniform = Array1::from_elem(size, 1.0 / size as f64);
        Ok(RateMatrix {
            q,
            lambda: None,
            beta: None,
            pi: uniform.clone(),
            pi_init: uniform,
        })
    }

    pub fn size(&self) -> usize {
        self.q.nrows()
    }

    /// Unnormalized generator Q.
    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    /// Normalized generator Λ = Q/β.
    pub fn lambda(&self) -> Result<&Array2<f64>> {
        self.lambda
            .as_ref()
            .ok_or_else(|| Error::state("rate matrix has not been normalized"))
    }

    pub fn beta(&self) -> Result<f64> {
        self.beta
            .ok_or_else(|| Error::state("rate matrix has not been normalized"))
    }

    pub fn pi(&self) -> &Array1<f64> {
        &self.pi
    }

    pub fn pi_init(&self) -> &Array1<f64> {
        &self.pi_init
    }

    /// Replace the initial/root distribution π*.
    pub fn with_pi_init(mut self, pi_init: &[f64]) -> Result<Self> {
        if pi_init.len() != self.size() {
            return Err(Error::input("pi_init length does not match state count"));
        }
        self.pi_init = probability_vector(pi_init, "pi_init")?;
        Ok(self)
    }

    /// Fill Λ and β using the given a-priori state frequencies.
    pub fn normalize(mut self, pi: &[f64]) -> Result<Self> {
        if pi.len() != self.size() {
            return Err(Error::input("pi length does not match state count"));
        }
        let pi = probability_vector(pi, "pi")?;
        let size = self.size();
        let mut beta = 0.0;
        for i in 0..size {
            for j in 0..size {
                if i != j {
                    beta += pi[i] * self.q[[i, j]];
                }
            }
        }
        if beta <= 0.0 {
            return Err(Error::numerical(format!(
                "degenerate generator: normalizing constant beta = {beta}"
            )));
        }
        self.lambda = Some(&self.q / beta);
        self.beta = Some(beta);
        self.pi = pi;
        Ok(self)
    }

    /// Normalize with uniform frequencies.
    pub fn normalize_uniform(self) -> Result<Self> {
        let pi = vec![1.0 / self.size() as f64; self.size()];
        self.normalize(&pi)
    }

    /// Exit rate q_i = −q_ii of each state (unnormalized scale).
    pub fn exit_rates(&self) -> Array1<f64> {
        Array1::from_iter((0..self.size()).map(|i| -self.q[[i, i]]))
    }
}

/// β for a generator and frequency vector without building a [`RateMatrix`].
pub fn normalizing_constant(q: &Array2<f64>, pi: &Array1<f64>) -> f64 {
    let n = q.nrows();
    let mut beta = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                beta += pi[i] * q[[i, j]];
            }
        }
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta_gives_unit_rates() {
        let rm = build_rate_matrix(&[0.0, 0.0], LinkFunction::Exp).unwrap();
        assert_eq!(rm.q()[[0, 0]], -1.0);
        assert_eq!(rm.q()[[0, 1]], 1.0);
        assert_eq!(rm.q()[[1, 0]], 1.0);
        assert_eq!(rm.q()[[1, 1]], -1.0);
    }

    #[test]
    fn log_rates_exponentiate() {
        let rm = build_rate_matrix(&[2f64.ln(), 3f64.ln()], LinkFunction::Exp).unwrap();
        assert!((rm.q()[[0, 1]] - 2.0).abs() < 1e-12);
        assert!((rm.q()[[1, 0]] - 3.0).abs() < 1e-12);
        assert!((rm.q()[[0, 0]] + 2.0).abs() < 1e-12);
        assert!((rm.q()[[1, 1]] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_state_symmetric_case() {
        let theta = vec![0.5f64.ln(); 6];
        let rm = build_rate_matrix(&theta, LinkFunction::Exp).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { -1.0 } else { 0.5 };
                assert!((rm.q()[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_theta_names_the_pair() {
        let err = build_rate_matrix(&[0.0, f64::NAN], LinkFunction::Exp).unwrap_err();
        assert!(err.to_string().contains("2→1"), "{err}");
    }

    #[test]
    fn normalization_hand_example() {
        // Q = [[-2,2],[3,-3]], uniform pi: beta = 0.5*2 + 0.5*3 = 2.5
        let rm = build_rate_matrix(&[2f64.ln(), 3f64.ln()], LinkFunction::Exp)
            .unwrap()
            .normalize(&[0.5, 0.5])
            .unwrap();
        assert!((rm.beta().unwrap() - 2.5).abs() < 1e-12);
        let l = rm.lambda().unwrap();
        assert!((l[[0, 0]] + 0.8).abs() < 1e-12);
        assert!((l[[0, 1]] - 0.8).abs() < 1e-12);
        assert!((l[[1, 0]] - 1.2).abs() < 1e-12);
        assert!((l[[1, 1]] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn already_normalized_generator_has_unit_beta() {
        let rm = build_rate_matrix(&[0.0, 0.0], LinkFunction::Exp)
            .unwrap()
            .normalize(&[0.5, 0.5])
            .unwrap();
        assert!((rm.beta().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rm.lambda().unwrap(), rm.q());
    }

    #[test]
    fn scale_factor_cancels_in_normalization() {
        let theta = [0.3, -0.8, 1.1, 0.0, -0.2, 0.7];
        let base = build_rate_matrix(&theta, LinkFunction::Exp)
            .unwrap()
            .normalize_uniform()
            .unwrap();
        for c in [0.1, 3.0, 100.0] {
            let scaled = RateMatrix::from_generator(base.q() * c)
                .unwrap()
                .normalize_uniform()
                .unwrap();
            let (a, b) = (base.lambda().unwrap(), scaled.lambda().unwrap());
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12, "c={c}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let theta = [0.4, -1.0, 0.9, 0.1, -0.6, 1.2];
        let once = build_rate_matrix(&theta, LinkFunction::Exp)
            .unwrap()
            .normalize_uniform()
            .unwrap();
        let twice = RateMatrix::from_generator(once.lambda().unwrap().clone())
            .unwrap()
            .normalize_uniform()
            .unwrap();
        for (x, y) in once.lambda().unwrap().iter().zip(twice.lambda().unwrap().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_rates_are_degenerate() {
        // theta = -inf is rejected as input, so drive beta to zero through
        // a generator of explicit zeros.
        let rm = RateMatrix::from_generator(Array2::zeros((2, 2))).unwrap();
        assert!(rm.normalize(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn row_sums_are_exactly_zero() {
        let theta = [1.3, -0.4, 0.2, 2.0, -1.7, 0.5];
        let rm = build_rate_matrix(&theta, LinkFunction::Exp).unwrap();
        for i in 0..3 {
            let sum: f64 = rm.q().row(i).sum();
            assert!(sum.abs() < 1e-12);
        }
    }
}
