//! Gaussian-process prior over log-rates as functions of pairwise covariates.
//!
//! Each covariate assigns a value to every ordered state pair; a stationary
//! kernel over those values gives an (S²−S)-dimensional covariance, and
//! multiple covariates compose additively. Distance-style covariates often
//! repeat values across pairs, which makes the kernel matrix singular, so
//! the Cholesky factorization runs under an escalating diagonal jitter.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve_lower, solve_lower_transpose};

/// Named covariate values per ordered off-diagonal pair.
#[derive(Debug, Clone)]
pub struct CovariateSet {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl CovariateSet {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::input("covariate names and value columns differ in count"));
        }
        if values.is_empty() {
            return Err(Error::input("at least one covariate is required"));
        }
        let dim = values[0].len();
        for (name, col) in names.iter().zip(&values) {
            if col.len() != dim {
                return Err(Error::input(format!(
                    "covariate '{name}' has {} values, expected {dim}",
                    col.len()
                )));
            }
            for (k, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::input(format!(
                        "covariate '{name}' value {k} is not finite"
                    )));
                }
            }
        }
        Ok(CovariateSet { names, values })
    }

    /// Single unnamed covariate.
    pub fn single(values: Vec<f64>) -> Result<Self> {
        CovariateSet::new(vec!["x".into()], vec![values])
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Dimension of each covariate vector (S²−S).
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self, p: usize) -> &[f64] {
        &self.values[p]
    }
}

/// Kernel hyperparameters for one covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelHyper {
    /// Marginal variance σ² of the GP component.
    pub marginal_scale: f64,
    /// Length scale ℓ in covariate units.
    pub length_scale: f64,
    /// Optional lower bound on ℓ (the prior truncates below it).
    pub length_floor: Option<f64>,
}

impl KernelHyper {
    pub fn new(marginal_scale: f64, length_scale: f64) -> Self {
        KernelHyper {
            marginal_scale,
            length_scale,
            length_floor: None,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.length_floor = Some(floor);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.marginal_scale > 0.0) || !self.marginal_scale.is_finite() {
            return Err(Error::input(format!(
                "marginal scale must be positive, got {}",
                self.marginal_scale
            )));
        }
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(Error::input(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }
}

/// Stationary kernel families over scalar covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// σ² exp(−(x−x')²/(2ℓ²)); smooth variation.
    SquaredExponential,
    /// σ² (1 + √3 r/ℓ) exp(−√3 r/ℓ); rougher paths.
    Matern32,
}

/// Kernel matrix over one covariate's values.
pub fn kernel_matrix(values: &[f64], hyper: &KernelHyper, kind: KernelKind) -> Result<Array2<f64>> {
    hyper.validate()?;
    let n = values.len();
    let mut k = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        for b in 0..=a {
            let r = (values[a] - values[b]).abs();
            let v = match kind {
                KernelKind::SquaredExponential => {
                    hyper.marginal_scale
                        * (-(r * r) / (2.0 * hyper.length_scale * hyper.length_scale)).exp()
                }
                KernelKind::Matern32 => {
                    let z = 3f64.sqrt() * r / hyper.length_scale;
                    hyper.marginal_scale * (1.0 + z) * (-z).exp()
                }
            };
            k[[a, b]] = v;
            k[[b, a]] = v;
        }
    }
    Ok(k)
}

/// Elementwise sum of kernel matrices; positive definiteness is preserved.
pub fn additive_kernel(kernels: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::input("additive kernel needs at least one component"))?;
    let mut sum = first.clone();
    for k in &kernels[1..] {
        if k.shape() != first.shape() {
            return Err(Error::input("kernel dimensions do not match"));
        }
        sum += k;
    }
    Ok(sum)
}

/// Relative jitter schedule: start at 1e-8·diag, escalate tenfold.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// A fully built GP prior: covariance and cached Cholesky factor.
///
/// Immutable once built; a hyperparameter change means building a new value.
#[derive(Debug, Clone)]
pub struct GpPrior {
    dim: usize,
    covariance: Array2<f64>,
    chol: Array2<f64>,
    jitter: f64,
}

impl GpPrior {
    /// Build the additive kernel over all covariates and factor it, escalating
    /// jitter until the Cholesky succeeds.
    pub fn build(
        covariates: &CovariateSet,
        hypers: &[KernelHyper],
        kinds: &[KernelKind],
    ) -> Result<Self> {
        if hypers.len() != covariates.count() || kinds.len() != covariates.count() {
            return Err(Error::input(
                "one hyperparameter set and kernel kind per covariate required",
            ));
        }
        let mut parts = Vec::with_capacity(covariates.count());
        for p in 0..covariates.count() {
            parts.push(kernel_matrix(covariates.values(p), &hypers[p], kinds[p])?);
        }
        let k = additive_kernel(&parts)?;
        GpPrior::from_kernel(k)
    }

    /// Factor an explicit kernel matrix under the jitter schedule.
    pub fn from_kernel(k: Array2<f64>) -> Result<Self> {
        let dim = k.nrows();
        let diag_mean = (0..dim).map(|i| k[[i, i]]).sum::<f64>() / dim as f64;
        let mut jitter = JITTER_START * diag_mean;
        let max_jitter = JITTER_MAX * diag_mean;
        loop {
            let mut kj = k.clone();
            for i in 0..dim {
                kj[[i, i]] += jitter;
            }
            match cholesky(&kj) {
                Ok(chol) => {
                    return Ok(GpPrior {
                        dim,
                        covariance: kj,
                        chol,
                        jitter,
                    })
                }
                Err(_) if jitter * 10.0 <= max_jitter => jitter *= 10.0,
                Err(e) => {
                    return Err(Error::numerical(format!(
                        "kernel matrix not positive definite at maximum jitter {max_jitter:.3e}: {e}"
                    )))
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// K + jitter·I, the covariance the density is evaluated under.
    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    /// log N(θ; 0, K + jitter·I) and its gradient −K⁻¹θ via triangular solves.
    pub fn logdensity_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        if theta.len() != self.dim {
            return Err(Error::input(format!(
                "theta has {} entries, prior dimension is {}",
                theta.len(),
                self.dim
            )));
        }
        let th = Array1::from_iter(theta.iter().cloned());
        let y = solve_lower(&self.chol, &th);
        let alpha = solve_lower_transpose(&self.chol, &y);
        let quad: f64 = y.iter().map(|v| v * v).sum();
        let logdet: f64 = (0..self.dim).map(|i| self.chol[[i, i]].ln()).sum::<f64>() * 2.0;
        let logdensity =
            -0.5 * quad - 0.5 * logdet - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok((logdensity, alpha.iter().map(|v| -v).collect()))
    }

    /// Draw θ = L·z from the prior.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z: Array1<f64> = Array1::from_iter((0..self.dim).map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v
        }));
        self.chol.dot(&z).to_vec()
    }
}

/// Exponential prior rates for the kernel hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct HyperPriorRates {
    /// Rate of the exponential prior on σ².
    pub scale_rate: f64,
    /// Rate of the exponential prior on ℓ.
    pub length_rate: f64,
}

impl Default for HyperPriorRates {
    fn default() -> Self {
        HyperPriorRates {
            scale_rate: 1.0,
            length_rate: 1.0,
        }
    }
}

/// Joint log-prior of the kernel hyperparameters: independent exponentials,
/// with the length-scale prior truncated at its floor when one is set (the
/// truncation adds the renormalization constant rate·floor).
pub fn hyper_logprior(hypers: &[KernelHyper], rates: &HyperPriorRates) -> Result<f64> {
    let mut lp = 0.0;
    for h in hypers {
        h.validate()?;
        lp += rates.scale_rate.ln() - rates.scale_rate * h.marginal_scale;
        match h.length_floor {
            Some(floor) if h.length_scale < floor => return Ok(f64::NEG_INFINITY),
            Some(floor) => {
                lp += rates.length_rate.ln() - rates.length_rate * h.length_scale
                    + rates.length_rate * floor;
            }
            None => {
                lp += rates.length_rate.ln() - rates.length_rate * h.length_scale;
            }
        }
    }
    Ok(lp)
}

/// Median of the (possibly floored) exponential prior; used to initialize
/// hyperparameters.
pub fn prior_median(rate: f64, floor: Option<f64>) -> f64 {
    floor.unwrap_or(0.0) + std::f64::consts::LN_2 / rate
}
