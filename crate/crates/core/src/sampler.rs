//! Posterior sampling: HMC with surrogate trajectories plus random-walk
//! Metropolis on the kernel hyperparameters, composed Metropolis-within-Gibbs.
//!
//! The leapfrog trajectory is driven by an approximate gradient (by default
//! the first-order matrix-exponential approximation), while the accept/reject
//! step always evaluates the exact log-posterior. Leapfrog is symplectic for
//! any position-dependent force field, so reversibility and volume
//! preservation hold for the surrogate too, and the Metropolis correction
//! keeps the exact posterior stationary regardless of gradient bias.

use std::cell::RefCell;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{
    hyper_logprior, prior_median, CovariateSet, GpPrior, HyperPriorRates, KernelHyper, KernelKind,
};
use crate::gradients::{
    chain_rule_to_theta, sequential_loglik_grad, tree_loglik_grad, GradientMethod,
};
use crate::likelihood::{loglik_sequential, preorder_partials, tree_loglik, TipData};
use crate::phylo::Phylogeny;
use crate::rates::{build_rate_matrix, LinkFunction, RateMatrix};
use crate::simulate::ObservationSequence;

/// A posterior a chain can be run against.
///
/// `log_posterior` must be exact — it alone decides acceptance.
/// `surrogate_grad` may be any approximation of the gradient of the
/// log-posterior at fixed hyperparameters; it only shapes proposals.
pub trait Model {
    fn dim(&self) -> usize;
    fn initial_theta(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
    /// Empty when the model has no hyperparameter block.
    fn initial_hypers(&self) -> Vec<KernelHyper>;
    fn log_posterior(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<f64>;
    fn surrogate_grad(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>>;
    /// The θ-prior and hyper-prior terms: everything in the posterior that
    /// depends on the hyperparameters. The data likelihood cancels from the
    /// hyper-update ratio, so it is excluded here.
    fn prior_parts(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<f64>;

    /// Map θ into the coordinates the leapfrog integrates in. Models with a
    /// correlated (possibly nearly singular) prior run the trajectory in
    /// whitened coordinates so prior stiffness does not blow up the
    /// integrator; the default is the identity. The map must be linear and
    /// invertible at fixed hyperparameters — its constant Jacobian then
    /// cancels from the acceptance ratio, which keeps using the exact
    /// θ-space posterior.
    fn whiten(&self, theta: &[f64], _hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        Ok(theta.to_vec())
    }

    /// Inverse of [`Model::whiten`].
    fn unwhiten(&self, z: &[f64], _hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }

    /// Surrogate gradient of the log-posterior in the whitened coordinates:
    /// Jᵀ·∇_θ for the whitening Jacobian J = dθ/dz.
    fn surrogate_grad_whitened(&self, z: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        self.surrogate_grad(z, hypers)
    }

    /// True when [`Model::whiten`] is not the identity; enables the
    /// non-centered hyperparameter move.
    fn has_whitening(&self) -> bool {
        false
    }

    /// Data log-likelihood alone (no priors); used by the non-centered
    /// hyperparameter move.
    fn data_loglik(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<f64> {
        let lp = self.log_posterior(theta, hypers)?;
        if !lp.is_finite() {
            return Ok(lp);
        }
        Ok(lp - self.prior_parts(theta, hypers)?)
    }

    /// Log-prior of the hyperparameters alone.
    fn hyper_logprior_only(&self, _hypers: &[KernelHyper]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Propose new hyperparameters on the log scale; returns the proposal and
/// the accumulated log-Jacobian of the transform.
fn propose_hypers(
    hypers: &[KernelHyper],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<KernelHyper>, f64) {
    let mut proposal = hypers.to_vec();
    let mut log_jacobian = 0.0;
    for h in &mut proposal {
        let zs: f64 = rng.sample(StandardNormal);
        let zl: f64 = rng.sample(StandardNormal);
        let new_scale = (h.marginal_scale.ln() + scale * zs).exp();
        let new_length = (h.length_scale.ln() + scale * zl).exp();
        log_jacobian += new_scale.ln() - h.marginal_scale.ln();
        log_jacobian += new_length.ln() - h.length_scale.ln();
        h.marginal_scale = new_scale;
        h.length_scale = new_length;
    }
    (proposal, log_jacobian)
}

/// HMC tuning parameters.
#[derive(Debug, Clone)]
pub struct HmcConfig {
    /// Initial leapfrog step size ε; adapted during warmup.
    pub step_size: f64,
    /// Leapfrog steps per proposal.
    pub leapfrog_steps: usize,
    /// Diagonal mass matrix; `None` means identity.
    pub mass: Option<Vec<f64>>,
    /// Warmup acceptance target for the Robbins-Monro step-size adaptation.
    pub target_accept: f64,
    pub warmup: usize,
    /// Post-warmup iterations.
    pub iterations: usize,
    /// Emit every `thin`-th post-warmup iteration.
    pub thin: usize,
    /// Update hyperparameters every G-th sweep; 0 disables the block.
    pub hyper_every: usize,
    /// Random-walk standard deviation on log-hyperparameters.
    pub hyper_scale: f64,
    /// Estimate a diagonal mass matrix from warmup samples.
    pub adapt_mass: bool,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.1,
            leapfrog_steps: 50,
            mass: None,
            target_accept: 0.65,
            warmup: 1000,
            iterations: 2000,
            thin: 1,
            hyper_every: 10,
            hyper_scale: 0.4,
            adapt_mass: false,
            seed: 0,
        }
    }
}

/// One emitted draw with bookkeeping.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub hypers: Vec<KernelHyper>,
    pub log_posterior: f64,
    pub theta_accepted: bool,
    pub hyper_accepted: Option<bool>,
    pub theta_ms: f64,
    pub hyper_ms: f64,
}

/// Chain output: samples plus run-level diagnostics.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub samples: Vec<SampleRecord>,
    pub accept_rate: f64,
    pub hyper_accept_rate: f64,
    pub divergences: usize,
    pub final_step_size: f64,
}

/// Leapfrog integration of Hamiltonian dynamics under a position-dependent
/// force. Returns `None` if the trajectory becomes non-finite, which the
/// caller treats as an immediate rejection.
pub fn leapfrog<G>(
    theta: &[f64],
    momentum: &[f64],
    mut grad_fn: G,
    step_size: f64,
    steps: usize,
    inv_mass: &[f64],
) -> Result<Option<(Vec<f64>, Vec<f64>)>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut th = theta.to_vec();
    let mut r = momentum.to_vec();
    let mut g = match grad_fn(&th) {
        Ok(g) => g,
        Err(_) => return Ok(None),
    };
    for _ in 0..steps {
        for k in 0..r.len() {
            r[k] += 0.5 * step_size * g[k];
        }
        for k in 0..th.len() {
            th[k] += step_size * inv_mass[k] * r[k];
            if !th[k].is_finite() {
                return Ok(None);
            }
        }
        g = match grad_fn(&th) {
            Ok(g) => g,
            Err(_) => return Ok(None),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        for k in 0..r.len() {
            r[k] += 0.5 * step_size * g[k];
        }
    }
    Ok(Some((th, r)))
}

/// Outcome of one HMC proposal.
#[derive(Debug, Clone)]
pub struct HmcOutcome {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub accepted: bool,
    pub accept_prob: f64,
    pub divergent: bool,
}

/// Trajectories with |ΔH| beyond this are counted as divergent and rejected.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// One HMC transition: surrogate-gradient trajectory, exact-posterior
/// Metropolis correction.
pub fn hmc_step<M: Model>(
    model: &M,
    theta: &[f64],
    hypers: &[KernelHyper],
    cached_lp: f64,
    step_size: f64,
    leapfrog_steps: usize,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<HmcOutcome> {
    let dim = theta.len();
    let mut momentum = vec![0.0; dim];
    for k in 0..dim {
        let z: f64 = rng.sample(StandardNormal);
        momentum[k] = z / inv_mass[k].sqrt();
    }
    let kinetic =
        |r: &[f64]| -> f64 { 0.5 * r.iter().zip(inv_mass).map(|(v, im)| v * v * im).sum::<f64>() };
    let h0 = -cached_lp + kinetic(&momentum);

    let z0 = model.whiten(theta, hypers)?;
    let traj = leapfrog(
        &z0,
        &momentum,
        |z| model.surrogate_grad_whitened(z, hypers),
        step_size,
        leapfrog_steps,
        inv_mass,
    )?;
    let (prop_z, prop_momentum) = match traj {
        Some(t) => t,
        None => {
            return Ok(HmcOutcome {
                theta: theta.to_vec(),
                log_posterior: cached_lp,
                accepted: false,
                accept_prob: 0.0,
                divergent: true,
            })
        }
    };
    let prop_theta = model.unwhiten(&prop_z, hypers)?;

    // exactly one exact posterior evaluation per proposal
    let prop_lp = model.log_posterior(&prop_theta, hypers)?;
    let h1 = -prop_lp + kinetic(&prop_momentum);
    let delta = h1 - h0;
    if !delta.is_finite() || delta.abs() > DIVERGENCE_THRESHOLD {
        return Ok(HmcOutcome {
            theta: theta.to_vec(),
            log_posterior: cached_lp,
            accepted: false,
            accept_prob: 0.0,
            divergent: true,
        });
    }
    let accept_prob = (-delta).exp().min(1.0);
    let accepted = rng.gen::<f64>() < accept_prob;
    Ok(if accepted {
        HmcOutcome {
            theta: prop_theta,
            log_posterior: prop_lp,
            accepted: true,
            accept_prob,
            divergent: false,
        }
    } else {
        HmcOutcome {
            theta: theta.to_vec(),
            log_posterior: cached_lp,
            accepted: false,
            accept_prob,
            divergent: false,
        }
    })
}

/// Gaussian random walk on the log-hyperparameters with the change-of-volume
/// Jacobian folded into the acceptance ratio. The data likelihood does not
/// depend on the hyperparameters, so the ratio uses only the prior parts;
/// the returned log-posterior is updated by the same exact difference.
pub fn rw_mh_hyper_step<M: Model>(
    model: &M,
    theta: &[f64],
    hypers: &[KernelHyper],
    cached_lp: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<KernelHyper>, f64, bool)> {
    let (proposal, log_jacobian) = propose_hypers(hypers, scale, rng);
    let current = model.prior_parts(theta, hypers)?;
    let proposed = model.prior_parts(theta, &proposal)?;
    let log_ratio = proposed - current + log_jacobian;
    let accept = log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio;
    if accept && proposed.is_finite() {
        Ok((proposal, cached_lp + (proposed - current), true))
    } else {
        Ok((hypers.to_vec(), cached_lp, false))
    }
}

/// Non-centered companion to [`rw_mh_hyper_step`]: the whitened coordinates
/// z = L⁻¹θ are held fixed, so θ rescales with the proposed hyperparameters.
///
/// In (z, ψ) coordinates the prior on z is a unit Gaussian independent of ψ
/// and the Cholesky determinants cancel, so the acceptance ratio reduces to
/// the data likelihood at the rescaled θ plus the hyper prior. Centered and
/// non-centered moves probe complementary directions of the (θ, ψ) funnel;
/// the driver alternates them.
pub fn nc_hyper_step<M: Model>(
    model: &M,
    theta: &[f64],
    hypers: &[KernelHyper],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<KernelHyper>, Option<f64>, bool)> {
    let (proposal, log_jacobian) = propose_hypers(hypers, scale, rng);
    let hp_new = model.hyper_logprior_only(&proposal)?;
    if !hp_new.is_finite() {
        return Ok((theta.to_vec(), hypers.to_vec(), None, false));
    }
    let z = model.whiten(theta, hypers)?;
    let theta_new = model.unwhiten(&z, &proposal)?;
    let ll_new = model.data_loglik(&theta_new, &proposal)?;
    let ll_old = model.data_loglik(theta, hypers)?;
    let hp_old = model.hyper_logprior_only(hypers)?;
    let log_ratio = ll_new + hp_new - ll_old - hp_old + log_jacobian;
    let accept = log_ratio.is_finite() && (log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio);
    if accept {
        let lp = model.log_posterior(&theta_new, &proposal)?;
        Ok((theta_new, proposal, Some(lp), true))
    } else {
        Ok((theta.to_vec(), hypers.to_vec(), None, false))
    }
}

/// Run one Metropolis-within-Gibbs chain: HMC sweeps on θ, periodic
/// random-walk updates of the hyperparameters, Robbins-Monro step-size
/// adaptation during warmup only. Deterministic for a given seed.
pub fn run_chain<M: Model>(model: &M, config: &HmcConfig) -> Result<RunResult> {
    if config.leapfrog_steps == 0 {
        return Err(Error::input("leapfrog_steps must be at least 1"));
    }
    if !(config.step_size > 0.0) {
        return Err(Error::input("step_size must be positive"));
    }
    if !(config.target_accept > 0.0 && config.target_accept < 1.0) {
        return Err(Error::input("target_accept must lie in (0,1)"));
    }
    if config.thin == 0 {
        return Err(Error::input("thin must be at least 1"));
    }
    let dim = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = model.initial_theta(&mut rng)?;
    let mut hypers = model.initial_hypers();
    let mut inv_mass = match &config.mass {
        Some(m) => {
            if m.len() != dim {
                return Err(Error::input("mass vector length does not match dimension"));
            }
            m.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; dim],
    };

    let mut lp = model.log_posterior(&theta, &hypers)?;
    if !lp.is_finite() {
        return Err(Error::numerical(format!(
            "initial log-posterior is {lp}; cannot start the chain"
        )));
    }

    // dual-averaging state for the step-size stochastic approximation
    let mut log_eps = config.step_size.ln();
    let mut log_eps_avg = log_eps;
    let mut h_avg = 0.0f64;
    let da_mu = (10.0 * config.step_size).ln();
    let (da_gamma, da_t0, da_kappa) = (0.05, 10.0, 0.75);

    let mut samples = Vec::new();
    let mut accepted = 0usize;
    let mut hyper_accepted = 0usize;
    let mut hyper_attempts = 0usize;
    let mut divergences = 0usize;
    let mut warmup_draws: Vec<Vec<f64>> = Vec::new();

    let total = config.warmup + config.iterations;
    for iter in 0..total {
        let in_warmup = iter < config.warmup;
        let eps = if in_warmup {
            log_eps.exp()
        } else {
            log_eps_avg.exp()
        };

        let t0 = Instant::now();
        let outcome = hmc_step(
            model,
            &theta,
            &hypers,
            lp,
            eps,
            config.leapfrog_steps,
            &inv_mass,
            &mut rng,
        )?;
        let theta_ms = t0.elapsed().as_secs_f64() * 1e3;
        theta = outcome.theta;
        lp = outcome.log_posterior;
        if outcome.divergent {
            divergences += 1;
        }
        if !in_warmup && outcome.accepted {
            accepted += 1;
        }

        if in_warmup {
            // dual-averaging stochastic approximation of log ε toward the
            // target acceptance rate, frozen at its running average afterwards
            let t = iter as f64 + 1.0;
            h_avg = (1.0 - 1.0 / (t + da_t0)) * h_avg
                + (config.target_accept - outcome.accept_prob) / (t + da_t0);
            log_eps = da_mu - t.sqrt() / da_gamma * h_avg;
            let w = t.powf(-da_kappa);
            log_eps_avg = w * log_eps + (1.0 - w) * log_eps_avg;
            if config.adapt_mass {
                let half = config.warmup / 2;
                let end = 3 * config.warmup / 4;
                if iter >= half && iter < end {
                    warmup_draws.push(model.whiten(&theta, &hypers)?);
                }
                if iter + 1 == end && warmup_draws.len() >= 10 {
                    for k in 0..dim {
                        let mean: f64 =
                            warmup_draws.iter().map(|d| d[k]).sum::<f64>() / warmup_draws.len() as f64;
                        let var: f64 = warmup_draws
                            .iter()
                            .map(|d| (d[k] - mean).powi(2))
                            .sum::<f64>()
                            / (warmup_draws.len() - 1) as f64;
                        inv_mass[k] = var.max(1e-8);
                    }
                    warmup_draws.clear();
                }
            }
        }

        let mut hyper_flag = None;
        let mut hyper_ms = 0.0;
        if !hypers.is_empty() && config.hyper_every > 0 && (iter + 1) % config.hyper_every == 0 {
            let t1 = Instant::now();
            let (new_hypers, new_lp, acc) =
                rw_mh_hyper_step(model, &theta, &hypers, lp, config.hyper_scale, &mut rng)?;
            hypers = new_hypers;
            lp = new_lp;
            let mut any_accept = acc;
            if model.has_whitening() {
                let (new_theta, new_hypers, new_lp, acc_nc) =
                    nc_hyper_step(model, &theta, &hypers, config.hyper_scale, &mut rng)?;
                theta = new_theta;
                hypers = new_hypers;
                if let Some(v) = new_lp {
                    lp = v;
                }
                any_accept |= acc_nc;
            }
            hyper_ms = t1.elapsed().as_secs_f64() * 1e3;
            hyper_flag = Some(any_accept);
            if !in_warmup {
                hyper_attempts += 1;
                if any_accept {
                    hyper_accepted += 1;
                }
            }
        }

        if !in_warmup && (iter - config.warmup) % config.thin == 0 {
            samples.push(SampleRecord {
                iteration: iter,
                theta: theta.clone(),
                hypers: hypers.clone(),
                log_posterior: lp,
                theta_accepted: outcome.accepted,
                hyper_accepted: hyper_flag,
                theta_ms,
                hyper_ms,
            });
        }
    }

    Ok(RunResult {
        samples,
        accept_rate: accepted as f64 / config.iterations.max(1) as f64,
        hyper_accept_rate: if hyper_attempts > 0 {
            hyper_accepted as f64 / hyper_attempts as f64
        } else {
            f64::NAN
        },
        divergences,
        final_step_size: if config.warmup > 0 {
            log_eps_avg.exp()
        } else {
            log_eps.exp()
        },
    })
}

/// Which likelihood the posterior uses.
#[derive(Debug, Clone)]
pub enum Regime {
    Sequential(ObservationSequence),
    Tree { tree: Phylogeny, tips: TipData },
    /// No data: the posterior is the prior. Used for calibration checks.
    PriorOnly,
}

/// The CTMC posterior with a GP prior over log-rates.
#[derive(Debug)]
pub struct CtmcGpModel {
    pub regime: Regime,
    pub n_states: usize,
    /// Frequencies used for rate normalization.
    pub pi: Vec<f64>,
    /// Initial (sequential) or root (tree) state distribution.
    pub root_dist: Vec<f64>,
    pub covariates: CovariateSet,
    pub kinds: Vec<KernelKind>,
    pub prior_rates: HyperPriorRates,
    pub length_floor: Option<f64>,
    /// Gradient route for the surrogate trajectories.
    pub grad_method: GradientMethod,
    gp_cache: RefCell<Option<(Vec<KernelHyper>, GpPrior)>>,
}

impl CtmcGpModel {
    pub fn new(
        regime: Regime,
        n_states: usize,
        covariates: CovariateSet,
        kinds: Vec<KernelKind>,
    ) -> Result<Self> {
        if covariates.dim() != n_states * n_states - n_states {
            return Err(Error::input(format!(
                "covariate dimension {} does not match S²−S = {}",
                covariates.dim(),
                n_states * n_states - n_states
            )));
        }
        Ok(CtmcGpModel {
            regime,
            n_states,
            pi: vec![1.0 / n_states as f64; n_states],
            root_dist: vec![1.0 / n_states as f64; n_states],
            covariates,
            kinds,
            prior_rates: HyperPriorRates::default(),
            length_floor: None,
            grad_method: GradientMethod::Approx,
            gp_cache: RefCell::new(None),
        })
    }

    pub fn with_pi(mut self, pi: Vec<f64>) -> Self {
        self.pi = pi;
        self
    }

    pub fn with_root_dist(mut self, root: Vec<f64>) -> Self {
        self.root_dist = root;
        self
    }

    pub fn with_grad_method(mut self, method: GradientMethod) -> Self {
        self.grad_method = method;
        self
    }

    pub fn with_prior_rates(mut self, rates: HyperPriorRates) -> Self {
        self.prior_rates = rates;
        self
    }

    pub fn with_length_floor(mut self, floor: f64) -> Self {
        self.length_floor = Some(floor);
        self
    }

    fn rates(&self, theta: &[f64]) -> Result<RateMatrix> {
        build_rate_matrix(theta, LinkFunction::Exp)?
            .normalize(&self.pi)?
            .with_pi_init(&self.root_dist)
    }

    /// GP prior for the given hypers, rebuilt only when they change.
    fn gp(&self, hypers: &[KernelHyper]) -> Result<GpPrior> {
        {
            let cache = self.gp_cache.borrow();
            if let Some((cached_hypers, prior)) = cache.as_ref() {
                if cached_hypers.as_slice() == hypers {
                    return Ok(prior.clone());
                }
            }
        }
        let prior = GpPrior::build(&self.covariates, hypers, &self.kinds)?;
        *self.gp_cache.borrow_mut() = Some((hypers.to_vec(), prior.clone()));
        Ok(prior)
    }

    /// Data log-likelihood alone.
    pub fn loglik(&self, theta: &[f64]) -> Result<f64> {
        match &self.regime {
            Regime::PriorOnly => Ok(0.0),
            Regime::Sequential(obs) => {
                let rates = self.rates(theta)?;
                Ok(loglik_sequential(obs, &rates)?.0)
            }
            Regime::Tree { tree, tips } => {
                let rates = self.rates(theta)?;
                Ok(tree_loglik(tree, tips, &rates, &self.root_dist)?.0)
            }
        }
    }

    /// θ-space gradient of the data log-likelihood under the configured method.
    pub fn loglik_grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match &self.regime {
            Regime::PriorOnly => Ok(vec![0.0; self.dim()]),
            Regime::Sequential(obs) => {
                let rates = self.rates(theta)?;
                let (ll, cache) = loglik_sequential(obs, &rates)?;
                if !ll.is_finite() {
                    return Err(Error::numerical("zero likelihood inside trajectory"));
                }
                let grad_lambda = sequential_loglik_grad(&cache, &rates, self.grad_method)?;
                Ok(chain_rule_to_theta(&grad_lambda, &rates)?.values)
            }
            Regime::Tree { tree, tips } => {
                let rates = self.rates(theta)?;
                let (ll, mut partials) = tree_loglik(tree, tips, &rates, &self.root_dist)?;
                if !ll.is_finite() {
                    return Err(Error::numerical("zero likelihood inside trajectory"));
                }
                preorder_partials(tree, &self.root_dist, &mut partials)?;
                let grad_lambda = tree_loglik_grad(tree, &rates, &partials, self.grad_method)?;
                Ok(chain_rule_to_theta(&grad_lambda, &rates)?.values)
            }
        }
    }
}

impl Model for CtmcGpModel {
    fn dim(&self) -> usize {
        self.n_states * self.n_states - self.n_states
    }

    fn initial_theta(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let gp = self.gp(&self.initial_hypers())?;
        Ok(gp.sample(rng))
    }

    fn initial_hypers(&self) -> Vec<KernelHyper> {
        (0..self.covariates.count())
            .map(|_| {
                let mut h = KernelHyper::new(
                    prior_median(self.prior_rates.scale_rate, None),
                    prior_median(self.prior_rates.length_rate, self.length_floor),
                );
                h.length_floor = self.length_floor;
                h
            })
            .collect()
    }

    fn log_posterior(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<f64> {
        let ll = self.loglik(theta)?;
        if !ll.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(ll + self.prior_parts(theta, hypers)?)
    }

    fn surrogate_grad(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        let mut grad = self.loglik_grad(theta)?;
        // the prior gradient −K⁻¹θ is cheap once the Cholesky is cached, so
        // only the likelihood part is approximated
        let gp = self.gp(hypers)?;
        let (_, prior_grad) = gp.logdensity_and_grad(theta)?;
        for (g, p) in grad.iter_mut().zip(prior_grad) {
            *g += p;
        }
        Ok(grad)
    }

    fn prior_parts(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<f64> {
        let hp = hyper_logprior(hypers, &self.prior_rates)?;
        if !hp.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let gp = self.gp(hypers)?;
        let (lp, _) = gp.logdensity_and_grad(theta)?;
        Ok(lp + hp)
    }

    /// GP priors built from distance covariates routinely repeat covariate
    /// values, leaving the kernel singular up to jitter. The trajectory
    /// therefore runs in z = L⁻¹θ, where the prior is a unit Gaussian and
    /// the jitter-scale stiffness disappears from the dynamics.
    fn whiten(&self, theta: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        let gp = self.gp(hypers)?;
        let th = ndarray::Array1::from_vec(theta.to_vec());
        Ok(crate::linalg::solve_lower(gp.chol(), &th).to_vec())
    }

    fn unwhiten(&self, z: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        let gp = self.gp(hypers)?;
        Ok(gp.chol().dot(&ndarray::Array1::from_vec(z.to_vec())).to_vec())
    }

    fn surrogate_grad_whitened(&self, z: &[f64], hypers: &[KernelHyper]) -> Result<Vec<f64>> {
        let gp = self.gp(hypers)?;
        let zv = ndarray::Array1::from_vec(z.to_vec());
        let theta = gp.chol().dot(&zv);
        let g_like = match &self.regime {
            Regime::PriorOnly => vec![0.0; self.dim()],
            _ => self.loglik_grad(theta.as_slice().unwrap())?,
        };
        // Lᵀ·∇θ(loglik) − z: the prior is exactly standard normal in z
        let lt_g = gp.chol().t().dot(&ndarray::Array1::from_vec(g_like));
        Ok(lt_g.iter().zip(z).map(|(a, b)| a - b).collect())
    }

    fn has_whitening(&self) -> bool {
        true
    }

    fn data_loglik(&self, theta: &[f64], _hypers: &[KernelHyper]) -> Result<f64> {
        self.loglik(theta)
    }

    fn hyper_logprior_only(&self, hypers: &[KernelHyper]) -> Result<f64> {
        hyper_logprior(hypers, &self.prior_rates)
    }
}
