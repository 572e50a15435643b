//! Bayesian inference engine for continuous-time Markov chain (CTMC) rates.
//!
//! The crate models the off-diagonal entries of a CTMC generator through a
//! link function applied to latent log-rates, places a Gaussian-process prior
//! over those log-rates as functions of pairwise covariates, and samples the
//! posterior with Hamiltonian Monte Carlo driven by a cheap first-order
//! approximation to the matrix-exponential gradient. The Metropolis
//! correction always evaluates the exact posterior, so the approximation
//! affects only proposal quality, never the stationary distribution.
//!
//! Modules:
//!
//! - [`state`] — state spaces and the ordered-pair index used to align
//!   parameter vectors, covariates and gradients.
//! - [`rates`] — generator construction from log-rates and normalization to
//!   the evolutionary time scale.
//! - [`expm`] — dense matrix exponential (scaling and squaring, Padé 13).
//! - [`phylo`] — rooted binary phylogenies with branch lengths.
//! - [`simulate`] — forward simulation of CTMC paths and tree tip data.
//! - [`likelihood`] — fully observed, sequential, and tree-tip likelihoods,
//!   including pre/post-order partial vectors and a brute-force oracle.
//! - [`gradients`] — exact, series, and first-order approximate derivatives
//!   of the matrix exponential and of the log-likelihoods, plus the chain
//!   rule through the normalization constant back to log-rates.
//! - [`gp`] — squared-exponential / Matérn kernels, additive composition,
//!   Gaussian-process log-density and hyperparameter priors.
//! - [`sampler`] — leapfrog HMC with surrogate gradients, random-walk
//!   Metropolis on kernel hyperparameters, and the Gibbs driver.
//! - [`io`] — Newick trees, tip-state and covariate tables, run
//!   configuration, and sample/report writers.

pub mod error;
pub mod expm;
pub mod gp;
pub mod gradients;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod phylo;
pub mod rates;
pub mod sampler;
pub mod simulate;
pub mod state;

pub use error::{Error, Result};
