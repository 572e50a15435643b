//! Log-likelihoods for the three observation regimes.
//!
//! - fully observed paths: product of exponential sojourn densities and jump
//!   probabilities;
//! - sequential observations with known times: product of finite-time
//!   transition probabilities over the inter-observation intervals;
//! - tip data on a phylogeny: Felsenstein pruning with post-order partial
//!   vectors, plus the pre-order pass needed by the gradient, and a
//!   brute-force enumeration oracle.
//!
//! Post- and pre-order partials are rescaled per node with accumulated log
//! scalers, so trees with hundreds of tips do not underflow. Impossible data
//! yields negative infinity rather than an error, so Metropolis steps can
//! reject cleanly.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::expm::{matrix_exponential, TransitionMatrix};
use crate::phylo::Phylogeny;
use crate::rates::RateMatrix;
use crate::simulate::ObservationSequence;

/// One observed character per tip, indexed by tip number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TipData {
    pub states: Vec<usize>,
}

impl TipData {
    pub fn new(states: Vec<usize>) -> Self {
        TipData { states }
    }

    pub fn validate(&self, tree: &Phylogeny, n_states: usize) -> Result<()> {
        if self.states.len() != tree.n_tips() {
            return Err(Error::input(format!(
                "tip data covers {} tips, tree has {}",
                self.states.len(),
                tree.n_tips()
            )));
        }
        for (tip, &s) in self.states.iter().enumerate() {
            if s >= n_states {
                return Err(Error::input(format!(
                    "tip {} ('{}') has state index {s}, state space has {n_states}",
                    tip,
                    tree.tip_labels()[tip]
                )));
            }
        }
        Ok(())
    }
}

/// Log-likelihood of a fully observed path.
///
/// Uses the standard jump-chain construction: the sojourn in state x_{k−1}
/// is exponential with that state's exit rate and the jump lands on x_k with
/// probability q_{x_{k−1} x_k}/q_{x_{k−1}}. Returns −∞ if some observed jump
/// has zero rate.
pub fn loglik_fully_observed(path: &ObservationSequence, rates: &RateMatrix) -> Result<f64> {
    if !path.fully_observed {
        return Err(Error::input("path is not flagged fully observed"));
    }
    let gen = rates.lambda().unwrap_or_else(|_| rates.q());
    let n = gen.nrows();
    for (k, &s) in path.states.iter().enumerate() {
        if s >= n {
            return Err(Error::input(format!("state index {s} at step {k} out of range")));
        }
        if k > 0 && s == path.states[k - 1] {
            return Err(Error::input(format!(
                "fully observed path repeats state {s} at step {k}"
            )));
        }
    }
    let mut ll = rates.pi_init()[path.states[0]].ln();
    for k in 1..path.len() {
        let from = path.states[k - 1];
        let to = path.states[k];
        let dt = path.times[k] - path.times[k - 1];
        let rate = gen[[from, to]];
        if rate <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let exit = -gen[[from, from]];
        // q_from e^{-q_from dt} * (q_{from,to}/q_from) = q_{from,to} e^{-q_from dt}
        ll += rate.ln() - exit * dt;
    }
    Ok(ll)
}

/// A transition-matrix step of a sequential likelihood evaluation.
#[derive(Debug, Clone)]
pub struct SequentialStep {
    pub from: usize,
    pub to: usize,
    /// Index into [`SequentialCache::transitions`].
    pub trans: usize,
    pub dt: f64,
}

/// Transition matrices cached by the sequential likelihood, deduplicated by
/// interval, for reuse by the gradient pass.
#[derive(Debug, Clone)]
pub struct SequentialCache {
    pub transitions: Vec<TransitionMatrix>,
    pub steps: Vec<SequentialStep>,
}

/// Log-likelihood of sequentially observed states with known times.
///
/// Absolute timestamps are converted to inter-observation intervals; each
/// interval contributes one transition-probability factor. Returns −∞ on a
/// zero transition probability.
pub fn loglik_sequential(
    obs: &ObservationSequence,
    rates: &RateMatrix,
) -> Result<(f64, SequentialCache)> {
    let gen = rates.lambda().unwrap_or_else(|_| rates.q());
    let n = gen.nrows();
    for (k, &s) in obs.states.iter().enumerate() {
        if s >= n {
            return Err(Error::input(format!("state index {s} at step {k} out of range")));
        }
    }
    let mut cache = SequentialCache {
        transitions: Vec::new(),
        steps: Vec::with_capacity(obs.len().saturating_sub(1)),
    };
    let mut ll = rates.pi_init()[obs.states[0]].ln();
    for k in 1..obs.len() {
        let dt = obs.times[k] - obs.times[k - 1];
        let trans = match cache
            .transitions
            .iter()
            .position(|p| p.t.to_bits() == dt.to_bits())
        {
            Some(idx) => idx,
            None => {
                cache.transitions.push(matrix_exponential(gen, dt)?);
                cache.transitions.len() - 1
            }
        };
        let step = SequentialStep {
            from: obs.states[k - 1],
            to: obs.states[k],
            trans,
            dt,
        };
        let p = cache.transitions[step.trans].p[[step.from, step.to]];
        if p <= 0.0 {
            cache.steps.push(step);
            return Ok((f64::NEG_INFINITY, cache));
        }
        ll += p.ln();
        cache.steps.push(step);
    }
    Ok((ll, cache))
}

/// Per-node partial likelihood vectors with log scalers.
///
/// Post vectors p_v condition on the node state and cover descendant tips;
/// pre vectors q_v are joint with the node state and cover non-descendants.
/// Stored values are rescaled; the true vector is the stored one times the
/// exponential of its log scaler. For every node, pᵀq recovers the same tree
/// likelihood.
#[derive(Debug, Clone)]
pub struct PartialLikelihoods {
    n_states: usize,
    post: Vec<Array1<f64>>,
    post_log_scale: Vec<f64>,
    pre: Vec<Array1<f64>>,
    pre_log_scale: Vec<f64>,
    /// ŝ_v = q̂_pa ∘ P(b_sib) p̂_sib, sharing the pre scaler of v.
    parent_side: Vec<Array1<f64>>,
    /// e^{b_v Λ} for the branch above node v; `None` at the root.
    cached_p: Vec<Option<TransitionMatrix>>,
    loglik: f64,
    has_pre: bool,
}

impl PartialLikelihoods {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn has_pre(&self) -> bool {
        self.has_pre
    }

    pub fn post(&self, v: usize) -> (&Array1<f64>, f64) {
        (&self.post[v], self.post_log_scale[v])
    }

    pub fn pre(&self, v: usize) -> (&Array1<f64>, f64) {
        (&self.pre[v], self.pre_log_scale[v])
    }

    pub fn parent_side(&self, v: usize) -> &Array1<f64> {
        &self.parent_side[v]
    }

    pub fn cached_p(&self, v: usize) -> Option<&TransitionMatrix> {
        self.cached_p[v].as_ref()
    }

    /// log(p_vᵀ q_v) with scalers folded back in; equals the tree
    /// log-likelihood at every node.
    pub fn node_loglik(&self, v: usize) -> f64 {
        let dot = self.post[v].dot(&self.pre[v]);
        dot.ln() + self.post_log_scale[v] + self.pre_log_scale[v]
    }
}

/// Tree data log-likelihood by post-order pruning.
///
/// Requires a normalized rate matrix (branch lengths are evolutionary time).
/// Returns the log-likelihood together with the filled post-order partials
/// and per-branch transition matrices; cost is linear in the number of tips.
pub fn tree_loglik(
    tree: &Phylogeny,
    tips: &TipData,
    rates: &RateMatrix,
    root_dist: &[f64],
) -> Result<(f64, PartialLikelihoods)> {
    let lambda = rates.lambda()?;
    let n_states = lambda.nrows();
    tips.validate(tree, n_states)?;
    let root_dist = crate::rates::probability_vector(root_dist, "root_dist")?;
    if root_dist.len() != n_states {
        return Err(Error::input("root distribution length does not match state count"));
    }

    let n_nodes = tree.n_nodes();
    let mut partials = PartialLikelihoods {
        n_states,
        post: vec![Array1::zeros(n_states); n_nodes],
        post_log_scale: vec![0.0; n_nodes],
        pre: vec![Array1::zeros(n_states); n_nodes],
        pre_log_scale: vec![0.0; n_nodes],
        parent_side: vec![Array1::zeros(n_states); n_nodes],
        cached_p: vec![None; n_nodes],
        loglik: f64::NEG_INFINITY,
        has_pre: false,
    };

    for v in 0..n_nodes {
        if v != tree.root() {
            partials.cached_p[v] = Some(matrix_exponential(lambda, tree.branch_length(v))?);
        }
    }

    let mut impossible = false;
    for &v in tree.postorder() {
        if tree.is_tip(v) {
            partials.post[v][tips.states[v]] = 1.0;
            continue;
        }
        let (l, r) = tree.children(v).unwrap();
        let pl = partials.cached_p[l].as_ref().unwrap().p.dot(&partials.post[l]);
        let pr = partials.cached_p[r].as_ref().unwrap().p.dot(&partials.post[r]);
        let mut combined = &pl * &pr;
        let max = combined.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            impossible = true;
            partials.post[v] = combined;
            continue;
        }
        combined /= max;
        partials.post[v] = combined;
        partials.post_log_scale[v] =
            partials.post_log_scale[l] + partials.post_log_scale[r] + max.ln();
    }

    if impossible {
        return Ok((f64::NEG_INFINITY, partials));
    }
    let root = tree.root();
    let l = partials.post[root].dot(&root_dist);
    if l <= 0.0 {
        return Ok((f64::NEG_INFINITY, partials));
    }
    let loglik = l.ln() + partials.post_log_scale[root];
    partials.loglik = loglik;
    Ok((loglik, partials))
}

/// Fill the pre-order partial vectors by a root-to-tips traversal.
///
/// The root pre-vector is pinned to the root distribution; every other node
/// receives q_v = P(b_v)ᵀ (q_pa ∘ P(b_sib) p_sib), rescaled like the
/// post-order pass.
pub fn preorder_partials(
    tree: &Phylogeny,
    root_dist: &[f64],
    partials: &mut PartialLikelihoods,
) -> Result<()> {
    if !partials.loglik.is_finite() {
        return Err(Error::state(
            "pre-order pass requires a finite post-order likelihood",
        ));
    }
    let root_dist = crate::rates::probability_vector(root_dist, "root_dist")?;
    let root = tree.root();
    partials.pre[root] = root_dist;
    partials.pre_log_scale[root] = 0.0;

    for v in tree.preorder() {
        if v == root {
            continue;
        }
        let pa = tree.parent(v).unwrap();
        let sib = tree.sibling(v).unwrap();
        let sib_up = partials.cached_p[sib]
            .as_ref()
            .unwrap()
            .p
            .dot(&partials.post[sib]);
        let mut s = &partials.pre[pa] * &sib_up;
        let scale = partials.pre_log_scale[pa] + partials.post_log_scale[sib];
        let max = s.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Err(Error::numerical(format!(
                "pre-order partial vanished at node {v}"
            )));
        }
        s /= max;
        let p = &partials.cached_p[v].as_ref().unwrap().p;
        partials.pre[v] = p.t().dot(&s);
        partials.pre_log_scale[v] = scale + max.ln();
        partials.parent_side[v] = s;
    }
    partials.has_pre = true;
    Ok(())
}

/// Exact tree likelihood by enumerating all internal-node state assignments.
///
/// Independent oracle for [`tree_loglik`]; refuses instances with more than
/// 10⁶ assignments.
pub fn brute_force_tree_loglik(
    tree: &Phylogeny,
    tips: &TipData,
    rates: &RateMatrix,
    root_dist: &[f64],
) -> Result<f64> {
    let lambda = rates.lambda()?;
    let n_states = lambda.nrows();
    tips.validate(tree, n_states)?;
    let root_dist = crate::rates::probability_vector(root_dist, "root_dist")?;

    let n_tips = tree.n_tips();
    if n_tips == 1 {
        return Ok(root_dist[tips.states[0]].ln());
    }
    let n_internal = n_tips - 1;
    let combos = (n_states as f64).powi(n_internal as i32);
    if combos > 1e6 {
        return Err(Error::guard(format!(
            "brute force would enumerate {combos:.3e} assignments (limit 1e6)"
        )));
    }

    let mut branch_p = vec![None; tree.n_nodes()];
    for v in 0..tree.n_nodes() {
        if v != tree.root() {
            branch_p[v] = Some(matrix_exponential(lambda, tree.branch_length(v))?);
        }
    }

    let mut total = 0.0;
    let mut assignment = vec![0usize; n_internal];
    loop {
        // node state lookup: tips fixed, internal v ↦ assignment[v - n_tips]
        let state_of = |v: usize| {
            if tree.is_tip(v) {
                tips.states[v]
            } else {
                assignment[v - n_tips]
            }
        };
        let mut prob = root_dist[state_of(tree.root())];
        for v in 0..tree.n_nodes() {
            if v == tree.root() {
                continue;
            }
            let pa = tree.parent(v).unwrap();
            prob *= branch_p[v].as_ref().unwrap().p[[state_of(pa), state_of(v)]];
            if prob == 0.0 {
                break;
            }
        }
        total += prob;

        // odometer increment
        let mut k = 0;
        loop {
            if k == n_internal {
                return Ok(if total > 0.0 {
                    total.ln()
                } else {
                    f64::NEG_INFINITY
                });
            }
            assignment[k] += 1;
            if assignment[k] < n_states {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
    }
}
