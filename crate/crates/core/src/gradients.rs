//! Derivatives of the matrix exponential and of the log-likelihoods.
//!
//! Three routes to ∂e^{tΛ}/∂λ_ij are provided:
//!
//! - exact: exponentiate the 2S×2S block matrix [[Λ, E_ij], [0, Λ]] and read
//!   the upper-right block — one O(S³) exponential per direction;
//! - series: e^{tΛ} Σ_k t^{k+1}/(k+1)! {E_ij, Λ^k}, where the bracket is the
//!   iterated matrix commutator, truncated after K terms;
//! - approx: the first-order truncation t·e^{tΛ}·E_ij, which is zero except
//!   for one column and costs O(S) given the cached exponential.
//!
//! On top of these sit the sequential- and tree-likelihood gradients with
//! respect to the normalized rates (diagonal directions included, since the
//! chain rule to log-rates needs them), the chain rule through the
//! normalization constant back to θ, and a central-difference oracle.

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::expm::{expm, TransitionMatrix};
use crate::likelihood::{PartialLikelihoods, SequentialCache};
use crate::phylo::Phylogeny;
use crate::rates::RateMatrix;
use crate::state::PairIndex;

/// A perturbation direction E_ij: zeros except a single one at (i, j).
///
/// Stored as the index pair; the approximate path never materializes the
/// matrix. Off-diagonal pairs come from [`DirectionMatrix::new`]; the
/// diagonal directions the chain rule needs come from
/// [`DirectionMatrix::diagonal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionMatrix {
    pub from: usize,
    pub to: usize,
}

impl DirectionMatrix {
    pub fn new(from: usize, to: usize) -> Result<Self> {
        if from == to {
            return Err(Error::input("direction pair must be off-diagonal"));
        }
        Ok(DirectionMatrix { from, to })
    }

    pub fn diagonal(i: usize) -> Self {
        DirectionMatrix { from: i, to: i }
    }

    /// Dense S×S matrix, used only by the exact and series paths.
    pub fn dense(&self, size: usize) -> Array2<f64> {
        let mut e = Array2::zeros((size, size));
        e[[self.from, self.to]] = 1.0;
        e
    }
}

/// Which parameter space a gradient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSpace {
    /// d/dλ_ij, the entries of the normalized generator.
    NormalizedRates,
    /// d/dθ_ij, the unconstrained log-rates.
    LogRates,
}

/// How a gradient was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    Exact,
    Series(usize),
    Approx,
    CentralDiff,
}

/// A gradient vector aligned with [`PairIndex`] order, tagged with its space
/// and method so vectors from different spaces cannot be mixed up.
#[derive(Debug, Clone)]
pub struct RateGradient {
    /// One entry per ordered off-diagonal pair.
    pub values: Vec<f64>,
    /// Derivatives in the diagonal directions E_ii (λ-space only; the chain
    /// rule to θ consumes them).
    pub diag: Vec<f64>,
    pub space: GradientSpace,
    pub method: GradientMethod,
}

impl RateGradient {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Off-diagonal and diagonal entries arranged as an S×S matrix.
    pub fn dense(&self) -> Array2<f64> {
        let size = crate::rates::infer_size(self.values.len()).expect("valid pair count");
        let pairs = PairIndex::new(size);
        let mut g = Array2::zeros((size, size));
        for (k, (i, j)) in pairs.iter().enumerate() {
            g[[i, j]] = self.values[k];
        }
        for (i, &d) in self.diag.iter().enumerate() {
            g[[i, i]] = d;
        }
        g
    }
}

/// Cosine similarity of two vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Exact Fréchet derivative of e^{tM} in an arbitrary direction matrix.
///
/// Exponentiates t·[[M, E], [0, M]]; the upper-right block is
/// ∫₀ᵗ e^{(t−s)M} E e^{sM} ds.
pub fn expm_frechet_direction(m: &Array2<f64>, t: f64, e: &Array2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    if m.ncols() != n || e.nrows() != n || e.ncols() != n {
        return Err(Error::input("Fréchet derivative needs square conformable matrices"));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::input(format!("time must be finite and nonnegative, got {t}")));
    }
    // assemble t·B in one pass
    let mut b = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let mt = t * m[[i, j]];
            b[[i, j]] = mt;
            b[[n + i, n + j]] = mt;
            b[[i, n + j]] = t * e[[i, j]];
        }
    }
    let eb = expm(&b);
    Ok(eb.slice(s![..n, n..]).to_owned())
}

/// Exact ∂e^{tM}/∂m_ij via block augmentation.
pub fn expm_frechet_exact(m: &Array2<f64>, t: f64, dir: DirectionMatrix) -> Result<Array2<f64>> {
    expm_frechet_direction(m, t, &dir.dense(m.nrows()))
}

/// Truncated commutator series for ∂e^{tM}/∂m_ij.
///
/// Keeps the first `k_max` terms; `k_max = 1` reproduces the first-order
/// approximation exactly.
pub fn expm_grad_series(
    m: &Array2<f64>,
    t: f64,
    dir: DirectionMatrix,
    k_max: usize,
) -> Result<Array2<f64>> {
    if k_max < 1 {
        return Err(Error::input("series truncation order must be at least 1"));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::input(format!("time must be finite and nonnegative, got {t}")));
    }
    let n = m.nrows();
    // {E, M^0} = E; {E, M^k} = [{E, M^{k-1}}, M]
    let mut bracket = dir.dense(n);
    let mut coeff = t; // t^{k+1}/(k+1)! at k = 0
    let mut sum = &bracket * coeff;
    for k in 1..k_max {
        bracket = bracket.dot(m) - m.dot(&bracket);
        coeff *= t / (k + 1) as f64;
        sum += &(&bracket * coeff);
    }
    let p = expm(&(m * t));
    Ok(p.dot(&sum))
}

/// First-order approximation t·e^{tM}·E_ij as its single nonzero column.
///
/// Column `to` holds t times column `from` of the cached exponential;
/// construction is O(S).
#[derive(Debug, Clone)]
pub struct SparseColumnGrad {
    pub dim: usize,
    pub col: usize,
    pub values: Array1<f64>,
}

impl SparseColumnGrad {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut g = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            g[[i, self.col]] = self.values[i];
        }
        g
    }
}

/// Approximate ∂e^{tM}/∂m_ij from a cached transition matrix.
pub fn expm_grad_approx(cached_p: &TransitionMatrix, dir: DirectionMatrix) -> SparseColumnGrad {
    let t = cached_p.t;
    let values = cached_p.p.column(dir.from).map(|v| v * t);
    SparseColumnGrad {
        dim: cached_p.dim(),
        col: dir.to,
        values,
    }
}

fn all_directions(size: usize) -> Vec<DirectionMatrix> {
    let pairs = PairIndex::new(size);
    let mut dirs: Vec<DirectionMatrix> = pairs
        .iter()
        .map(|(i, j)| DirectionMatrix { from: i, to: j })
        .collect();
    dirs.extend((0..size).map(DirectionMatrix::diagonal));
    dirs
}

fn assemble(size: usize, dense: &Array2<f64>, method: GradientMethod) -> RateGradient {
    let pairs = PairIndex::new(size);
    RateGradient {
        values: pairs.iter().map(|(i, j)| dense[[i, j]]).collect(),
        diag: (0..size).map(|i| dense[[i, i]]).collect(),
        space: GradientSpace::NormalizedRates,
        method,
    }
}

/// Gradient of the sequential log-likelihood with respect to the normalized
/// rates, diagonal directions included.
///
/// Consumes the transition matrices cached by
/// [`loglik_sequential`](crate::likelihood::loglik_sequential). The approx
/// method reads one cached entry per (observation, direction); exact and
/// series substitute the corresponding matrix-exponential derivative.
pub fn sequential_loglik_grad(
    cache: &SequentialCache,
    rates: &RateMatrix,
    method: GradientMethod,
) -> Result<RateGradient> {
    let lambda = rates.lambda()?;
    let size = lambda.nrows();
    let mut denom = Vec::with_capacity(cache.steps.len());
    for step in &cache.steps {
        let p = cache.transitions[step.trans].p[[step.from, step.to]];
        if p <= 0.0 {
            return Err(Error::state(
                "gradient requested for data with zero likelihood",
            ));
        }
        denom.push(p);
    }

    let mut dense = Array2::<f64>::zeros((size, size));
    match method {
        GradientMethod::Approx => {
            // d/dλ_ij log P_{from,to}(dt) ≈ dt · P_{from,i} · 1{j = to} / P_{from,to}
            for (step, &p) in cache.steps.iter().zip(&denom) {
                let trans = &cache.transitions[step.trans];
                for i in 0..size {
                    dense[[i, step.to]] += step.dt * trans.p[[step.from, i]] / p;
                }
            }
        }
        GradientMethod::Exact | GradientMethod::Series(_) => {
            for dir in all_directions(size) {
                let mut per_trans = Vec::with_capacity(cache.transitions.len());
                for trans in &cache.transitions {
                    let d = match method {
                        GradientMethod::Exact => expm_frechet_exact(lambda, trans.t, dir)?,
                        GradientMethod::Series(k) => expm_grad_series(lambda, trans.t, dir, k)?,
                        _ => unreachable!(),
                    };
                    per_trans.push(d);
                }
                let mut g = 0.0;
                for (step, &p) in cache.steps.iter().zip(&denom) {
                    g += per_trans[step.trans][[step.from, step.to]] / p;
                }
                dense[[dir.from, dir.to]] = g;
            }
        }
        GradientMethod::CentralDiff => {
            return Err(Error::input(
                "use central_difference_grad for finite-difference gradients",
            ));
        }
    }
    Ok(assemble(size, &dense, method))
}

/// Gradient of the tree log-likelihood with respect to the normalized rates.
///
/// Requires both partial-likelihood passes. Under the approx method the
/// branch sum collapses to Σ_c b_c p_{c,j} q_{c,i}, evaluated with the same
/// log-scaling protection as the likelihood; the root-distribution term is
/// zero because the root distribution is fixed configuration.
pub fn tree_loglik_grad(
    tree: &Phylogeny,
    rates: &RateMatrix,
    partials: &PartialLikelihoods,
    method: GradientMethod,
) -> Result<RateGradient> {
    let lambda = rates.lambda()?;
    let size = lambda.nrows();
    if !partials.loglik().is_finite() {
        return Err(Error::state(
            "gradient requested for data with zero likelihood",
        ));
    }
    if !partials.has_pre() && tree.n_nodes() > 1 {
        return Err(Error::state("pre-order partials missing"));
    }

    let root = tree.root();
    let mut dense = Array2::<f64>::zeros((size, size));
    match method {
        GradientMethod::Approx => {
            for c in 0..tree.n_nodes() {
                if c == root {
                    continue;
                }
                let b = tree.branch_length(c);
                if b == 0.0 {
                    continue;
                }
                let (post, _) = partials.post(c);
                let (pre, _) = partials.pre(c);
                // the scalers cancel: exp(σ_c + ρ_c − log L) = 1/(p̂ᵀq̂)
                let w = b / post.dot(pre);
                for i in 0..size {
                    let qi = pre[i] * w;
                    if qi == 0.0 {
                        continue;
                    }
                    for j in 0..size {
                        dense[[i, j]] += qi * post[j];
                    }
                }
            }
        }
        GradientMethod::Exact | GradientMethod::Series(_) => {
            for dir in all_directions(size) {
                let mut g = 0.0;
                for c in 0..tree.n_nodes() {
                    if c == root {
                        continue;
                    }
                    let b = tree.branch_length(c);
                    let frechet = match method {
                        GradientMethod::Exact => expm_frechet_exact(lambda, b, dir)?,
                        GradientMethod::Series(k) => expm_grad_series(lambda, b, dir, k)?,
                        _ => unreachable!(),
                    };
                    let (post, _) = partials.post(c);
                    let (pre, _) = partials.pre(c);
                    let s = partials.parent_side(c);
                    // p̂ᵀ Fᵀ ŝ / (p̂ᵀ q̂): the scalers of ŝ and q̂ match
                    g += frechet.dot(post).dot(s) / post.dot(pre);
                }
                dense[[dir.from, dir.to]] = g;
            }
        }
        GradientMethod::CentralDiff => {
            return Err(Error::input(
                "use central_difference_grad for finite-difference gradients",
            ));
        }
    }
    Ok(assemble(size, &dense, method))
}

/// Chain rule from normalized-rate space down to the log-rates θ under the
/// exponential link.
///
/// With δ_ij = ∂L/∂λ_ij − ∂L/∂λ_ii and T = Σ_{uv} (∂L/∂λ_uv) λ_uv over all
/// entries including the diagonal,
/// ∂L/∂θ_ij = [δ_ij − T π_i] λ_ij,
/// where π_i is the normalization frequency of the origin state of the pair.
pub fn chain_rule_to_theta(grad_lambda: &RateGradient, rates: &RateMatrix) -> Result<RateGradient> {
    if grad_lambda.space != GradientSpace::NormalizedRates {
        return Err(Error::input("chain rule expects a normalized-rate gradient"));
    }
    let lambda = rates.lambda()?;
    let size = lambda.nrows();
    if grad_lambda.diag.len() != size {
        return Err(Error::input(
            "chain rule needs the diagonal derivatives alongside the off-diagonals",
        ));
    }
    let pairs = PairIndex::new(size);
    if grad_lambda.values.len() != pairs.len() {
        return Err(Error::input("gradient length does not match the state space"));
    }
    let pi = rates.pi();

    let mut total = 0.0;
    for (k, (i, j)) in pairs.iter().enumerate() {
        total += grad_lambda.values[k] * lambda[[i, j]];
    }
    for i in 0..size {
        total += grad_lambda.diag[i] * lambda[[i, i]];
    }

    let mut values = Vec::with_capacity(pairs.len());
    for (k, (i, j)) in pairs.iter().enumerate() {
        let delta = grad_lambda.values[k] - grad_lambda.diag[i];
        values.push((delta - total * pi[i]) * lambda[[i, j]]);
    }
    Ok(RateGradient {
        values,
        diag: Vec::new(),
        space: GradientSpace::LogRates,
        method: grad_lambda.method,
    })
}

/// Central-difference gradient of a scalar function of θ.
///
/// Per-coordinate step h·max(1, |θ_k|); this is the project-wide oracle
/// against which the analytic gradients are checked.
pub fn central_difference_grad<F>(f: F, theta: &[f64], h: f64) -> Result<RateGradient>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::input(format!("step size must be positive, got {h}")));
    }
    let mut values = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        let hk = h * theta[k].abs().max(1.0);
        probe[k] = theta[k] + hk;
        let up = f(&probe)?;
        probe[k] = theta[k] - hk;
        let down = f(&probe)?;
        probe[k] = theta[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite evaluation while differencing coordinate {k}"
            )));
        }
        values.push((up - down) / (2.0 * hk));
    }
    Ok(RateGradient {
        values,
        diag: Vec::new(),
        space: GradientSpace::LogRates,
        method: GradientMethod::CentralDiff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::loglik_sequential;
    use crate::rates::{build_rate_matrix, LinkFunction};
    use crate::simulate::ObservationSequence;
    use ndarray::array;

    fn symmetric_two_state() -> RateMatrix {
        build_rate_matrix(&[0.0, 0.0], LinkFunction::Exp)
            .unwrap()
            .normalize(&[0.5, 0.5])
            .unwrap()
    }

    #[test]
    fn frechet_at_zero_time_is_zero() {
        let m = array![[-1.0, 1.0], [1.0, -1.0]];
        let d = expm_frechet_exact(&m, 0.0, DirectionMatrix::new(0, 1).unwrap()).unwrap();
        for v in d.iter() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn frechet_matches_raw_entry_perturbation() {
        // perturb m01 only, diagonal held fixed, and difference e^{tM}
        let m = array![[-1.0, 1.0], [1.0, -1.0]];
        let t = 0.5;
        let exact = expm_frechet_exact(&m, t, DirectionMatrix::new(0, 1).unwrap()).unwrap();
        let h = 1e-6;
        let mut up = m.clone();
        up[[0, 1]] += h;
        let mut down = m.clone();
        down[[0, 1]] -= h;
        let fd = (expm(&(&up * t)) - expm(&(&down * t))) / (2.0 * h);
        for (a, b) in exact.iter().zip(fd.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn frechet_is_linear_in_the_direction() {
        let m = array![[-2.0, 1.5, 0.5], [0.3, -0.4, 0.1], [1.0, 2.0, -3.0]];
        let t = 0.37;
        let e12 = DirectionMatrix::new(0, 1).unwrap().dense(3);
        let e21 = DirectionMatrix::new(1, 0).unwrap().dense(3);
        let single = expm_frechet_direction(&m, t, &e12).unwrap()
            + expm_frechet_direction(&m, t, &e21).unwrap();
        let rank2 = expm_frechet_direction(&m, t, &(&e12 + &e21)).unwrap();
        for (a, b) in single.iter().zip(rank2.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn series_first_term_equals_approx() {
        let m = array![[-2.0, 1.5, 0.5], [0.3, -0.4, 0.1], [1.0, 2.0, -3.0]];
        let t = 0.6;
        let dir = DirectionMatrix::new(2, 0).unwrap();
        let series = expm_grad_series(&m, t, dir, 1).unwrap();
        let cached = crate::expm::matrix_exponential(&m, t).unwrap();
        let approx = expm_grad_approx(&cached, dir).to_dense();
        for (a, b) in series.iter().zip(approx.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn approx_copies_the_column() {
        let rm = symmetric_two_state();
        let cached = crate::expm::matrix_exponential(rm.lambda().unwrap(), 1.0).unwrap();
        let g = expm_grad_approx(&cached, DirectionMatrix::new(0, 1).unwrap());
        assert_eq!(g.col, 1);
        assert!((g.values[0] - 0.5676676).abs() < 1e-6);
        assert!((g.values[1] - 0.4323324).abs() < 1e-6);
    }

    #[test]
    fn approx_at_zero_time_is_zero() {
        let rm = symmetric_two_state();
        let cached = crate::expm::matrix_exponential(rm.lambda().unwrap(), 0.0).unwrap();
        let g = expm_grad_approx(&cached, DirectionMatrix::new(1, 0).unwrap());
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_observation_has_zero_gradient() {
        let rm = symmetric_two_state();
        let obs = ObservationSequence::new(vec![0], vec![0.0], false).unwrap();
        let (_, cache) = loglik_sequential(&obs, &rm).unwrap();
        for method in [GradientMethod::Approx, GradientMethod::Exact] {
            let g = sequential_loglik_grad(&cache, &rm, method).unwrap();
            assert!(g.values.iter().all(|v| *v == 0.0));
            assert!(g.diag.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn zero_lambda_gradient_maps_to_zero_theta_gradient() {
        let rm = symmetric_two_state();
        let g = RateGradient {
            values: vec![0.0, 0.0],
            diag: vec![0.0, 0.0],
            space: GradientSpace::NormalizedRates,
            method: GradientMethod::Exact,
        };
        let gt = chain_rule_to_theta(&g, &rm).unwrap();
        assert!(gt.values.iter().all(|v| *v == 0.0));
        assert_eq!(gt.space, GradientSpace::LogRates);
    }

    #[test]
    fn chain_rule_rejects_wrong_space() {
        let rm = symmetric_two_state();
        let g = RateGradient {
            values: vec![1.0, 2.0],
            diag: Vec::new(),
            space: GradientSpace::LogRates,
            method: GradientMethod::Exact,
        };
        assert!(chain_rule_to_theta(&g, &rm).is_err());
    }

    #[test]
    fn central_difference_hand_example() {
        // f = θ₀² + 3θ₁ at (1,1) → (2,3)
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1]);
        let g = central_difference_grad(f, &[1.0, 1.0], 1e-5).unwrap();
        assert!((g.values[0] - 2.0).abs() < 1e-8);
        assert!((g.values[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn central_difference_is_exact_on_quadratics() {
        let f = |x: &[f64]| Ok(2.5 * x[0] * x[0] - 1.5 * x[0] + 0.25);
        let g = central_difference_grad(f, &[0.7], 1e-4).unwrap();
        assert!((g.values[0] - (2.5 * 2.0 * 0.7 - 1.5)).abs() < 1e-10);
    }

    #[test]
    fn central_difference_error_scales_quadratically() {
        // smooth non-polynomial f: truncation error should drop ~4x per halving
        let f = |x: &[f64]| Ok(x[0].exp().sin());
        let x = [0.8f64];
        let truth = x[0].exp() * x[0].exp().cos();
        let err = |h: f64| {
            let g = central_difference_grad(f, &x, h).unwrap();
            (g.values[0] - truth).abs()
        };
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn central_difference_reports_offending_coordinate() {
        let f = |x: &[f64]| {
            Ok(if x[1] > 1.0 {
                f64::NEG_INFINITY
            } else {
                x[0] + x[1]
            })
        };
        let err = central_difference_grad(f, &[0.0, 1.0], 1e-3).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn directions_cover_all_entries() {
        let dirs = all_directions(3);
        assert_eq!(dirs.len(), 9);
        assert!(dirs.iter().filter(|d| d.from == d.to).count() == 3);
    }

    #[test]
    fn direction_matrix_rejects_diagonal_pairs() {
        assert!(DirectionMatrix::new(1, 1).is_err());
    }
}
