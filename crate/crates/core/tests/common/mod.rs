//! Shared oracles and generators for integration tests.
//!
//! Everything here is deliberately independent of the implementation paths
//! being checked: the matrix exponential oracle is a truncated Taylor sum,
//! the Gaussian density oracle uses an explicit inverse and determinant, and
//! random instances come from a seeded generator.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ctmcgp_core::phylo::Phylogeny;
use ctmcgp_core::rates::{build_rate_matrix, LinkFunction, RateMatrix};

/// Truncated Taylor series for e^M: sum of M^k/k! for k = 0..terms.
pub fn taylor_expm(m: &Array2<f64>, terms: usize) -> Array2<f64> {
    let n = m.nrows();
    let mut sum = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=terms {
        term = term.dot(m) / k as f64;
        sum += &term;
    }
    sum
}

/// Random log-rate vector for an S-state chain, entries in [-1, 1].
pub fn random_theta(size: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..size * size - size)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect()
}

/// Random normalized rate matrix with uniform frequencies.
pub fn random_rates(size: usize, rng: &mut ChaCha8Rng) -> RateMatrix {
    let theta = random_theta(size, rng);
    build_rate_matrix(&theta, LinkFunction::Exp)
        .unwrap()
        .normalize_uniform()
        .unwrap()
}

/// Random generator matrix (not normalized), off-diagonals in (0, 2].
pub fn random_generator(size: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((size, size));
    for i in 0..size {
        for j in 0..size {
            if i != j {
                q[[i, j]] = rng.gen_range(0.05..2.0);
            }
        }
        let row: f64 = (0..size).filter(|&j| j != i).map(|j| q[[i, j]]).sum();
        q[[i, i]] = -row;
    }
    q
}

/// Random rooted binary tree over n tips with branch lengths in the given
/// range, built by joining random pairs of subtrees.
pub fn random_tree(n_tips: usize, max_branch: f64, rng: &mut ChaCha8Rng) -> Phylogeny {
    let n_nodes = 2 * n_tips - 1;
    let mut children: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
    let mut branch = vec![0.0; n_nodes];
    let mut roots: Vec<usize> = (0..n_tips).collect();
    let mut next = n_tips;
    while roots.len() > 1 {
        let a = roots.swap_remove(rng.gen_range(0..roots.len()));
        let b = roots.swap_remove(rng.gen_range(0..roots.len()));
        children[next] = Some((a, b));
        roots.push(next);
        next += 1;
    }
    for v in 0..n_nodes - 1 {
        branch[v] = rng.gen_range(0.0..max_branch);
    }
    let labels = (0..n_tips).map(|i| format!("t{}", i + 1)).collect();
    Phylogeny::new(labels, children, branch).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Dense multivariate-normal log-density with explicit inverse and
/// determinant via Gauss-Jordan elimination.
pub fn dense_mvn_logpdf(x: &Array1<f64>, cov: &Array2<f64>) -> f64 {
    let n = cov.nrows();
    // Gauss-Jordan inverse, tracking the determinant from the pivots.
    let mut aug = Array2::<f64>::zeros((n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = cov[[i, j]];
        }
        aug[[i, n + i]] = 1.0;
    }
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if aug[[r, col]].abs() > aug[[piv, col]].abs() {
                piv = r;
            }
        }
        if piv != col {
            det = -det;
            for j in 0..2 * n {
                aug.swap([col, j], [piv, j]);
            }
        }
        let p = aug[[col, col]];
        det *= p;
        for j in 0..2 * n {
            aug[[col, j]] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[[r, col]];
                for j in 0..2 * n {
                    let v = aug[[col, j]];
                    aug[[r, j]] -= f * v;
                }
            }
        }
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * aug[[i, n + j]] * x[j];
        }
    }
    -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}
