//! Generator, transition-matrix, and simulation properties, checked against
//! a truncated-Taylor oracle and Monte-Carlo expectations.

mod common;

use common::*;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ctmcgp_core::expm::matrix_exponential;
use ctmcgp_core::rates::{build_rate_matrix, LinkFunction, RateMatrix};
use ctmcgp_core::simulate::{simulate_path, simulate_tip_data, JumpCount};

#[test]
fn generated_rate_matrices_conserve_row_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for s in [2usize, 3, 5, 8] {
        let theta = random_theta(s, &mut rng);
        let rm = build_rate_matrix(&theta, LinkFunction::Exp)
            .unwrap()
            .normalize_uniform()
            .unwrap();
        for i in 0..s {
            let q_sum: f64 = rm.q().row(i).sum();
            let l_sum: f64 = rm.lambda().unwrap().row(i).sum();
            assert!(q_sum.abs() < 1e-12, "Q row {i} sums to {q_sum}");
            assert!(l_sum.abs() < 1e-12, "Lambda row {i} sums to {l_sum}");
        }
    }
}

#[test]
fn transition_matrices_are_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let s = rng.gen_range(2..7);
        let rm = random_rates(s, &mut rng);
        let t = rng.gen_range(0.0..3.0);
        let p = matrix_exponential(rm.lambda().unwrap(), t).unwrap();
        for i in 0..s {
            let sum: f64 = p.p.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-10);
            for j in 0..s {
                assert!(p.p[[i, j]] >= 0.0);
            }
        }
    }
}

#[test]
fn expm_matches_sixty_term_taylor_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random_generator(5, &mut rng);
    let t = 0.7;
    let p = matrix_exponential(&q, t).unwrap();
    let oracle = taylor_expm(&(&q * t), 60);
    for (a, b) in p.p.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn semigroup_property_on_random_generators() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let q = random_generator(4, &mut rng);
        let s = rng.gen_range(0.1..1.0);
        let t = rng.gen_range(0.1..1.0);
        let p_st = matrix_exponential(&q, s + t).unwrap();
        let p_s = matrix_exponential(&q, s).unwrap();
        let p_t = matrix_exponential(&q, t).unwrap();
        let product = p_s.p.dot(&p_t.p);
        for (a, b) in p_st.p.iter().zip(product.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn normalization_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let theta = random_theta(4, &mut rng);
    let base = build_rate_matrix(&theta, LinkFunction::Exp)
        .unwrap()
        .normalize_uniform()
        .unwrap();
    for c in [0.1, 3.0, 100.0] {
        let scaled = RateMatrix::from_generator(base.q() * c)
            .unwrap()
            .normalize_uniform()
            .unwrap();
        for (a, b) in base
            .lambda()
            .unwrap()
            .iter()
            .zip(scaled.lambda().unwrap().iter())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

/// Mean jump count over [0, t] equals t under a normalized generator whose
/// frequency vector is stationary (symmetric rates, uniform π).
#[test]
fn expected_jump_count_equals_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // symmetric 3-state generator: uniform is stationary
    let mut q = Array2::<f64>::zeros((3, 3));
    for i in 0..3 {
        for j in 0..i {
            let v = rng.gen_range(0.2..2.0);
            q[[i, j]] = v;
            q[[j, i]] = v;
        }
    }
    for i in 0..3 {
        let row: f64 = (0..3).filter(|&j| j != i).map(|j| q[[i, j]]).sum();
        q[[i, i]] = -row;
    }
    let rm = RateMatrix::from_generator(q).unwrap().normalize_uniform().unwrap();

    let n = 10_000usize;
    for (case, t_end) in [0.5f64, 1.0, 2.0].into_iter().enumerate() {
        let mut counts = Vec::with_capacity(n);
        for seed in 0..n {
            let path = simulate_path(&rm, t_end, (case * n + seed) as u64).unwrap();
            counts.push(JumpCount::of_path(&path, t_end).count as f64);
        }
        let mean: f64 = counts.iter().sum::<f64>() / n as f64;
        let var: f64 =
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - t_end).abs() < 3.0 * se,
            "t={t_end}: mean {mean} vs {t_end} (se {se})"
        );
    }
}

#[test]
fn two_state_tip_flip_probability_matches_analytic_value() {
    // single branch of length 1 under the symmetric normalized generator:
    // P(tip != root) = 0.5 − 0.5 e^{−2} ≈ 0.4323
    let rm = build_rate_matrix(&[0.0, 0.0], LinkFunction::Exp)
        .unwrap()
        .normalize(&[0.5, 0.5])
        .unwrap();
    let tree = ctmcgp_core::phylo::Phylogeny::new(
        vec!["A".into(), "B".into()],
        vec![None, None, Some((0, 1))],
        vec![1.0, 0.0, 0.0],
    )
    .unwrap();
    // tip B sits on a zero branch, so it reports the root state
    let n = 10_000usize;
    let mut flips = 0usize;
    for seed in 0..n {
        let tips = simulate_tip_data(&rm, &tree, &[0.5, 0.5], seed as u64).unwrap();
        if tips[0] != tips[1] {
            flips += 1;
        }
    }
    let p_hat = flips as f64 / n as f64;
    let p = 0.5 - 0.5 * (-2.0f64).exp();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (p_hat - p).abs() < 3.0 * se,
        "flip rate {p_hat} vs analytic {p} (se {se})"
    );
}
