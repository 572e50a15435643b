//! The `grad-check` command: per-coordinate comparison of the exact, series,
//! first-order, and finite-difference gradient routes, in normalized-rate
//! space and in log-rate space.
//!
//! The finite-difference column in λ-space perturbs the matrix entries
//! directly and re-exponentiates (no generator validation, no clamping), so
//! it shares no code with the analytic routes it checks; the θ-space column
//! differences the full θ → Q → β → Λ → likelihood pipeline.

use ndarray::{Array1, Array2};

use ctmcgp_core::error::{Error, Result};
use ctmcgp_core::expm::expm;
use ctmcgp_core::gradients::{
    central_difference_grad, chain_rule_to_theta, cosine_similarity, sequential_loglik_grad,
    tree_loglik_grad, GradientMethod, RateGradient,
};
use ctmcgp_core::io::config::{RegimeTag, RunConfig};
use ctmcgp_core::io::writers::{write_gradcheck, GradCheckReport, GradCheckRow, GradCheckSummary};
use ctmcgp_core::likelihood::{loglik_sequential, preorder_partials, tree_loglik, TipData};
use ctmcgp_core::phylo::Phylogeny;
use ctmcgp_core::rates::{build_rate_matrix, LinkFunction};
use ctmcgp_core::simulate::ObservationSequence;
use ctmcgp_core::state::PairIndex;

use crate::simulate::simulate_in_memory;

/// Sequential log-likelihood from a raw matrix, entries free.
fn raw_sequential_loglik(obs: &ObservationSequence, lambda: &Array2<f64>, pi_init: &[f64]) -> f64 {
    let mut ll = pi_init[obs.states[0]].ln();
    for k in 1..obs.len() {
        let dt = obs.times[k] - obs.times[k - 1];
        let p = expm(&(lambda * dt));
        ll += p[[obs.states[k - 1], obs.states[k]]].ln();
    }
    ll
}

/// Tree log-likelihood from a raw matrix by pruning with per-node rescaling.
fn raw_tree_loglik(
    tree: &Phylogeny,
    tips: &TipData,
    lambda: &Array2<f64>,
    root_dist: &[f64],
) -> f64 {
    let s = lambda.nrows();
    let mut post: Vec<Array1<f64>> = vec![Array1::zeros(s); tree.n_nodes()];
    let mut scale = vec![0.0f64; tree.n_nodes()];
    for &v in tree.postorder() {
        if tree.is_tip(v) {
            post[v][tips.states[v]] = 1.0;
        } else {
            let (l, r) = tree.children(v).unwrap();
            let pl = expm(&(lambda * tree.branch_length(l))).dot(&post[l]);
            let pr = expm(&(lambda * tree.branch_length(r))).dot(&post[r]);
            let mut combined = &pl * &pr;
            let max = combined.iter().cloned().fold(0.0f64, f64::max);
            combined /= max;
            post[v] = combined;
            scale[v] = scale[l] + scale[r] + max.ln();
        }
    }
    let root = Array1::from_iter(root_dist.iter().cloned());
    post[tree.root()].dot(&root).ln() + scale[tree.root()]
}

enum CheckData {
    Sequential(ObservationSequence),
    Tree { tree: Phylogeny, tips: TipData },
}

/// Run the gradient comparison and write the report CSVs.
pub fn cmd_gradcheck(config: &RunConfig) -> Result<GradCheckReport> {
    if config.states > config.gradcheck_max_states {
        return Err(Error::guard(format!(
            "grad-check with {} states exceeds gradcheck_max_states = {} (raise the flag to override)",
            config.states, config.gradcheck_max_states
        )));
    }
    let data = simulate_in_memory(config)?;
    let theta = data.theta_true.clone();
    let states = &data.states;
    let size = states.size();
    let pairs = PairIndex::new(size);
    let pi: Vec<f64> = data.rates.pi().to_vec();
    let root: Vec<f64> = data.rates.pi_init().to_vec();

    let check = match config.regime {
        RegimeTag::Sequential => CheckData::Sequential(data.observations.unwrap()),
        RegimeTag::Tree => CheckData::Tree {
            tree: data.tree.unwrap(),
            tips: data.tips.unwrap(),
        },
        RegimeTag::Prior => {
            return Err(Error::input("grad-check needs a data regime (tree or sequential)"))
        }
    };
    let rates = data.rates;
    let lambda = rates.lambda()?.clone();

    // analytic λ-space gradients
    let grad_of = |method: GradientMethod| -> Result<RateGradient> {
        match &check {
            CheckData::Sequential(obs) => {
                let (_, cache) = loglik_sequential(obs, &rates)?;
                sequential_loglik_grad(&cache, &rates, method)
            }
            CheckData::Tree { tree, tips } => {
                let (_, mut partials) = tree_loglik(tree, tips, &rates, &root)?;
                preorder_partials(tree, &root, &mut partials)?;
                tree_loglik_grad(tree, &rates, &partials, method)
            }
        }
    };
    let exact = grad_of(GradientMethod::Exact)?;
    let series = grad_of(GradientMethod::Series(config.series_k))?;
    let approx = grad_of(GradientMethod::Approx)?;

    // finite differences in λ-space: raw entry perturbation
    let raw_loglik = |m: &Array2<f64>| -> f64 {
        match &check {
            CheckData::Sequential(obs) => raw_sequential_loglik(obs, m, rates.pi_init().as_slice().unwrap()),
            CheckData::Tree { tree, tips } => raw_tree_loglik(tree, tips, m, &root),
        }
    };
    let h = 1e-6;
    let mut central_lambda = Array2::<f64>::zeros((size, size));
    for i in 0..size {
        for j in 0..size {
            let mut up = lambda.clone();
            up[[i, j]] += h;
            let mut down = lambda.clone();
            down[[i, j]] -= h;
            central_lambda[[i, j]] = (raw_loglik(&up) - raw_loglik(&down)) / (2.0 * h);
        }
    }

    // θ-space: chain rule on each analytic route, central differences
    // through the whole pipeline
    let exact_theta = chain_rule_to_theta(&exact, &rates)?;
    let series_theta = chain_rule_to_theta(&series, &rates)?;
    let approx_theta = chain_rule_to_theta(&approx, &rates)?;
    let pipeline = |th: &[f64]| -> Result<f64> {
        let rm = build_rate_matrix(th, LinkFunction::Exp)?
            .normalize(&pi)?
            .with_pi_init(&root)?;
        match &check {
            CheckData::Sequential(obs) => Ok(loglik_sequential(obs, &rm)?.0),
            CheckData::Tree { tree, tips } => Ok(tree_loglik(tree, tips, &rm, &root)?.0),
        }
    };
    let central_theta = central_difference_grad(pipeline, &theta, 1e-5)?;

    let mut report = GradCheckReport::default();
    let exact_dense = exact.dense();
    let series_dense = series.dense();
    let approx_dense = approx.dense();
    for i in 0..size {
        for j in 0..size {
            report.rows.push(GradCheckRow {
                space: "lambda".into(),
                from: states.label(i).to_string(),
                to: states.label(j).to_string(),
                exact: exact_dense[[i, j]],
                series: series_dense[[i, j]],
                approx: approx_dense[[i, j]],
                central_diff: central_lambda[[i, j]],
            });
        }
    }
    for (k, (i, j)) in pairs.iter().enumerate() {
        report.rows.push(GradCheckRow {
            space: "theta".into(),
            from: states.label(i).to_string(),
            to: states.label(j).to_string(),
            exact: exact_theta.values[k],
            series: series_theta.values[k],
            approx: approx_theta.values[k],
            central_diff: central_theta.values[k],
        });
    }

    let flat = |m: &Array2<f64>| -> Vec<f64> { m.iter().cloned().collect() };
    let summarize = |space: &str, comparison: &str, a: &[f64], b: &[f64]| GradCheckSummary {
        space: space.into(),
        comparison: comparison.into(),
        max_abs_diff: a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
        max_rel_diff: a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
            .fold(0.0, f64::max),
        cosine: cosine_similarity(a, b),
    };
    report.summary = vec![
        summarize(
            "lambda",
            "exact_vs_central",
            &flat(&exact_dense),
            &flat(&central_lambda),
        ),
        summarize(
            "lambda",
            "approx_vs_exact",
            &flat(&approx_dense),
            &flat(&exact_dense),
        ),
        summarize(
            "lambda",
            "series_vs_exact",
            &flat(&series_dense),
            &flat(&exact_dense),
        ),
        summarize(
            "theta",
            "exact_vs_central",
            &exact_theta.values,
            &central_theta.values,
        ),
        summarize(
            "theta",
            "approx_vs_exact",
            &approx_theta.values,
            &exact_theta.values,
        ),
        summarize(
            "theta",
            "series_vs_exact",
            &series_theta.values,
            &exact_theta.values,
        ),
    ];

    write_gradcheck(&format!("{}/gradcheck.csv", config.out), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_refuses_large_state_spaces() {
        let mut config = RunConfig::default();
        config.states = 20;
        config.gradcheck_max_states = 16;
        let err = cmd_gradcheck(&config).unwrap_err();
        assert!(matches!(err, Error::Guard(_)));
        assert!(err.to_string().contains("gradcheck_max_states"));
    }
}
