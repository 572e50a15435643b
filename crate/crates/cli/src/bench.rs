//! The `bench` command: wall-time scaling of a full gradient evaluation as
//! the state space grows, with ordinary-least-squares slopes on the log-log
//! points.
//!
//! The instance mirrors the scaling study: states 1..S with the negative L1
//! index distance as covariate, log-rates log(x + max|x| + 1), one simulated
//! alignment on a fixed Yule tree. Timing covers the gradient alone — the
//! likelihood pass that fills the caches runs outside the clock, since those
//! quantities are computed once and reused across an HMC trajectory. Exact
//! and central-difference methods are capped at `exact_cap` states. Bench
//! runs are single-threaded by construction.

use std::hint::black_box;
use std::time::Instant;

use ctmcgp_core::error::{Error, Result};
use ctmcgp_core::gradients::{central_difference_grad, tree_loglik_grad, GradientMethod};
use ctmcgp_core::io::config::{grad_method_name, RunConfig};
use ctmcgp_core::io::writers::write_text;
use ctmcgp_core::likelihood::{preorder_partials, tree_loglik, TipData};
use ctmcgp_core::phylo::Phylogeny;
use ctmcgp_core::rates::{build_rate_matrix, LinkFunction};
use ctmcgp_core::simulate::{simulate_tip_data, yule_tree};
use ctmcgp_core::state::PairIndex;

/// One measured (method, S) point.
#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub method: GradientMethod,
    pub states: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub reps: usize,
}

/// Fitted log-log scaling for one method.
#[derive(Debug, Clone)]
pub struct BenchSlope {
    pub method: GradientMethod,
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub slopes: Vec<BenchSlope>,
}

/// OLS slope and its standard error for log(time) on log(size).
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::input(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::input("slope fit needs strictly positive values"));
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::input("slope fit needs at least two distinct sizes"));
    }
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = logs
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = if logs.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

/// Time a closure: repeat it in batches sized so each repetition takes at
/// least a few milliseconds, and report per-call means and medians.
fn time_calls<F: FnMut()>(mut f: F, reps: usize) -> (f64, f64) {
    // warm-up call, discarded; also provides the batch-size estimate
    let start = Instant::now();
    f();
    let est = start.elapsed().as_secs_f64().max(1e-9);
    // batch cheap calls so a stray context switch cannot dominate one rep
    let inner = ((25e-3 / est).round() as usize).clamp(1, 100_000);

    let mut per_call = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..inner {
            f();
        }
        per_call.push(start.elapsed().as_secs_f64() * 1e3 / inner as f64);
    }
    let mean = per_call.iter().sum::<f64>() / reps as f64;
    let mut sorted = per_call;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    (mean, median)
}

struct BenchInstance {
    tree: Phylogeny,
    tips: TipData,
    theta: Vec<f64>,
    root: Vec<f64>,
}

/// Scaling-study instance for S states on a shared tree.
fn build_instance(states: usize, tree: &Phylogeny, seed: u64) -> Result<BenchInstance> {
    let pairs = PairIndex::new(states);
    let x: Vec<f64> = pairs
        .iter()
        .map(|(i, j)| -((i as f64 - j as f64).abs()))
        .collect();
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let theta: Vec<f64> = x.iter().map(|&v| (v + max_abs + 1.0).ln()).collect();
    let root = vec![1.0 / states as f64; states];
    let rates = build_rate_matrix(&theta, LinkFunction::Exp)?
        .normalize_uniform()?
        .with_pi_init(&root)?;
    let tips = simulate_tip_data(&rates, tree, &root, seed)?;
    Ok(BenchInstance {
        tree: tree.clone(),
        tips: TipData::new(tips),
        theta,
        root,
    })
}

/// Run the scaling benchmark and write points + slopes as CSV.
pub fn cmd_bench(config: &RunConfig) -> Result<BenchReport> {
    if config.bench_reps < 5 {
        return Err(Error::input(format!(
            "bench needs at least 5 repetitions, got {}",
            config.bench_reps
        )));
    }
    if config.bench_states.is_empty() {
        return Err(Error::input("bench_states must not be empty"));
    }
    let mut tree = yule_tree(config.bench_tips, config.seed ^ 0x6265_6e63)?;
    let h = tree.height();
    tree.scale_branches(config.tree_height / h)?;

    let mut report = BenchReport::default();
    for &method in &config.bench_methods {
        let capped = !matches!(method, GradientMethod::Approx);
        for &s in &config.bench_states {
            if capped && s > config.exact_cap {
                continue;
            }
            let instance = build_instance(s, &tree, config.seed)?;
            let rates = build_rate_matrix(&instance.theta, LinkFunction::Exp)?
                .normalize_uniform()?
                .with_pi_init(&instance.root)?;
            // cache-filling likelihood pass stays outside the clock
            let (ll, mut partials) =
                tree_loglik(&instance.tree, &instance.tips, &rates, &instance.root)?;
            if !ll.is_finite() {
                return Err(Error::numerical("benchmark instance has zero likelihood"));
            }
            preorder_partials(&instance.tree, &instance.root, &mut partials)?;

            let (mean_ms, median_ms) = match method {
                GradientMethod::Approx | GradientMethod::Exact | GradientMethod::Series(_) => {
                    time_calls(
                        || {
                            let g = tree_loglik_grad(&instance.tree, &rates, &partials, method)
                                .expect("gradient evaluation");
                            black_box(g);
                        },
                        config.bench_reps,
                    )
                }
                GradientMethod::CentralDiff => {
                    let pi = vec![1.0 / s as f64; s];
                    let pipeline = |th: &[f64]| -> Result<f64> {
                        let rm = build_rate_matrix(th, LinkFunction::Exp)?
                            .normalize(&pi)?
                            .with_pi_init(&instance.root)?;
                        Ok(tree_loglik(&instance.tree, &instance.tips, &rm, &instance.root)?.0)
                    };
                    time_calls(
                        || {
                            let g = central_difference_grad(pipeline, &instance.theta, 1e-5)
                                .expect("central difference");
                            black_box(g);
                        },
                        config.bench_reps,
                    )
                }
            };
            report.points.push(BenchPoint {
                method,
                states: s,
                mean_ms,
                median_ms,
                reps: config.bench_reps,
            });
        }

        let pts: Vec<(f64, f64)> = report
            .points
            .iter()
            .filter(|p| p.method == method)
            .map(|p| (p.states as f64, p.mean_ms))
            .collect();
        if pts.len() >= 3 {
            let (slope, stderr) = fit_loglog_slope(&pts)?;
            report.slopes.push(BenchSlope {
                method,
                slope,
                stderr,
                points: pts.len(),
            });
        }
    }

    let dir = &config.out;
    let mut text = String::from("method,states,mean_ms,median_ms,reps\n");
    for p in &report.points {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            grad_method_name(p.method),
            p.states,
            p.mean_ms,
            p.median_ms,
            p.reps
        ));
    }
    write_text(&format!("{dir}/bench.csv"), &text)?;
    let mut text = String::from("method,slope,stderr,points\n");
    for sl in &report.slopes {
        text.push_str(&format!(
            "{},{},{},{}\n",
            grad_method_name(sl.method),
            sl.slope,
            sl.stderr,
            sl.points
        ));
    }
    write_text(&format!("{dir}/bench_slopes.csv"), &text)?;
    Ok(report)
}
