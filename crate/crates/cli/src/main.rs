use clap::{Args, Parser, Subcommand};

use ctmcgp::{bench, exit_code, gradcheck, infer, simulate};
use ctmcgp_core::error::Result;
use ctmcgp_core::io::config::{grad_method_name, RunConfig};

/// Bayesian CTMC rate inference with GP priors and scalable gradients.
#[derive(Parser)]
#[command(name = "ctmcgp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<String>,
    /// RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out: Option<String>,
    /// Number of CTMC states (overrides the config file).
    #[arg(long)]
    states: Option<usize>,
    /// Gradient method(s); comma-separated for bench.
    #[arg(long)]
    method: Option<String>,
    /// Benchmark repetitions per point.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (bench always runs single-threaded).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate covariates, true rates, and data under them.
    Simulate(CommonArgs),
    /// Sample the posterior and summarize it.
    Infer(CommonArgs),
    /// Compare exact, series, approximate, and finite-difference gradients.
    #[command(name = "grad-check")]
    GradCheck(CommonArgs),
    /// Measure gradient-evaluation wall time across state-space sizes.
    Bench(CommonArgs),
}

fn build_config(args: &CommonArgs, is_bench: bool) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(states) = args.states {
        config.states = states;
        config.labels = None;
    }
    if let Some(method) = &args.method {
        if is_bench {
            config.set("bench_methods", method)?;
        } else {
            config.set("method", method)?;
        }
    }
    if let Some(reps) = args.reps {
        config.bench_reps = reps;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if is_bench {
        config.threads = 1;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let config = build_config(&args, false)?;
            let data = simulate::cmd_simulate(&config)?;
            eprintln!(
                "simulate: wrote {} states, beta = {}, outputs in {}",
                data.states.size(),
                data.rates.beta()?,
                config.out
            );
        }
        Command::Infer(args) => {
            let config = build_config(&args, false)?;
            let out = infer::cmd_infer(&config)?;
            eprintln!(
                "infer: {} draws, acceptance {:.3}, divergences {}, step size {:.4}",
                out.records.len(),
                out.accept_rate,
                out.divergences,
                out.final_step_size
            );
            if let Some(rmse) = out.median_rmse {
                eprintln!(
                    "infer: median RMSE (normalized log-rates) {:.4}, HPDI coverage {:.3}",
                    rmse,
                    out.coverage_loglam.unwrap_or(f64::NAN)
                );
            }
            eprintln!("infer: outputs in {}", config.out);
        }
        Command::GradCheck(args) => {
            let config = build_config(&args, false)?;
            let report = gradcheck::cmd_gradcheck(&config)?;
            for s in &report.summary {
                eprintln!(
                    "grad-check [{}] {}: max_abs {:.3e}, max_rel {:.3e}, cosine {:.6}",
                    s.space, s.comparison, s.max_abs_diff, s.max_rel_diff, s.cosine
                );
            }
            eprintln!("grad-check: report in {}/gradcheck.csv", config.out);
        }
        Command::Bench(args) => {
            let config = build_config(&args, true)?;
            let report = bench::cmd_bench(&config)?;
            for p in &report.points {
                eprintln!(
                    "bench [{}] S = {:>3}: mean {:.4} ms, median {:.4} ms over {} reps",
                    grad_method_name(p.method),
                    p.states,
                    p.mean_ms,
                    p.median_ms,
                    p.reps
                );
            }
            for s in &report.slopes {
                eprintln!(
                    "bench [{}] log-log slope {:.3} ± {:.3} over {} points",
                    grad_method_name(s.method),
                    s.slope,
                    s.stderr,
                    s.points
                );
            }
            eprintln!("bench: outputs in {}", config.out);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
