//! The `simulate` command: synthetic covariates, true log-rates, and data
//! generated under them (tip states along a tree, or a discretely observed
//! chain), all written as plot-ready CSV plus a Newick echo of the tree.

use ctmcgp_core::error::{Error, Result};
use ctmcgp_core::gp::CovariateSet;
use ctmcgp_core::io::config::{CovariateTag, RegimeTag, RunConfig, TruthTag};
use ctmcgp_core::io::newick::{parse_newick, write_newick};
use ctmcgp_core::io::tables::{format_covariate, format_tip_states, read_covariate};
use ctmcgp_core::io::writers::{read_text, write_text};
use ctmcgp_core::likelihood::TipData;
use ctmcgp_core::phylo::Phylogeny;
use ctmcgp_core::rates::{build_rate_matrix, LinkFunction, RateMatrix};
use ctmcgp_core::simulate::{discretize_path, simulate_path, simulate_tip_data, yule_tree, ObservationSequence};
use ctmcgp_core::state::{PairIndex, StateSpace};

/// Everything one simulation produces, kept in memory for downstream use.
#[derive(Debug)]
pub struct SimulatedData {
    pub states: StateSpace,
    pub covariates: CovariateSet,
    pub theta_true: Vec<f64>,
    pub rates: RateMatrix,
    pub tree: Option<Phylogeny>,
    pub tips: Option<TipData>,
    pub observations: Option<ObservationSequence>,
}

/// Negative L1 index distance covariate: x_ij = −|i−j|, optionally divided
/// by S−1.
pub fn l1_covariate(states: usize, normalized: bool) -> Vec<f64> {
    let pairs = PairIndex::new(states);
    let scale = if normalized { (states - 1) as f64 } else { 1.0 };
    pairs
        .iter()
        .map(|(i, j)| -((i as f64 - j as f64).abs()) / scale)
        .collect()
}

/// Build the covariate set the configuration asks for.
pub fn build_covariates(config: &RunConfig, states: &StateSpace) -> Result<CovariateSet> {
    match config.covariate_gen {
        CovariateTag::L1 => CovariateSet::single(l1_covariate(states.size(), false)),
        CovariateTag::L1Norm => CovariateSet::single(l1_covariate(states.size(), true)),
        CovariateTag::File => {
            if config.covariates.is_empty() {
                return Err(Error::input(
                    "covariate_gen = file requires at least one covariates path",
                ));
            }
            let mut names = Vec::new();
            let mut values = Vec::new();
            for path in &config.covariates {
                let name = std::path::Path::new(path)
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| path.clone());
                values.push(read_covariate(&read_text(path)?, &name, states)?);
                names.push(name);
            }
            CovariateSet::new(names, values)
        }
    }
}

/// True log-rates under the configured truth function, evaluated on the
/// first covariate.
pub fn truth_theta(config: &RunConfig, states: &StateSpace, covariates: &CovariateSet) -> Result<Vec<f64>> {
    let x = covariates.values(0);
    match config.truth {
        TruthTag::Quadratic => Ok(x
            .iter()
            .map(|&v| config.quad_c0 + config.quad_c1 * v + config.quad_c2 * v * v)
            .collect()),
        TruthTag::LogL1 => {
            let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let theta: Vec<f64> = x.iter().map(|&v| (v + max_abs + 1.0).ln()).collect();
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::numerical("log-L1 truth produced non-finite log-rates"));
            }
            Ok(theta)
        }
        TruthTag::CustomCsv => {
            let path = config
                .truth_csv
                .as_ref()
                .ok_or_else(|| Error::input("truth = custom-csv requires truth_csv"))?;
            read_covariate(&read_text(path)?, "truth", states)
        }
    }
}

fn pi_of(config: &RunConfig, states: &StateSpace) -> Vec<f64> {
    config
        .pi
        .clone()
        .unwrap_or_else(|| vec![1.0 / states.size() as f64; states.size()])
}

fn root_of(config: &RunConfig, states: &StateSpace) -> Vec<f64> {
    config
        .root_dist
        .clone()
        .unwrap_or_else(|| vec![1.0 / states.size() as f64; states.size()])
}

/// Load the configured tree or generate a Yule tree scaled to the target
/// height.
pub fn obtain_tree(config: &RunConfig) -> Result<Phylogeny> {
    match &config.tree {
        Some(path) => parse_newick(&read_text(path)?),
        None => {
            let mut tree = yule_tree(config.tree_tips, config.seed ^ 0x7265_7472)?;
            let h = tree.height();
            if h > 0.0 {
                tree.scale_branches(config.tree_height / h)?;
            }
            Ok(tree)
        }
    }
}

/// Serialize per-pair true rates: theta, q, and normalized lambda.
fn format_rates(states: &StateSpace, theta: &[f64], rates: &RateMatrix) -> Result<String> {
    let pairs = PairIndex::new(states.size());
    let lambda = rates.lambda()?;
    let mut out = String::from("from,to,theta,q,lambda\n");
    for (k, (i, j)) in pairs.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            states.label(i),
            states.label(j),
            theta[k],
            rates.q()[[i, j]],
            lambda[[i, j]]
        ));
    }
    Ok(out)
}

pub fn format_observations(obs: &ObservationSequence, states: &StateSpace) -> String {
    let mut out = String::from("time,state\n");
    for (t, s) in obs.times.iter().zip(&obs.states) {
        out.push_str(&format!("{t},{}\n", states.label(*s)));
    }
    out
}

pub fn read_observations(text: &str, states: &StateSpace) -> Result<ObservationSequence> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::input("observation table is empty"))?;
    if header.trim() != "time,state" {
        return Err(Error::input(format!(
            "observation table header must be 'time,state', found '{}'",
            header.trim()
        )));
    }
    let mut times = Vec::new();
    let mut obs_states = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 2 {
            return Err(Error::input(format!("line {}: expected 2 fields", idx + 1)));
        }
        times.push(
            fields[0]
                .parse()
                .map_err(|_| Error::input(format!("invalid time '{}'", fields[0])))?,
        );
        obs_states.push(states.index_of(fields[1])?);
    }
    ObservationSequence::new(obs_states, times, false)
}

/// Generate data in memory without touching the filesystem.
pub fn simulate_in_memory(config: &RunConfig) -> Result<SimulatedData> {
    let states = StateSpace::new(config.state_labels())?;
    let covariates = build_covariates(config, &states)?;
    if covariates.dim() != states.pair_count() {
        return Err(Error::input(format!(
            "covariate dimension {} does not match S²−S = {}",
            covariates.dim(),
            states.pair_count()
        )));
    }
    let theta = truth_theta(config, &states, &covariates)?;
    let pi = pi_of(config, &states);
    let root = root_of(config, &states);
    let rates = build_rate_matrix(&theta, LinkFunction::Exp)?
        .normalize(&pi)?
        .with_pi_init(&root)?;

    let mut out = SimulatedData {
        states,
        covariates,
        theta_true: theta,
        rates,
        tree: None,
        tips: None,
        observations: None,
    };
    match config.regime {
        RegimeTag::Tree => {
            let tree = obtain_tree(config)?;
            let tips = simulate_tip_data(&out.rates, &tree, &root, config.seed)?;
            out.tips = Some(TipData::new(tips));
            out.tree = Some(tree);
        }
        RegimeTag::Sequential => {
            let t_end = config.obs_count as f64 * config.obs_delta;
            let path = simulate_path(&out.rates, t_end, config.seed)?;
            out.observations = Some(discretize_path(&path, config.obs_delta, config.obs_count)?);
        }
        RegimeTag::Prior => {}
    }
    Ok(out)
}

/// The `simulate` command: generate and write all artifacts.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulatedData> {
    let data = simulate_in_memory(config)?;
    let dir = &config.out;
    let join = |name: &str| format!("{dir}/{name}");

    for p in 0..data.covariates.count() {
        write_text(
            &join(&format!("covariate_{}.csv", data.covariates.names()[p])),
            &format_covariate(data.covariates.values(p), &data.states),
        )?;
    }
    write_text(
        &join("theta_true.csv"),
        &format_covariate(&data.theta_true, &data.states),
    )?;
    write_text(
        &join("rates_true.csv"),
        &format_rates(&data.states, &data.theta_true, &data.rates)?,
    )?;
    if let Some(tree) = &data.tree {
        let mut nwk = write_newick(tree);
        nwk.push('\n');
        write_text(&join("tree.nwk"), &nwk)?;
    }
    if let Some(tips) = &data.tips {
        write_text(
            &join("tips.csv"),
            &format_tip_states(data.tree.as_ref().unwrap(), tips, &data.states),
        )?;
    }
    if let Some(obs) = &data.observations {
        write_text(&join("observations.csv"), &format_observations(obs, &data.states))?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_covariate_values() {
        // S=4, pair (2,3) in 1-based labels has distance 1
        let x = l1_covariate(4, false);
        let pairs = PairIndex::new(4);
        assert_eq!(x[pairs.linear(1, 2)], -1.0);
        assert_eq!(x[pairs.linear(0, 3)], -3.0);
        let xn = l1_covariate(4, true);
        assert_eq!(xn[pairs.linear(0, 3)], -1.0);
    }

    #[test]
    fn log_l1_truth_hand_value() {
        // S=4: x23 = −1, max|x| = 3, θ23 = log 3
        let mut config = RunConfig::default();
        config.states = 4;
        config.truth = TruthTag::LogL1;
        config.covariate_gen = CovariateTag::L1;
        let states = StateSpace::numbered(4).unwrap();
        let cov = build_covariates(&config, &states).unwrap();
        let theta = truth_theta(&config, &states, &cov).unwrap();
        let pairs = PairIndex::new(4);
        assert!((theta[pairs.linear(1, 2)] - 3f64.ln()).abs() < 1e-12);
        assert!((theta[pairs.linear(1, 2)] - 1.0986123).abs() < 1e-7);
    }

    #[test]
    fn zero_curvature_quadratic_is_affine() {
        let mut config = RunConfig::default();
        config.states = 3;
        config.quad_c0 = 0.4;
        config.quad_c1 = -1.1;
        config.quad_c2 = 0.0;
        let states = StateSpace::numbered(3).unwrap();
        let cov = build_covariates(&config, &states).unwrap();
        let theta = truth_theta(&config, &states, &cov).unwrap();
        for (t, x) in theta.iter().zip(cov.values(0)) {
            assert!((t - (0.4 - 1.1 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let mut config = RunConfig::default();
        config.states = 3;
        config.tree_tips = 12;
        config.seed = 5;
        let a = simulate_in_memory(&config).unwrap();
        let b = simulate_in_memory(&config).unwrap();
        assert_eq!(a.tips.as_ref().unwrap(), b.tips.as_ref().unwrap());
        assert_eq!(
            write_newick(a.tree.as_ref().unwrap()),
            write_newick(b.tree.as_ref().unwrap())
        );
        config.seed = 6;
        let c = simulate_in_memory(&config).unwrap();
        assert_ne!(
            write_newick(a.tree.as_ref().unwrap()),
            write_newick(c.tree.as_ref().unwrap())
        );
    }

    #[test]
    fn sequential_regime_produces_observations() {
        let mut config = RunConfig::default();
        config.states = 2;
        config.regime = RegimeTag::Sequential;
        config.obs_count = 50;
        config.obs_delta = 0.5;
        let data = simulate_in_memory(&config).unwrap();
        let obs = data.observations.unwrap();
        assert_eq!(obs.len(), 50);
        let states = StateSpace::numbered(2).unwrap();
        let text = format_observations(&obs, &states);
        let back = read_observations(&text, &states).unwrap();
        assert_eq!(back, obs);
    }
}
