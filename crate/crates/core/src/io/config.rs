//! Flat key=value run configuration.
//!
//! Values come from three layers with increasing precedence: built-in
//! defaults, a config file, and command-line flag overrides. Lines are
//! `key = value`; `#` starts a comment.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gp::KernelKind;
use crate::gradients::GradientMethod;

/// Which likelihood regime the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    Tree,
    Sequential,
    Prior,
}

/// Prior family for inference: GP over log-rates or log-linear coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Gp,
    LogLinear,
}

/// Truth function used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthTag {
    /// θ_ij = c0 + c1·x_ij + c2·x_ij².
    Quadratic,
    /// θ_ij = log(x_ij + max|x| + 1) with x the negative L1 index distance.
    LogL1,
    /// θ read from `truth_csv`.
    CustomCsv,
}

/// Covariate source for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateTag {
    /// x_ij = −|i−j| over state indices.
    L1,
    /// x_ij = −|i−j|/(S−1).
    L1Norm,
    /// Covariates read from the configured files.
    File,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    // paths
    pub tree: Option<String>,
    pub tips: Option<String>,
    pub covariates: Vec<String>,
    pub truth_csv: Option<String>,
    pub out: String,

    // model
    pub regime: RegimeTag,
    pub states: usize,
    pub labels: Option<Vec<String>>,
    pub pi: Option<Vec<f64>>,
    pub root_dist: Option<Vec<f64>>,
    pub kernel: KernelKind,
    pub scale_rate: f64,
    pub length_rate: f64,
    pub length_floor: Option<f64>,
    pub model: ModelTag,
    pub grad_method: GradientMethod,
    /// Standard deviation of the normal prior on log-linear coefficients.
    pub loglinear_coef_sd: f64,

    // sampler
    pub step_size: f64,
    pub leapfrog: usize,
    pub target_accept: f64,
    pub warmup: usize,
    pub iterations: usize,
    pub thin: usize,
    pub hyper_every: usize,
    pub hyper_scale: f64,
    pub adapt_mass: bool,
    pub seed: u64,

    // simulate
    pub truth: TruthTag,
    pub quad_c0: f64,
    pub quad_c1: f64,
    pub quad_c2: f64,
    pub covariate_gen: CovariateTag,
    pub tree_tips: usize,
    pub tree_height: f64,
    pub obs_count: usize,
    pub obs_delta: f64,

    // bench
    pub bench_states: Vec<usize>,
    pub bench_methods: Vec<GradientMethod>,
    pub bench_reps: usize,
    pub bench_tips: usize,
    /// Largest S the exact and central-difference benches will run.
    pub exact_cap: usize,

    // grad-check
    pub gradcheck_max_states: usize,
    pub series_k: usize,

    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tree: None,
            tips: None,
            covariates: Vec::new(),
            truth_csv: None,
            out: "out".into(),
            regime: RegimeTag::Tree,
            states: 2,
            labels: None,
            pi: None,
            root_dist: None,
            kernel: KernelKind::SquaredExponential,
            scale_rate: 1.0,
            length_rate: 1.0,
            length_floor: None,
            model: ModelTag::Gp,
            grad_method: GradientMethod::Approx,
            loglinear_coef_sd: 2.0,
            step_size: 0.1,
            leapfrog: 50,
            target_accept: 0.65,
            warmup: 1000,
            iterations: 2000,
            thin: 1,
            hyper_every: 10,
            hyper_scale: 0.4,
            adapt_mass: false,
            seed: 0,
            truth: TruthTag::Quadratic,
            quad_c0: 1.5,
            quad_c1: 2.0,
            quad_c2: 2.0,
            covariate_gen: CovariateTag::L1Norm,
            tree_tips: 100,
            tree_height: 5.0,
            obs_count: 200,
            obs_delta: 0.5,
            bench_states: vec![4, 8, 16, 32, 64],
            bench_methods: vec![GradientMethod::Approx, GradientMethod::Exact],
            bench_reps: 7,
            bench_tips: 50,
            exact_cap: 16,
            gradcheck_max_states: 16,
            series_k: 30,
            threads: 1,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::input(format!("expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::input(format!("invalid value '{v}' for key '{key}'")))
}

fn parse_float_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Error::input(format!("invalid number '{f}'")))
        })
        .collect()
}

pub fn parse_grad_method(v: &str) -> Result<GradientMethod> {
    if let Some(k) = v.strip_prefix("series:") {
        return Ok(GradientMethod::Series(parse_num("series order", k)?));
    }
    match v {
        "approx" => Ok(GradientMethod::Approx),
        "exact" => Ok(GradientMethod::Exact),
        "central-diff" => Ok(GradientMethod::CentralDiff),
        _ => Err(Error::input(format!(
            "unknown gradient method '{v}' (approx | exact | series:K | central-diff)"
        ))),
    }
}

pub fn grad_method_name(m: GradientMethod) -> String {
    match m {
        GradientMethod::Approx => "approx".into(),
        GradientMethod::Exact => "exact".into(),
        GradientMethod::Series(k) => format!("series:{k}"),
        GradientMethod::CentralDiff => "central-diff".into(),
    }
}

impl RunConfig {
    /// Apply one key=value pair; flags and file lines share this path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "tree" => self.tree = Some(v.into()),
            "tips" => self.tips = Some(v.into()),
            "covariates" => {
                self.covariates = v.split(',').map(|s| s.trim().to_string()).collect()
            }
            "truth_csv" => self.truth_csv = Some(v.into()),
            "out" => self.out = v.into(),
            "regime" => {
                self.regime = match v {
                    "tree" => RegimeTag::Tree,
                    "sequential" => RegimeTag::Sequential,
                    "prior" => RegimeTag::Prior,
                    _ => return Err(Error::input(format!("unknown regime '{v}'"))),
                }
            }
            "states" => self.states = parse_num(key, v)?,
            "labels" => {
                self.labels = Some(v.split(',').map(|s| s.trim().to_string()).collect())
            }
            "pi" => self.pi = Some(parse_float_list(v)?),
            "root_dist" => self.root_dist = Some(parse_float_list(v)?),
            "link" => {
                if v != "exp" {
                    return Err(Error::input(format!("unsupported link function '{v}'")));
                }
            }
            "kernel" => {
                self.kernel = match v {
                    "se" => KernelKind::SquaredExponential,
                    "matern32" => KernelKind::Matern32,
                    _ => return Err(Error::input(format!("unknown kernel '{v}'"))),
                }
            }
            "scale_rate" => self.scale_rate = parse_num(key, v)?,
            "length_rate" => self.length_rate = parse_num(key, v)?,
            "length_floor" => {
                self.length_floor = if v == "none" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "model" => {
                self.model = match v {
                    "gp" => ModelTag::Gp,
                    "loglinear" => ModelTag::LogLinear,
                    _ => return Err(Error::input(format!("unknown model '{v}'"))),
                }
            }
            "grad_method" | "method" => self.grad_method = parse_grad_method(v)?,
            "loglinear_coef_sd" => self.loglinear_coef_sd = parse_num(key, v)?,
            "step_size" => self.step_size = parse_num(key, v)?,
            "leapfrog" => self.leapfrog = parse_num(key, v)?,
            "target_accept" => self.target_accept = parse_num(key, v)?,
            "warmup" => self.warmup = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "thin" => self.thin = parse_num(key, v)?,
            "hyper_every" => self.hyper_every = parse_num(key, v)?,
            "hyper_scale" => self.hyper_scale = parse_num(key, v)?,
            "adapt_mass" => self.adapt_mass = parse_bool(v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "truth" => {
                self.truth = match v {
                    "quadratic" => TruthTag::Quadratic,
                    "log-l1" => TruthTag::LogL1,
                    "custom-csv" => TruthTag::CustomCsv,
                    _ => return Err(Error::input(format!("unknown truth function '{v}'"))),
                }
            }
            "quad_c0" => self.quad_c0 = parse_num(key, v)?,
            "quad_c1" => self.quad_c1 = parse_num(key, v)?,
            "quad_c2" => self.quad_c2 = parse_num(key, v)?,
            "covariate_gen" => {
                self.covariate_gen = match v {
                    "l1" => CovariateTag::L1,
                    "l1norm" => CovariateTag::L1Norm,
                    "file" => CovariateTag::File,
                    _ => return Err(Error::input(format!("unknown covariate source '{v}'"))),
                }
            }
            "tree_tips" => self.tree_tips = parse_num(key, v)?,
            "tree_height" => self.tree_height = parse_num(key, v)?,
            "obs_count" => self.obs_count = parse_num(key, v)?,
            "obs_delta" => self.obs_delta = parse_num(key, v)?,
            "bench_states" => {
                self.bench_states = v
                    .split(',')
                    .map(|s| parse_num("bench_states", s.trim()))
                    .collect::<Result<_>>()?
            }
            "bench_methods" => {
                self.bench_methods = v
                    .split(',')
                    .map(|s| parse_grad_method(s.trim()))
                    .collect::<Result<_>>()?
            }
            "bench_reps" => self.bench_reps = parse_num(key, v)?,
            "bench_tips" => self.bench_tips = parse_num(key, v)?,
            "exact_cap" => self.exact_cap = parse_num(key, v)?,
            "gradcheck_max_states" => self.gradcheck_max_states = parse_num(key, v)?,
            "series_k" => self.series_k = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            _ => return Err(Error::input(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a config file over the defaults.
    pub fn from_file(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::input(format!("config line {} is not 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// State labels: explicit or numbered 1..S.
    pub fn state_labels(&self) -> Vec<String> {
        match &self.labels {
            Some(l) => l.clone(),
            None => (1..=self.states).map(|i| i.to_string()).collect(),
        }
    }

    /// Check that every referenced file exists and dimensions are coherent.
    pub fn validate(&self) -> Result<()> {
        for path in self
            .tree
            .iter()
            .chain(self.tips.iter())
            .chain(self.covariates.iter())
            .chain(self.truth_csv.iter())
        {
            if !Path::new(path).exists() {
                return Err(Error::input(format!("referenced file '{path}' does not exist")));
            }
        }
        if self.states < 2 {
            return Err(Error::input("states must be at least 2"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.states {
                return Err(Error::input(format!(
                    "{} labels given for {} states",
                    labels.len(),
                    self.states
                )));
            }
        }
        if let Some(pi) = &self.pi {
            if pi.len() != self.states {
                return Err(Error::input("pi length does not match states"));
            }
        }
        if let Some(r) = &self.root_dist {
            if r.len() != self.states {
                return Err(Error::input("root_dist length does not match states"));
            }
        }
        Ok(())
    }
}
