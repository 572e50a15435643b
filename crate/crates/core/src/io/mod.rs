//! Parsers and writers: Newick phylogenies, tip-state and covariate tables,
//! flat run configuration, and sample/report CSV emission.

pub mod config;
pub mod newick;
pub mod tables;
pub mod writers;

pub use config::{CovariateTag, ModelTag, RegimeTag, RunConfig, TruthTag};
pub use newick::{parse_newick, write_newick, NewickDocument};
pub use tables::{format_covariate, format_pair_values, format_tip_states, read_covariate, read_covariates, read_tip_states};
pub use writers::{parse_samples, write_gradcheck, write_samples, write_text, GradCheckReport, GradCheckRow, GradCheckSummary};
