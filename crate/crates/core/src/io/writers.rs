//! Sample and gradient-check report writers.
//!
//! All numeric output uses Rust's shortest round-trippable decimal form, so
//! reading a written file reproduces the binary values exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::sampler::SampleRecord;
use crate::state::StateSpace;

pub fn write_text(path: &str, content: &str) -> Result<()> {
    if let Some(dir) = std::path::Path::new(path).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(path, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Format the sample CSV: one row per record with columns
/// iteration, log_posterior, hyperparameters, then θ in pair-index order.
pub fn format_samples(
    samples: &[SampleRecord],
    states: &StateSpace,
    hyper_names: &[String],
) -> String {
    let pairs = crate::state::PairIndex::new(states.size());
    let mut header = String::from("iteration,log_posterior");
    for name in hyper_names {
        header.push_str(&format!(",sigma2_{name},length_{name}"));
    }
    for (i, j) in pairs.iter() {
        header.push_str(&format!(",theta_{}_{}", states.label(i), states.label(j)));
    }
    let mut out = header;
    out.push('\n');
    for rec in samples {
        out.push_str(&format!("{},{}", rec.iteration, rec.log_posterior));
        for h in &rec.hypers {
            out.push_str(&format!(",{},{}", h.marginal_scale, h.length_scale));
        }
        for v in &rec.theta {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Write the sample stream; an empty stream produces a header-only file.
pub fn write_samples(
    path: &str,
    samples: &[SampleRecord],
    states: &StateSpace,
    hyper_names: &[String],
) -> Result<()> {
    write_text(path, &format_samples(samples, states, hyper_names))
}

/// A parsed row of a sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub hypers: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Read back a sample CSV written by [`write_samples`].
pub fn parse_samples(text: &str, n_hyper_cols: usize) -> Result<Vec<SampleRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::input("sample file is empty"))?;
    let n_cols = header.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::input(format!(
                "sample row {} has {} columns, header has {n_cols}",
                idx + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::input(format!("invalid number '{s}' in sample file")))
        };
        let iteration: usize = fields[0]
            .parse()
            .map_err(|_| Error::input(format!("invalid iteration '{}'", fields[0])))?;
        let log_posterior = parse(fields[1])?;
        let hypers = fields[2..2 + n_hyper_cols]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        let theta = fields[2 + n_hyper_cols..]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        rows.push(SampleRow {
            iteration,
            log_posterior,
            hypers,
            theta,
        });
    }
    Ok(rows)
}

/// One coordinate of a gradient-check report.
#[derive(Debug, Clone)]
pub struct GradCheckRow {
    /// "lambda" or "theta".
    pub space: String,
    pub from: String,
    pub to: String,
    pub exact: f64,
    pub series: f64,
    pub approx: f64,
    pub central_diff: f64,
}

/// Aggregate statistics for one (space, method-pair).
#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    pub space: String,
    pub comparison: String,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub summary: Vec<GradCheckSummary>,
}

/// Write the per-coordinate table at `path` and the summary table next to it
/// (suffix `_summary` before the extension).
pub fn write_gradcheck(path: &str, report: &GradCheckReport) -> Result<()> {
    let mut out = String::from("space,from,to,exact,series,approx,central_diff\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.space, r.from, r.to, r.exact, r.series, r.approx, r.central_diff
        ));
    }
    write_text(path, &out)?;

    let summary_path = summary_path_for(path);
    let mut out = String::from("space,comparison,max_abs_diff,max_rel_diff,cosine\n");
    for s in &report.summary {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.space, s.comparison, s.max_abs_diff, s.max_rel_diff, s.cosine
        ));
    }
    write_text(&summary_path, &out)
}

pub fn summary_path_for(path: &str) -> String {
    match path.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_summary.{ext}"),
        None => format!("{path}_summary"),
    }
}
