//! Tip-state and pairwise-covariate tables.
//!
//! Both formats are plain CSV with a fixed header. Taxon and state labels
//! are matched case-sensitively; every problem is reported with the label or
//! pair involved, and nothing partially parsed ever escapes.

use crate::error::{Error, Result};
use crate::gp::CovariateSet;
use crate::likelihood::TipData;
use crate::phylo::Phylogeny;
use crate::state::{PairIndex, StateSpace};

fn split_line(line: &str, expected: usize, lineno: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
    if fields.len() != expected {
        return Err(Error::input(format!(
            "line {lineno}: expected {expected} fields, found {}",
            fields.len()
        )));
    }
    Ok(fields)
}

/// Parse a `taxon,state` table into tip data aligned with the tree.
///
/// Every tip of the tree must appear exactly once and every state label must
/// belong to the state space.
pub fn read_tip_states(text: &str, tree: &Phylogeny, states: &StateSpace) -> Result<TipData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::input("tip table is empty"))?;
    if header.trim() != "taxon,state" {
        return Err(Error::input(format!(
            "tip table header must be 'taxon,state', found '{}'",
            header.trim()
        )));
    }
    let mut seen = vec![false; tree.n_tips()];
    let mut data = vec![0usize; tree.n_tips()];
    for (idx, line) in lines {
        let fields = split_line(line, 2, idx + 1)?;
        let tip = tree.tip_index(fields[0])?;
        if seen[tip] {
            return Err(Error::input(format!("duplicate row for taxon '{}'", fields[0])));
        }
        seen[tip] = true;
        data[tip] = states.index_of(fields[1])?;
    }
    for (tip, ok) in seen.iter().enumerate() {
        if !ok {
            return Err(Error::input(format!(
                "taxon '{}' has no observed state",
                tree.tip_labels()[tip]
            )));
        }
    }
    Ok(TipData::new(data))
}

/// Serialize tip states as a `taxon,state` table.
pub fn format_tip_states(tree: &Phylogeny, tips: &TipData, states: &StateSpace) -> String {
    let mut out = String::from("taxon,state\n");
    for (tip, &s) in tips.states.iter().enumerate() {
        out.push_str(&format!("{},{}\n", tree.tip_labels()[tip], states.label(s)));
    }
    out
}

/// Parse a `from,to,value` table into one covariate over the ordered
/// off-diagonal pairs. Every pair must appear exactly once.
pub fn read_covariate(text: &str, name: &str, states: &StateSpace) -> Result<Vec<f64>> {
    let pairs = PairIndex::new(states.size());
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::input(format!("covariate table '{name}' is empty")))?;
    if header.trim() != "from,to,value" {
        return Err(Error::input(format!(
            "covariate table header must be 'from,to,value', found '{}'",
            header.trim()
        )));
    }
    let mut values = vec![f64::NAN; pairs.len()];
    let mut seen = vec![false; pairs.len()];
    for (idx, line) in lines {
        let fields = split_line(line, 3, idx + 1)?;
        let from = states.index_of(fields[0])?;
        let to = states.index_of(fields[1])?;
        if from == to {
            return Err(Error::input(format!(
                "covariate '{name}' has a diagonal pair {}→{}",
                fields[0], fields[1]
            )));
        }
        let k = pairs.linear(from, to);
        if seen[k] {
            return Err(Error::input(format!(
                "covariate '{name}' repeats pair {}→{}",
                fields[0], fields[1]
            )));
        }
        seen[k] = true;
        values[k] = fields[2]
            .parse()
            .map_err(|_| Error::input(format!("invalid value '{}' on line {}", fields[2], idx + 1)))?;
        if !values[k].is_finite() {
            return Err(Error::input(format!(
                "covariate '{name}' value for pair {}→{} is not finite",
                fields[0], fields[1]
            )));
        }
    }
    for (k, ok) in seen.iter().enumerate() {
        if !ok {
            let (i, j) = pairs.pair(k);
            return Err(Error::input(format!(
                "covariate '{name}' is missing pair {}→{}",
                states.label(i),
                states.label(j)
            )));
        }
    }
    Ok(values)
}

/// Read several covariate tables into one set.
pub fn read_covariates(
    texts: &[(String, String)],
    states: &StateSpace,
) -> Result<CovariateSet> {
    let mut names = Vec::with_capacity(texts.len());
    let mut values = Vec::with_capacity(texts.len());
    for (name, text) in texts {
        values.push(read_covariate(text, name, states)?);
        names.push(name.clone());
    }
    CovariateSet::new(names, values)
}

/// Serialize one covariate as a `from,to,value` table.
pub fn format_covariate(values: &[f64], states: &StateSpace) -> String {
    let pairs = PairIndex::new(states.size());
    let mut out = String::from("from,to,value\n");
    for (k, (i, j)) in pairs.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", states.label(i), states.label(j), values[k]));
    }
    out
}

/// Serialize per-pair values (log-rates, rates) as `from,to,value`.
pub fn format_pair_values(values: &[f64], states: &StateSpace) -> String {
    format_covariate(values, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::newick::parse_newick;

    fn two_state() -> StateSpace {
        StateSpace::numbered(2).unwrap()
    }

    #[test]
    fn covariate_round_trip() {
        let states = two_state();
        let text = "from,to,value\n1,2,0.0\n2,1,0.0\n";
        let v = read_covariate(text, "x", &states).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let reread = read_covariate(&format_covariate(&v, &states), "x", &states).unwrap();
        assert_eq!(reread, v);
        // full-precision values survive the trip exactly
        let vals = [0.1234567890123456789, -3.0000000000000004];
        let reread = read_covariate(&format_covariate(&vals, &states), "x", &states).unwrap();
        assert_eq!(reread, vals.to_vec());
    }

    #[test]
    fn missing_pair_is_named() {
        let states = two_state();
        let err = read_covariate("from,to,value\n1,2,0.5\n", "x", &states).unwrap_err();
        assert!(err.to_string().contains("missing pair 2→1"), "{err}");
    }

    #[test]
    fn duplicates_diagonals_and_unknown_labels_are_rejected() {
        let states = two_state();
        assert!(read_covariate("from,to,value\n1,2,0.5\n1,2,0.5\n2,1,0.0\n", "x", &states).is_err());
        assert!(read_covariate("from,to,value\n1,1,0.5\n", "x", &states).is_err());
        assert!(read_covariate("from,to,value\n1,3,0.5\n", "x", &states).is_err());
    }

    #[test]
    fn symmetric_distances_stay_ordered() {
        let states = two_state();
        let text = "from,to,value\n1,2,3.5\n2,1,3.5\n";
        let v = read_covariate(text, "d", &states).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn tip_table_round_trip_and_errors() {
        let tree = parse_newick("(A:1.0,B:2.0);").unwrap();
        let states = two_state();
        let tips = read_tip_states("taxon,state\nA,1\nB,2\n", &tree, &states).unwrap();
        assert_eq!(tips.states, vec![0, 1]);
        assert_eq!(
            format_tip_states(&tree, &tips, &states),
            "taxon,state\nA,1\nB,2\n"
        );
        // unknown taxon, unknown state, duplicate, missing
        assert!(read_tip_states("taxon,state\nZ,1\nB,2\n", &tree, &states).is_err());
        assert!(read_tip_states("taxon,state\nA,9\nB,2\n", &tree, &states).is_err());
        assert!(read_tip_states("taxon,state\nA,1\nA,2\n", &tree, &states).is_err());
        assert!(read_tip_states("taxon,state\nA,1\n", &tree, &states).is_err());
    }

    #[test]
    fn taxon_matching_is_case_sensitive() {
        let tree = parse_newick("(A:1.0,B:2.0);").unwrap();
        let states = two_state();
        assert!(read_tip_states("taxon,state\na,1\nB,2\n", &tree, &states).is_err());
    }
}
