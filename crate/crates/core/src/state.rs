//! Discrete state spaces and the canonical ordering of off-diagonal pairs.
//!
//! Rate parameters, covariates, and gradients are all vectors over the
//! ordered state pairs (i, j), i ≠ j. [`PairIndex`] fixes one enumeration —
//! row-major with the diagonal skipped — so every module agrees on which
//! vector slot belongs to which pair.

use crate::error::{Error, Result};

/// A finite set of S ≥ 2 labelled states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    /// Build a state space from distinct labels.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::input(format!(
                "state space needs at least 2 states, got {}",
                labels.len()
            )));
        }
        for (a, la) in labels.iter().enumerate() {
            if la.is_empty() || la.chars().any(|c| c.is_whitespace() || ",():;".contains(c)) {
                return Err(Error::input(format!(
                    "state label '{la}' is empty or contains a delimiter character"
                )));
            }
            for lb in labels.iter().skip(a + 1) {
                if la == lb {
                    return Err(Error::input(format!("duplicate state label '{la}'")));
                }
            }
        }
        Ok(StateSpace { labels })
    }

    /// State space with labels "1", "2", ..., "S".
    pub fn numbered(size: usize) -> Result<Self> {
        StateSpace::new((1..=size).map(|i| i.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }

    /// Resolve a label to its state index.
    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::input(format!("unknown state label '{label}'")))
    }

    /// Number of ordered off-diagonal pairs, S² − S.
    pub fn pair_count(&self) -> usize {
        let s = self.size();
        s * s - s
    }
}

/// Row-major enumeration of ordered off-diagonal pairs of an S-state space.
///
/// For S = 3 the order is (0,1), (0,2), (1,0), (1,2), (2,0), (2,1).
/// The map between pairs and linear indices 0..S²−S is a bijection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    size: usize,
}

impl PairIndex {
    pub fn new(size: usize) -> Self {
        debug_assert!(size >= 2);
        PairIndex { size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of ordered off-diagonal pairs.
    pub fn len(&self) -> usize {
        self.size * self.size - self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear index of the pair (i, j), i ≠ j.
    pub fn linear(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j && i < self.size && j < self.size);
        i * (self.size - 1) + if j < i { j } else { j - 1 }
    }

    /// Pair at a linear index.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.len());
        let i = k / (self.size - 1);
        let r = k % (self.size - 1);
        let j = if r < i { r } else { r + 1 };
        (i, j)
    }

    /// Iterate pairs in linear order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(|k| self.pair(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_and_duplicate_spaces() {
        assert!(StateSpace::new(vec!["a".into()]).is_err());
        assert!(StateSpace::new(vec!["a".into(), "a".into()]).is_err());
        assert!(StateSpace::new(vec!["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn pair_order_is_row_major_without_diagonal() {
        let idx = PairIndex::new(3);
        let pairs: Vec<_> = idx.iter().collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
    }

    #[test]
    fn pair_index_round_trips() {
        for s in 2..=7 {
            let idx = PairIndex::new(s);
            assert_eq!(idx.len(), s * s - s);
            for k in 0..idx.len() {
                let (i, j) = idx.pair(k);
                assert_ne!(i, j);
                assert_eq!(idx.linear(i, j), k);
            }
        }
    }

    #[test]
    fn label_lookup() {
        let sp = StateSpace::numbered(4).unwrap();
        assert_eq!(sp.size(), 4);
        assert_eq!(sp.pair_count(), 12);
        assert_eq!(sp.index_of("3").unwrap(), 2);
        assert!(sp.index_of("5").is_err());
    }
}
