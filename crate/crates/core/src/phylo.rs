//! Rooted binary phylogenies with branch lengths.
//!
//! Nodes are indexed 0..2N−1 for N tips: tips first (0..N), then internal
//! nodes, with the root last at index 2N−2. Every branch is named by its
//! child node; branch lengths are in evolutionary time units.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Phylogeny {
    n_tips: usize,
    tip_labels: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Option<(usize, usize)>>,
    branch: Vec<f64>,
    postorder: Vec<usize>,
}

impl Phylogeny {
    /// Build a tree from its child structure.
    ///
    /// `children[v]` is `Some((left, right))` for internal nodes and `None`
    /// for tips; `branch[v]` is the length of the branch above node v (the
    /// root entry is ignored). Parent pointers are derived and the binary
    /// rooted shape is validated.
    pub fn new(
        tip_labels: Vec<String>,
        children: Vec<Option<(usize, usize)>>,
        branch: Vec<f64>,
    ) -> Result<Self> {
        let n_tips = tip_labels.len();
        if n_tips == 0 {
            return Err(Error::input("tree must have at least one tip"));
        }
        let n_nodes = 2 * n_tips - 1;
        if children.len() != n_nodes || branch.len() != n_nodes {
            return Err(Error::input(format!(
                "tree arrays must have 2N−1 = {n_nodes} entries"
            )));
        }
        for (a, la) in tip_labels.iter().enumerate() {
            for lb in tip_labels.iter().skip(a + 1) {
                if la == lb {
                    return Err(Error::input(format!("duplicate taxon label '{la}'")));
                }
            }
        }
        for (v, b) in branch.iter().enumerate() {
            if v != n_nodes - 1 && (!b.is_finite() || *b < 0.0) {
                return Err(Error::input(format!(
                    "branch length {b} above node {v} must be finite and nonnegative"
                )));
            }
        }
        let mut parent: Vec<Option<usize>> = vec![None; n_nodes];
        for (v, ch) in children.iter().enumerate() {
            match ch {
                Some((l, r)) => {
                    if v < n_tips {
                        return Err(Error::input(format!("tip {v} cannot have children")));
                    }
                    for &c in [l, r] {
                        if c >= n_nodes {
                            return Err(Error::input(format!("child index {c} out of range")));
                        }
                        if parent[c].is_some() {
                            return Err(Error::input(format!("node {c} has two parents")));
                        }
                        parent[c] = Some(v);
                    }
                }
                None => {
                    if v >= n_tips {
                        return Err(Error::input(format!("internal node {v} has no children")));
                    }
                }
            }
        }
        let root = n_nodes - 1;
        if parent[root].is_some() {
            return Err(Error::input("root node must not have a parent"));
        }
        for (v, p) in parent.iter().enumerate() {
            if v != root && p.is_none() {
                return Err(Error::input(format!("node {v} is disconnected from the root")));
            }
        }

        // Iterative post-order starting at the root; counts double as a
        // connectivity/acyclicity check given the parent validation above.
        let mut postorder = Vec::with_capacity(n_nodes);
        let mut stack = vec![(root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded || children[v].is_none() {
                postorder.push(v);
            } else {
                let (l, r) = children[v].unwrap();
                stack.push((v, true));
                stack.push((r, false));
                stack.push((l, false));
            }
        }
        if postorder.len() != n_nodes {
            return Err(Error::input("tree is not connected"));
        }

        Ok(Phylogeny {
            n_tips,
            tip_labels,
            parent,
            children,
            branch,
            postorder,
        })
    }

    /// Degenerate one-node tree: the root is the single tip.
    pub fn single_tip(label: String) -> Self {
        Phylogeny {
            n_tips: 1,
            tip_labels: vec![label],
            parent: vec![None],
            children: vec![None],
            branch: vec![0.0],
            postorder: vec![0],
        }
    }

    pub fn n_tips(&self) -> usize {
        self.n_tips
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_tips - 1
    }

    pub fn root(&self) -> usize {
        self.n_nodes() - 1
    }

    pub fn is_tip(&self, v: usize) -> bool {
        v < self.n_tips
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> Option<(usize, usize)> {
        self.children[v]
    }

    /// The other child of v's parent.
    pub fn sibling(&self, v: usize) -> Option<usize> {
        let p = self.parent[v]?;
        let (l, r) = self.children[p].unwrap();
        Some(if l == v { r } else { l })
    }

    /// Length of the branch above v (undefined for the root).
    pub fn branch_length(&self, v: usize) -> f64 {
        self.branch[v]
    }

    pub fn tip_labels(&self) -> &[String] {
        &self.tip_labels
    }

    pub fn tip_index(&self, label: &str) -> Result<usize> {
        self.tip_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::input(format!("unknown taxon '{label}'")))
    }

    /// Nodes with children before parents; the root is last.
    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    /// Nodes with parents before children; the root is first.
    pub fn preorder(&self) -> impl Iterator<Item = usize> + '_ {
        self.postorder.iter().rev().copied()
    }

    /// Sum of branch lengths from the root down to node v.
    pub fn depth(&self, v: usize) -> f64 {
        let mut d = 0.0;
        let mut node = v;
        while let Some(p) = self.parent[node] {
            d += self.branch[node];
            node = p;
        }
        d
    }

    /// Maximum root-to-tip path length.
    pub fn height(&self) -> f64 {
        (0..self.n_tips)
            .map(|t| self.depth(t))
            .fold(0.0, f64::max)
    }

    /// Total branch length over all non-root nodes.
    pub fn total_branch_length(&self) -> f64 {
        (0..self.n_nodes())
            .filter(|&v| v != self.root())
            .map(|v| self.branch[v])
            .sum()
    }

    /// Multiply every branch length by a positive factor.
    pub fn scale_branches(&mut self, factor: f64) -> Result<()> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::input(format!("scale factor {factor} must be positive")));
        }
        for b in &mut self.branch {
            *b *= factor;
        }
        Ok(())
    }
}
