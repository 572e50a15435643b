//! Newick tree parsing and serialization.
//!
//! Accepts rooted binary trees with branch lengths on every non-root node,
//! e.g. `((A:1.0,B:1.0):0.5,C:2.0);`. Internal node labels are permitted and
//! ignored; polytomies, unbalanced parentheses, and missing lengths are
//! reported with the byte offset where parsing failed.

use crate::error::{Error, Result};
use crate::phylo::Phylogeny;

/// A parsed Newick file: raw text plus the tree it encodes.
#[derive(Debug, Clone)]
pub struct NewickDocument {
    pub raw: String,
    pub tree: Phylogeny,
}

impl NewickDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(NewickDocument {
            raw: text.to_string(),
            tree: parse_newick(text)?,
        })
    }

    /// Tip index of a taxon name.
    pub fn tip_index(&self, taxon: &str) -> Result<usize> {
        self.tree.tip_index(taxon)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

enum Node {
    Leaf { name: String, length: f64 },
    Internal { children: Vec<Node>, length: Option<f64> },
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::input(format!("newick parse error at byte {}: {msg}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn name(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b"(),:;".contains(&b) || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos]).to_string()
    }

    fn length(&mut self) -> Result<Option<f64>> {
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() {
                let b = self.bytes[self.pos];
                if b"(),:;".contains(&b) || b.is_ascii_whitespace() {
                    break;
                }
                self.pos += 1;
            }
            let raw = std::str::from_utf8(&self.bytes[start..self.pos])
                .map_err(|_| self.err("invalid UTF-8 in branch length"))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| self.err(&format!("invalid branch length '{raw}'")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(self.err(&format!("branch length {v} must be finite and nonnegative")));
            }
            Ok(Some(v))
        } else {
            Ok(None)
        }
    }

    fn subtree(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let mut children = vec![self.subtree()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    children.push(self.subtree()?);
                }
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')' or ','"));
                }
                self.pos += 1;
                if children.len() != 2 {
                    return Err(self.err(&format!(
                        "internal node has {} children; only binary trees are supported",
                        children.len()
                    )));
                }
                // optional internal label, ignored
                let _ = self.name();
                let length = self.length()?;
                Ok(Node::Internal { children, length })
            }
            Some(_) => {
                let name = self.name();
                if name.is_empty() {
                    return Err(self.err("expected a taxon name"));
                }
                let length = self
                    .length()?
                    .ok_or_else(|| self.err(&format!("taxon '{name}' is missing a branch length")))?;
                Ok(Node::Leaf { name, length })
            }
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Parse a rooted binary Newick tree.
pub fn parse_newick(text: &str) -> Result<Phylogeny> {
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let root = match parser.peek() {
        Some(b'(') => parser.subtree()?,
        _ => return Err(parser.err("tree must start with '('")),
    };
    if parser.peek() != Some(b';') {
        return Err(parser.err("expected ';' after the tree"));
    }
    parser.pos += 1;
    if parser.peek().is_some() {
        return Err(parser.err("trailing content after ';'"));
    }

    // count tips, then assign indices: tips in order of appearance,
    // internals in post-order so the root lands at 2N−2
    fn count_tips(node: &Node) -> usize {
        match node {
            Node::Leaf { .. } => 1,
            Node::Internal { children, .. } => children.iter().map(count_tips).sum(),
        }
    }
    let n_tips = count_tips(&root);
    let n_nodes = 2 * n_tips - 1;
    let mut tip_labels: Vec<String> = Vec::with_capacity(n_tips);
    let mut children_arr: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
    let mut branch = vec![0.0; n_nodes];
    let mut next_internal = n_tips;

    fn assign(
        node: &Node,
        tip_labels: &mut Vec<String>,
        children_arr: &mut [Option<(usize, usize)>],
        branch: &mut [f64],
        next_internal: &mut usize,
    ) -> usize {
        match node {
            Node::Leaf { name, length } => {
                let idx = tip_labels.len();
                tip_labels.push(name.clone());
                branch[idx] = *length;
                idx
            }
            Node::Internal { children, length } => {
                let l = assign(&children[0], tip_labels, children_arr, branch, next_internal);
                let r = assign(&children[1], tip_labels, children_arr, branch, next_internal);
                let idx = *next_internal;
                *next_internal += 1;
                children_arr[idx] = Some((l, r));
                branch[idx] = length.unwrap_or(0.0);
                idx
            }
        }
    }
    let root_idx = assign(
        &root,
        &mut tip_labels,
        &mut children_arr,
        &mut branch,
        &mut next_internal,
    );
    // non-root internal nodes need explicit lengths; the root's is optional
    fn check_lengths(node: &Node, is_root: bool, pos_hint: usize) -> Result<()> {
        if let Node::Internal { children, length } = node {
            if !is_root && length.is_none() {
                return Err(Error::input(format!(
                    "newick parse error at byte {pos_hint}: non-root internal node is missing a branch length"
                )));
            }
            for c in children {
                check_lengths(c, false, pos_hint)?;
            }
        }
        Ok(())
    }
    check_lengths(&root, true, text.len())?;
    debug_assert_eq!(root_idx, n_nodes - 1);
    Phylogeny::new(tip_labels, children_arr, branch)
}

/// Serialize a tree back to Newick with full-precision branch lengths.
pub fn write_newick(tree: &Phylogeny) -> String {
    fn node(tree: &Phylogeny, v: usize, out: &mut String) {
        match tree.children(v) {
            None => {
                out.push_str(&tree.tip_labels()[v]);
            }
            Some((l, r)) => {
                out.push('(');
                node(tree, l, out);
                out.push_str(&format!(":{}", tree.branch_length(l)));
                out.push(',');
                node(tree, r, out);
                out.push_str(&format!(":{}", tree.branch_length(r)));
                out.push(')');
            }
        }
    }
    let mut out = String::new();
    node(tree, tree.root(), &mut out);
    out.push(';');
    out
}
