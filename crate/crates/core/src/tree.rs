//! Constituent trees whose constituents may cover non-adjacent words.
//!
//! A tree is a sentence plus a hierarchy of labeled constituents. Each
//! constituent's yield is the union of its children's yields, and children are
//! kept sorted by the smallest position they cover, so two trees with the same
//! constituents always compare equal regardless of how they were built.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sorted set of 0-based word positions covered by a constituent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Yield(Vec<usize>);

impl Yield {
    /// Builds a yield from arbitrary positions. Duplicates are kept so that
    /// overlapping children remain detectable by [`Tree::validate`].
    pub fn from_positions(mut positions: Vec<usize>) -> Self {
        positions.sort_unstable();
        Yield(positions)
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn contains(&self, position: usize) -> bool {
        self.0.binary_search(&position).is_ok()
    }

    /// True iff the positions form one run `i, i+1, …, j` with no gaps.
    pub fn is_consecutive(&self) -> bool {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => hi - lo + 1 == self.0.len() && !self.has_duplicates(),
            _ => true,
        }
    }

    fn has_duplicates(&self) -> bool {
        self.0.windows(2).any(|w| w[0] == w[1])
    }

    fn first_duplicate(&self) -> Option<usize> {
        self.0.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
    }
}

impl fmt::Display for Yield {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Child {
    Leaf(usize),
    Node(Node),
}

impl Child {
    pub fn positions(&self) -> &[usize] {
        match self {
            Child::Leaf(p) => std::slice::from_ref(p),
            Child::Node(n) => n.span.positions(),
        }
    }

    pub fn min_position(&self) -> Option<usize> {
        self.positions().first().copied()
    }

    pub fn as_node(&self) -> Option<&Node> {
        match self {
            Child::Node(n) => Some(n),
            Child::Leaf(_) => None,
        }
    }
}

/// A labeled constituent `(X, Y)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    label: String,
    children: Vec<Child>,
    span: Yield,
}

impl Node {
    /// Children are reordered by their smallest position; an empty child list
    /// is accepted here and reported by validation.
    pub fn new(label: impl Into<String>, mut children: Vec<Child>) -> Self {
        children.sort_by_key(|c| c.min_position().unwrap_or(usize::MAX));
        let positions = children
            .iter()
            .flat_map(|c| c.positions().iter().copied())
            .collect();
        Node {
            label: label.into(),
            children,
            span: Yield::from_positions(positions),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[Child] {
        &self.children
    }

    pub fn span(&self) -> &Yield {
        &self.span
    }

    pub fn is_continuous(&self) -> bool {
        self.span.is_consecutive()
    }

    /// Pre-order iteration over this node and every constituent below it.
    pub fn descendants(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut todo = vec![self];
        while let Some(node) = todo.pop() {
            out.push(node);
            for child in node.children.iter().rev() {
                if let Child::Node(n) = child {
                    todo.push(n);
                }
            }
        }
        out
    }

    fn leaf_order_into(&self, out: &mut Vec<usize>) {
        for child in &self.children {
            match child {
                Child::Leaf(p) => out.push(*p),
                Child::Node(n) => n.leaf_order_into(out),
            }
        }
    }

    fn relabel(&self, new_position: &[usize]) -> Node {
        let children = self
            .children
            .iter()
            .map(|c| match c {
                Child::Leaf(p) => Child::Leaf(new_position[*p]),
                Child::Node(n) => Child::Node(n.relabel(new_position)),
            })
            .collect();
        Node::new(self.label.clone(), children)
    }

    fn check(&self, n: usize) -> Result<(), Violation> {
        if self.children.is_empty() {
            return Err(Violation::EmptyConstituent {
                label: self.label.clone(),
            });
        }
        if let Some(&p) = self.span.positions().iter().find(|&&p| p >= n) {
            return Err(Violation::PositionOutOfRange {
                label: self.label.clone(),
                position: p,
            });
        }
        if let Some(p) = self.span.first_duplicate() {
            return Err(Violation::OverlappingChildYields {
                label: self.label.clone(),
                position: p,
            });
        }
        if let Some(empty) = self.children.iter().find_map(|c| c.as_node().filter(|n| n.children.is_empty())) {
            return Err(Violation::EmptyConstituent {
                label: empty.label.clone(),
            });
        }
        let ordered = self
            .children
            .windows(2)
            .all(|w| w[0].min_position() < w[1].min_position());
        if !ordered {
            return Err(Violation::UnorderedChildren {
                label: self.label.clone(),
            });
        }
        for child in &self.children {
            if let Child::Node(c) = child {
                c.check(n)?;
            }
        }
        Ok(())
    }
}

/// First broken invariant found by [`Tree::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("empty sentence")]
    EmptySentence,
    #[error("empty constituent {label}")]
    EmptyConstituent { label: String },
    #[error("overlapping child yields in {label} at position {position}")]
    OverlappingChildYields { label: String, position: usize },
    #[error("position {position} in {label} is outside the sentence")]
    PositionOutOfRange { label: String, position: usize },
    #[error("root yield incomplete: missing {missing:?}")]
    RootYieldIncomplete { missing: Vec<usize> },
    #[error("children of {label} are not ordered by first position")]
    UnorderedChildren { label: String },
}

/// A sentence together with its constituent structure.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tree {
    words: Vec<String>,
    root: Node,
}

impl Tree {
    /// Builds and validates a tree.
    pub fn new(words: Vec<String>, root: Node) -> Result<Self, Violation> {
        let tree = Tree { words, root };
        tree.validate()?;
        Ok(tree)
    }

    /// Builds a tree without checking invariants; see [`Tree::validate`].
    pub fn from_parts(words: Vec<String>, root: Node) -> Self {
        Tree { words, root }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_parts(self) -> (Vec<String>, Node) {
        (self.words, self.root)
    }

    /// All constituents in pre-order, root first.
    pub fn constituents(&self) -> Vec<&Node> {
        self.root.descendants()
    }

    pub fn is_continuous(&self) -> bool {
        self.constituents().iter().all(|n| n.is_continuous())
    }

    pub fn discontinuous_constituents(&self) -> Vec<&Node> {
        self.constituents()
            .into_iter()
            .filter(|n| !n.is_continuous())
            .collect()
    }

    /// Leaf positions in depth-first order. Renumbering leaves by this order
    /// makes every constituent continuous.
    pub fn canonical_leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.words.len());
        self.root.leaf_order_into(&mut out);
        out
    }

    /// Renumbers leaves so that the word at `order[i]` moves to position `i`.
    ///
    /// `order` must be a permutation of `0..len()`.
    pub fn reorder(&self, order: &[usize]) -> Tree {
        assert_eq!(order.len(), self.words.len(), "order is not a permutation");
        let mut new_position = vec![usize::MAX; order.len()];
        for (i, &p) in order.iter().enumerate() {
            new_position[p] = i;
        }
        assert!(
            new_position.iter().all(|&p| p != usize::MAX),
            "order is not a permutation"
        );
        let words = order.iter().map(|&p| self.words[p].clone()).collect();
        Tree {
            words,
            root: self.root.relabel(&new_position),
        }
    }

    /// The continuous tree obtained by renumbering leaves in canonical order.
    pub fn to_canonical_continuous(&self) -> Tree {
        self.reorder(&self.canonical_leaf_order())
    }

    pub fn validate(&self) -> Result<(), Violation> {
        let n = self.words.len();
        if n == 0 {
            return Err(Violation::EmptySentence);
        }
        self.root.check(n)?;
        let span = self.root.span.positions();
        if span.len() != n {
            let missing = (0..n).filter(|p| !self.root.span.contains(*p)).collect();
            return Err(Violation::RootYieldIncomplete { missing });
        }
        Ok(())
    }
}
