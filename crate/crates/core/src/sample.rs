//! Random trees for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::tree::{Child, Node, Tree};

const LABELS: &[&str] = &["S", "NP", "VP", "PP", "AP", "X"];

#[derive(Clone, Debug)]
pub struct SampleConfig {
    pub max_leaves: usize,
    /// Largest number of children per constituent.
    pub max_branching: usize,
    /// Probability that leaf positions are shuffled after the structure is built.
    pub discontinuity: f64,
    /// Probability that a single-leaf subtree gets a unary constituent.
    pub unary: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            max_leaves: 12,
            max_branching: 4,
            discontinuity: 0.5,
            unary: 0.3,
        }
    }
}

fn label<R: Rng>(rng: &mut R) -> String {
    LABELS[rng.gen_range(0..LABELS.len())].to_string()
}

/// Splits `slots` into at least two contiguous groups (fewer only if there is
/// a single slot).
fn split<R: Rng>(rng: &mut R, slots: &[usize], max_branching: usize) -> Vec<Vec<usize>> {
    let parts = rng.gen_range(2..=max_branching.max(2)).min(slots.len());
    let mut cuts: Vec<usize> = (1..slots.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(slots.len())) {
        out.push(slots[start..c].to_vec());
        start = c;
    }
    out
}

fn child<R: Rng>(rng: &mut R, slots: &[usize], cfg: &SampleConfig) -> Child {
    if slots.len() == 1 {
        if rng.gen_bool(cfg.unary) {
            return Child::Node(Node::new(label(rng), vec![Child::Leaf(slots[0])]));
        }
        return Child::Leaf(slots[0]);
    }
    Child::Node(node(rng, slots, cfg))
}

fn node<R: Rng>(rng: &mut R, slots: &[usize], cfg: &SampleConfig) -> Node {
    let children = if slots.len() == 1 {
        vec![Child::Leaf(slots[0])]
    } else {
        split(rng, slots, cfg.max_branching)
            .iter()
            .map(|g| child(rng, g, cfg))
            .collect()
    };
    Node::new(label(rng), children)
}

/// Draws a valid tree with 1 to `max_leaves` words.
pub fn random_tree<R: Rng>(rng: &mut R, cfg: &SampleConfig) -> Tree {
    let n = rng.gen_range(1..=cfg.max_leaves.max(1));
    random_tree_of_len(rng, n, cfg)
}

/// Draws a valid tree over exactly `n` words (`n` ≥ 1).
pub fn random_tree_of_len<R: Rng>(rng: &mut R, n: usize, cfg: &SampleConfig) -> Tree {
    assert!(n > 0, "trees need at least one word");
    let mut positions: Vec<usize> = (0..n).collect();
    if rng.gen_bool(cfg.discontinuity) {
        positions.shuffle(rng);
    }
    let root = node(rng, &positions, cfg);
    let words = (0..n).map(|i| format!("w{i}")).collect();
    Tree::new(words, root).expect("sampled trees are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_valid_and_varied() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SampleConfig::default();
        let trees: Vec<Tree> = (0..200).map(|_| random_tree(&mut rng, &cfg)).collect();
        assert!(trees.iter().all(|t| t.validate().is_ok() && t.len() <= 12));
        assert!(trees.iter().any(|t| !t.is_continuous()));
        assert!(trees.iter().any(|t| t.is_continuous() && t.len() > 3));
    }
}
