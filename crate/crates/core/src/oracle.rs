//! Static oracles: turn a gold tree into the transition sequence that builds it.
//!
//! Words are requested in canonical (depth-first) leaf order. How a request is
//! satisfied depends on the scheme's reordering extension:
//!
//! * none: the word must be at the buffer front, one `SHIFT`;
//! * `+swap`: shift everything up to the word, then swap the skipped words
//!   back one `SWAP` at a time (eager swapping);
//! * `+swapk`: as `+swap`, with the swaps merged into one `SWAP#k`;
//! * `+shiftk`: one `SHIFT#k` where k is the word's buffer index.
//!
//! The encoder drives a live [`Configuration`], so every emitted prefix has
//! been checked by the transition system.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::transition::{render_tokens, Base, Configuration, Disco, Item, Scheme, Transition, TransitionError};
use crate::tree::{Child, Node, Tree};
use crate::treebank::Treebank;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("tree is discontinuous but {0} only handles continuous trees")]
    Discontinuous(String),
    #[error("{0} has no enriched variant")]
    NotEnriched(String),
    #[error("tree {index}: {source}")]
    InTreebank {
        index: usize,
        #[source]
        source: Box<EncodeError>,
    },
    #[error("oracle produced an illegal transition: {0}")]
    Internal(#[from] TransitionError),
}

/// A tree encoded as a token sequence under one scheme.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Linearization {
    pub scheme: Scheme,
    pub tokens: Vec<Transition>,
}

impl Linearization {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token strings as they appear in files and vocabularies.
    pub fn token_strings(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.render(self.scheme)).collect()
    }
}

impl fmt::Display for Linearization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_tokens(&self.tokens, self.scheme))
    }
}

struct Encoder {
    scheme: Scheme,
    config: Configuration,
    tokens: Vec<Transition>,
}

impl Encoder {
    fn emit(&mut self, t: Transition) -> Result<(), EncodeError> {
        self.config = self.config.apply(&t, self.scheme)?;
        self.tokens.push(t);
        Ok(())
    }

    fn buffer_index(&self, word: usize) -> usize {
        self.config
            .buffer()
            .iter()
            .position(|i| *i == Item::Word(word))
            .expect("requested word is in the buffer")
    }

    fn fetch(&mut self, word: usize) -> Result<(), EncodeError> {
        let k = self.buffer_index(word);
        match self.scheme.disco {
            Disco::None => {
                debug_assert_eq!(k, 0, "continuous trees consume the buffer in order");
                self.emit(Transition::Shift)
            }
            Disco::ShiftK => self.emit(Transition::shift_k(k)),
            Disco::Swap | Disco::SwapK => {
                for _ in 0..=k {
                    self.emit(Transition::Shift)?;
                }
                if k > 0 && self.scheme.disco == Disco::SwapK {
                    self.emit(Transition::swap_k(k))?;
                } else {
                    for _ in 0..k {
                        self.emit(Transition::Swap)?;
                    }
                }
                Ok(())
            }
        }
    }

    fn child(&mut self, child: &Child) -> Result<(), EncodeError> {
        match child {
            Child::Leaf(p) => self.fetch(*p),
            Child::Node(n) => self.node(n),
        }
    }

    fn reduce(&mut self, node: &Node) -> Result<(), EncodeError> {
        let t = if self.scheme.enriched {
            Transition::ReduceLabeled(node.label().to_string())
        } else {
            Transition::Reduce
        };
        self.emit(t)
    }

    fn node(&mut self, node: &Node) -> Result<(), EncodeError> {
        let label = node.label().to_string();
        match self.scheme.base {
            Base::TopDown => {
                self.emit(Transition::Nt(label))?;
                for c in node.children() {
                    self.child(c)?;
                }
                self.reduce(node)
            }
            Base::InOrder => {
                let (first, rest) = node.children().split_first().expect("non-empty constituent");
                self.child(first)?;
                self.emit(Transition::Nt(label))?;
                for c in rest {
                    self.child(c)?;
                }
                self.reduce(node)
            }
            Base::BottomUp => {
                for c in node.children() {
                    self.child(c)?;
                }
                self.emit(Transition::ReduceK(node.children().len(), label))
            }
        }
    }
}

/// Encodes `tree` under `scheme`. Replaying the result from the initial
/// configuration rebuilds the tree exactly.
pub fn encode(tree: &Tree, scheme: Scheme) -> Result<Linearization, EncodeError> {
    if !scheme.handles_discontinuity() && !tree.is_continuous() {
        return Err(EncodeError::Discontinuous(scheme.to_string()));
    }
    let mut enc = Encoder {
        scheme,
        config: Configuration::initial(tree.len())?,
        tokens: Vec::new(),
    };
    enc.node(tree.root())?;
    if scheme.uses_finish() {
        enc.emit(Transition::Finish)?;
    }
    debug_assert!(enc.config.is_terminal(scheme));
    Ok(Linearization {
        scheme,
        tokens: enc.tokens,
    })
}

/// Encodes with label-carrying reduces; `scheme` may be given in either form.
pub fn encode_enriched(tree: &Tree, scheme: Scheme) -> Result<Linearization, EncodeError> {
    let enriched = Scheme::new(scheme.base, scheme.disco, true)
        .map_err(|_| EncodeError::NotEnriched(scheme.to_string()))?;
    encode(tree, enriched)
}

/// Output vocabulary and longest sequence over a treebank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VocabStats {
    pub scheme: Scheme,
    pub dictionary: BTreeSet<String>,
    pub size: usize,
    pub max_length: usize,
}

pub fn vocab_stats(treebank: &Treebank, scheme: Scheme) -> Result<VocabStats, EncodeError> {
    let mut dictionary = BTreeSet::new();
    let mut max_length = 0;
    for (index, tree) in treebank.iter().enumerate() {
        let lin = encode(tree, scheme).map_err(|e| EncodeError::InTreebank {
            index,
            source: Box::new(e),
        })?;
        max_length = max_length.max(lin.len());
        dictionary.extend(lin.token_strings());
    }
    Ok(VocabStats {
        scheme,
        size: dictionary.len(),
        dictionary,
        max_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{parse_bracketed, parse_discbracket};

    const ALLERDINGS: &str = "(S (VP 0=Allerdings (PP 2=in 3=bestimmten 4=Vierteln) 6=nur 7=stundenweise 8=abgegeben) 1=wird 5=Wasser)";

    fn strings(lin: &Linearization) -> String {
        lin.to_string()
    }

    #[test]
    fn top_down_simple() {
        let t = parse_bracketed("(S (NP John) (VP runs))").unwrap();
        let lin = encode(&t, Scheme::top_down()).unwrap();
        assert_eq!(
            strings(&lin),
            "NT(S) NT(NP) SHIFT REDUCE NT(VP) SHIFT REDUCE REDUCE"
        );
    }

    #[test]
    fn enriched_top_down_simple() {
        let t = parse_bracketed("(S (NP John) (VP runs))").unwrap();
        let lin = encode_enriched(&t, Scheme::top_down()).unwrap();
        assert_eq!(
            strings(&lin),
            "NT(S) NT(NP) SHIFT REDUCE(NP) NT(VP) SHIFT REDUCE(VP) REDUCE(S)"
        );
        assert_eq!(lin.len(), encode(&t, Scheme::top_down()).unwrap().len());
        assert!(encode_enriched(&t, Scheme::bottom_up()).is_err());
    }

    #[test]
    fn in_order_and_bottom_up_simple() {
        let t = parse_bracketed("(S (NP John) (VP runs))").unwrap();
        assert_eq!(
            strings(&encode(&t, Scheme::in_order()).unwrap()),
            "SHIFT NT(NP) REDUCE NT(S) SHIFT NT(VP) REDUCE REDUCE FINISH"
        );
        assert_eq!(
            strings(&encode(&t, Scheme::bottom_up()).unwrap()),
            "SHIFT REDUCE#1(NP) SHIFT REDUCE#1(VP) REDUCE#2(S) FINISH"
        );
    }

    #[test]
    fn swap_prefix() {
        let t = parse_discbracket(ALLERDINGS).unwrap();
        let lin = encode(&t, Scheme::in_order().with_disco(Disco::Swap)).unwrap();
        assert_eq!(
            lin.token_strings()[..13].join(" "),
            "SHIFT NT(VP) SHIFT SHIFT SWAP NT(PP) SHIFT SHIFT SWAP SHIFT SHIFT SWAP REDUCE"
        );
    }

    #[test]
    fn shiftk_prefix() {
        let t = parse_discbracket(ALLERDINGS).unwrap();
        let lin = encode(&t, Scheme::in_order().with_disco(Disco::ShiftK)).unwrap();
        assert_eq!(
            lin.token_strings()[..7].join(" "),
            "SHIFT#0 NT(VP) SHIFT#1 NT(PP) SHIFT#1 SHIFT#1 REDUCE"
        );
    }

    #[test]
    fn swap_k_merges_swaps() {
        let t = parse_discbracket(ALLERDINGS).unwrap();
        let lin = encode(&t, Scheme::in_order().with_disco(Disco::SwapK)).unwrap();
        // reaching nur_6 skips wird_1 and Wasser_5
        assert!(lin.token_strings().contains(&"SWAP#2".to_string()));
    }

    #[test]
    fn continuous_only_scheme_rejects_crossing_tree() {
        let t = parse_discbracket(ALLERDINGS).unwrap();
        assert!(matches!(
            encode(&t, Scheme::in_order()),
            Err(EncodeError::Discontinuous(_))
        ));
    }

    #[test]
    fn one_tree_stats() {
        let tb = Treebank::new(vec![parse_discbracket("(S 0=a 1=b)").unwrap()], "test");
        let stats = vocab_stats(&tb, Scheme::in_order()).unwrap();
        let dict: Vec<&str> = stats.dictionary.iter().map(String::as_str).collect();
        assert_eq!(dict, vec!["FINISH", "NT(S)", "REDUCE", "SHIFT"]);
        assert_eq!(stats.size, 4);
        // SHIFT NT(S) SHIFT REDUCE FINISH
        assert_eq!(stats.max_length, 5);
    }

    #[test]
    fn stats_report_failing_tree_index() {
        let tb = Treebank::new(
            vec![
                parse_discbracket("(S 0=a 1=b)").unwrap(),
                parse_discbracket(ALLERDINGS).unwrap(),
            ],
            "test",
        );
        let err = vocab_stats(&tb, Scheme::top_down()).unwrap_err();
        assert!(matches!(err, EncodeError::InTreebank { index: 1, .. }));
    }
}
