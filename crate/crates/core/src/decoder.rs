//! Delinearization: replay a (possibly ill-formed) token sequence into a tree.
//!
//! Decoding never fails on a non-empty sentence. Tokens the transition system
//! rejects are repaired by a fixed set of rules and every repair is logged:
//!
//! | rule | trigger | action |
//! |------|---------|--------|
//! | R1 | illegal token | skip it |
//! | R2 | tokens exhausted, buffer non-empty | move the buffer onto the stack |
//! | R3 | several items or open non-terminals left | wrap items in a fallback constituent, drop markers |
//! | R4 | `SHIFT#k` past the buffer end | shift the last buffer item |
//! | R5 | `REDUCE#k` over more items than available | reduce what is available |
//! | R6 | single constituent left without `FINISH` | finish implicitly |

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::transition::{Configuration, Item, Scheme, Transition};
use crate::tree::{Child, Node, Tree};
use crate::treebank::Treebank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RepairRule {
    R1SkipIllegal,
    R2ImplicitShift,
    R3WrapRemaining,
    R4ClampShift,
    R5ClampReduce,
    R6ImplicitFinish,
}

impl fmt::Display for RepairRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairRule::R1SkipIllegal => "R1",
            RepairRule::R2ImplicitShift => "R2",
            RepairRule::R3WrapRemaining => "R3",
            RepairRule::R4ClampShift => "R4",
            RepairRule::R5ClampReduce => "R5",
            RepairRule::R6ImplicitFinish => "R6",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Repair {
    pub rule: RepairRule,
    /// Index of the offending token; `None` for end-of-input repairs.
    pub token_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub tree: Tree,
    pub repairs: Vec<Repair>,
}

impl Decoded {
    pub fn rules(&self) -> Vec<RepairRule> {
        self.repairs.iter().map(|r| r.rule).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("cannot decode an empty sentence")]
    EmptySentence,
    #[error("{sentences} sentences but {sequences} token sequences")]
    LengthMismatch { sentences: usize, sequences: usize },
}

#[derive(Clone, Debug)]
pub struct DecodeOptions {
    /// Label for the constituent created by R3.
    pub fallback_label: String,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            fallback_label: "ROOT".to_string(),
        }
    }
}

fn repaired_variant(config: &Configuration, t: &Transition, scheme: Scheme) -> Option<(Transition, RepairRule)> {
    match t {
        Transition::ShiftK(k) if !config.buffer().is_empty() && *k >= config.buffer().len() => {
            let clamped = Transition::shift_k(config.buffer().len() - 1);
            config
                .legal(&clamped, scheme)
                .then_some((clamped, RepairRule::R4ClampShift))
        }
        Transition::ReduceK(k, x) => {
            let available = config
                .stack()
                .iter()
                .rev()
                .take_while(|i| !i.is_marker())
                .count();
            if available == 0 || *k <= available {
                return None;
            }
            let clamped = Transition::ReduceK(available, x.clone());
            config
                .legal(&clamped, scheme)
                .then_some((clamped, RepairRule::R5ClampReduce))
        }
        _ => None,
    }
}

fn child_of(item: Item) -> Option<Child> {
    match item {
        Item::Word(p) => Some(Child::Leaf(p)),
        Item::Constituent(n) => Some(Child::Node(n)),
        Item::Marker(_) => None,
    }
}

/// Replays `tokens` over `words` and returns the resulting tree.
pub fn decode(
    words: &[String],
    tokens: &[Transition],
    scheme: Scheme,
    options: &DecodeOptions,
) -> Result<Decoded, DecodeError> {
    let mut config = Configuration::initial(words.len()).map_err(|_| DecodeError::EmptySentence)?;
    let mut repairs = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if config.legal(t, scheme) {
            config.apply_trusted(t, scheme);
        } else if let Some((fixed, rule)) = repaired_variant(&config, t, scheme) {
            config.apply_trusted(&fixed, scheme);
            repairs.push(Repair {
                rule,
                token_index: Some(i),
            });
        } else {
            repairs.push(Repair {
                rule: RepairRule::R1SkipIllegal,
                token_index: Some(i),
            });
        }
    }

    let root = match config.result(scheme) {
        Some(node) => node.clone(),
        None => {
            let (stack, buffer) = config.take_all_items();
            if !buffer.is_empty() {
                repairs.push(Repair {
                    rule: RepairRule::R2ImplicitShift,
                    token_index: None,
                });
            }
            let had_markers = stack.iter().any(Item::is_marker);
            let mut children: Vec<Child> = stack.into_iter().chain(buffer).filter_map(child_of).collect();
            match children.as_slice() {
                [Child::Node(_)] if !had_markers => {
                    repairs.push(Repair {
                        rule: RepairRule::R6ImplicitFinish,
                        token_index: None,
                    });
                    match children.pop() {
                        Some(Child::Node(n)) => n,
                        _ => unreachable!(),
                    }
                }
                _ => {
                    repairs.push(Repair {
                        rule: RepairRule::R3WrapRemaining,
                        token_index: None,
                    });
                    Node::new(options.fallback_label.clone(), children)
                }
            }
        }
    };
    let tree = Tree::new(words.to_vec(), root).expect("replayed configurations conserve words");
    Ok(Decoded { tree, repairs })
}

/// Per-rule repair counts over a batch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RepairStats {
    pub items: usize,
    pub repaired_items: usize,
    pub by_rule: BTreeMap<RepairRule, usize>,
}

impl RepairStats {
    pub fn add(&mut self, decoded: &Decoded) {
        self.items += 1;
        if !decoded.repairs.is_empty() {
            self.repaired_items += 1;
        }
        for r in &decoded.repairs {
            *self.by_rule.entry(r.rule).or_default() += 1;
        }
    }

    pub fn total_repairs(&self) -> usize {
        self.by_rule.values().sum()
    }
}

impl fmt::Display for RepairStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "decoded {} items, {} repaired", self.items, self.repaired_items)?;
        for (rule, count) in &self.by_rule {
            write!(f, ", {rule}={count}")?;
        }
        Ok(())
    }
}

pub fn decode_batch(
    sentences: &[Vec<String>],
    sequences: &[Vec<Transition>],
    scheme: Scheme,
    options: &DecodeOptions,
) -> Result<(Treebank, RepairStats), DecodeError> {
    if sentences.len() != sequences.len() {
        return Err(DecodeError::LengthMismatch {
            sentences: sentences.len(),
            sequences: sequences.len(),
        });
    }
    let mut stats = RepairStats::default();
    let mut trees = Vec::with_capacity(sentences.len());
    for (words, tokens) in sentences.iter().zip(sequences) {
        let decoded = decode(words, tokens, scheme, options)?;
        stats.add(&decoded);
        trees.push(decoded.tree);
    }
    Ok((Treebank::new(trees, "decoded"), stats))
}
