//! Constituent trees, their shift-reduce linearizations and the tooling
//! around them: treebank I/O, oracles, repairing decoder, attention masks and
//! bracketing metrics.

pub mod decoder;
pub mod mask;
pub mod metrics;
pub mod oracle;
pub mod sample;
pub mod transition;
pub mod tree;
pub mod treebank;

pub use decoder::{decode, decode_batch, DecodeError, DecodeOptions, Decoded, Repair, RepairRule, RepairStats};
pub use mask::{trace, MaskError, MaskPair, MaskTracker};
pub use metrics::{disc_f1, evaluate, score_sentence, Evaluation, exact_match, f1, EvalError, EvalOptions, Scores};
pub use oracle::{encode, encode_enriched, vocab_stats, EncodeError, Linearization, VocabStats};
pub use transition::{Base, Configuration, Disco, Item, Scheme, Transition, TransitionError};
pub use tree::{Child, Node, Tree, Violation, Yield};
pub use treebank::{Format, ParseError, Treebank};
