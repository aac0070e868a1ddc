//! Stack and buffer attention masks.
//!
//! Each stack or buffer item is represented in the masks by one word
//! position, the smallest position it covers. The tracker updates the masks
//! incrementally from the previous token; [`MaskPair::from_configuration`]
//! recomputes them from a replayed parser state and serves as a reference.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::transition::{Base, Configuration, Scheme, Transition};

/// Additive mask value for a hidden position.
pub const MASKED: f64 = f64::NEG_INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskPair {
    pub stack: Vec<f64>,
    pub buffer: Vec<f64>,
}

fn unmasked(mask: &[f64]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, v)| **v == 0.0)
        .map(|(i, _)| i)
        .collect()
}

impl MaskPair {
    /// Everything in the buffer, nothing on the stack.
    pub fn initial(n: usize) -> Self {
        MaskPair {
            stack: vec![MASKED; n],
            buffer: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn stack_positions(&self) -> Vec<usize> {
        unmasked(&self.stack)
    }

    pub fn buffer_positions(&self) -> Vec<usize> {
        unmasked(&self.buffer)
    }

    /// Masks computed directly from a parser state: each non-marker item
    /// contributes its smallest word position to the mask of the side it is on.
    pub fn from_configuration(config: &Configuration) -> Self {
        let n = config.sentence_len();
        let mut pair = MaskPair {
            stack: vec![MASKED; n],
            buffer: vec![MASKED; n],
        };
        for p in config.stack().iter().filter_map(|i| i.min_position()) {
            pair.stack[p] = 0.0;
        }
        for p in config.buffer().iter().filter_map(|i| i.min_position()) {
            pair.buffer[p] = 0.0;
        }
        pair
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("{token}: {reason}")]
    Inconsistent { token: String, reason: &'static str },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<MaskError>,
    },
    #[error("sentence must contain at least one word")]
    EmptySentence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Open,
    Item(usize),
}

/// Incremental mask state for one sentence.
///
/// The tracker keeps the stack order internally: after swaps, positions on
/// the stack are no longer sorted, and the mask vectors alone cannot tell
/// which items a reduce consumes.
#[derive(Clone, Debug)]
pub struct MaskTracker {
    scheme: Scheme,
    masks: MaskPair,
    stack: Vec<Slot>,
    buffer: VecDeque<usize>,
}

impl MaskTracker {
    pub fn new(n: usize, scheme: Scheme) -> Result<Self, MaskError> {
        if n == 0 {
            return Err(MaskError::EmptySentence);
        }
        Ok(MaskTracker {
            scheme,
            masks: MaskPair::initial(n),
            stack: Vec::new(),
            buffer: (0..n).collect(),
        })
    }

    pub fn masks(&self) -> &MaskPair {
        &self.masks
    }

    fn push(&mut self, p: usize) {
        self.masks.buffer[p] = MASKED;
        self.masks.stack[p] = 0.0;
        self.stack.push(Slot::Item(p));
    }

    fn items_on_top(&self) -> usize {
        self.stack
            .iter()
            .rev()
            .take_while(|s| matches!(s, Slot::Item(_)))
            .count()
    }

    /// Folds the stack slots from `start` into one item represented by the
    /// smallest position among them.
    fn merge_from(&mut self, start: usize) {
        let reps: Vec<usize> = self
            .stack
            .drain(start..)
            .filter_map(|s| match s {
                Slot::Item(p) => Some(p),
                Slot::Open => None,
            })
            .collect();
        let keep = *reps.iter().min().expect("reduce over at least one item");
        for p in reps {
            if p != keep {
                self.masks.stack[p] = MASKED;
            }
        }
        self.stack.push(Slot::Item(keep));
    }

    /// Updates the masks after `t` has been applied.
    pub fn step(&mut self, t: &Transition) -> Result<&MaskPair, MaskError> {
        let fail = |reason| MaskError::Inconsistent {
            token: t.to_string(),
            reason,
        };
        match t {
            Transition::Shift => {
                let p = self.buffer.pop_front().ok_or_else(|| fail("buffer is empty"))?;
                self.push(p);
            }
            Transition::ShiftK(k) => {
                let p = self.buffer.remove(*k).ok_or_else(|| fail("buffer shorter than k+1"))?;
                self.push(p);
            }
            Transition::Swap | Transition::SwapK(_) => {
                let k = if let Transition::SwapK(k) = t { *k } else { 1 };
                if self.items_on_top() < k + 1 {
                    return Err(fail("fewer than k+1 items on the stack"));
                }
                let top = self.stack.pop().expect("counted");
                let start = self.stack.len() - k;
                for slot in self.stack.drain(start..).rev() {
                    if let Slot::Item(p) = slot {
                        self.masks.stack[p] = MASKED;
                        self.masks.buffer[p] = 0.0;
                        self.buffer.push_front(p);
                    }
                }
                self.stack.push(top);
            }
            Transition::Nt(_) => self.stack.push(Slot::Open),
            Transition::Reduce | Transition::ReduceLabeled(_) => {
                let m = self
                    .stack
                    .iter()
                    .rposition(|s| *s == Slot::Open)
                    .ok_or_else(|| fail("no open non-terminal"))?;
                let start = match self.scheme.base {
                    Base::InOrder => m.checked_sub(1).ok_or_else(|| fail("no first child below marker"))?,
                    _ => m,
                };
                if self.stack[start..].iter().all(|s| *s == Slot::Open) {
                    return Err(fail("nothing to reduce"));
                }
                self.merge_from(start);
            }
            Transition::ReduceK(k, _) => {
                if self.items_on_top() < *k {
                    return Err(fail("fewer than k items on the stack"));
                }
                let start = self.stack.len() - k;
                self.merge_from(start);
            }
            Transition::Finish => {}
        }
        Ok(&self.masks)
    }
}

/// Mask pairs before each token and after the last: `tokens.len() + 1` pairs.
pub fn trace(n: usize, tokens: &[Transition], scheme: Scheme) -> Result<Vec<MaskPair>, MaskError> {
    let mut tracker = MaskTracker::new(n, scheme)?;
    let mut out = Vec::with_capacity(tokens.len() + 1);
    out.push(tracker.masks().clone());
    for (step, t) in tokens.iter().enumerate() {
        let masks = tracker.step(t).map_err(|e| MaskError::AtStep {
            step,
            source: Box::new(e),
        })?;
        out.push(masks.clone());
    }
    Ok(out)
}

/// One row of a printed mask trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub token: Option<String>,
    pub stack: Vec<usize>,
    pub buffer: Vec<usize>,
}

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set = |v: &[usize]| {
            let items: Vec<String> = v.iter().map(usize::to_string).collect();
            format!("{{{}}}", items.join(","))
        };
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.step,
            self.token.as_deref().unwrap_or("-"),
            set(&self.stack),
            set(&self.buffer)
        )
    }
}

/// Pairs each trace entry with the token that produced it.
pub fn trace_rows(masks: &[MaskPair], tokens: &[Transition], scheme: Scheme) -> Vec<TraceRow> {
    masks
        .iter()
        .enumerate()
        .map(|(step, m)| TraceRow {
            step,
            token: step.checked_sub(1).map(|i| tokens[i].render(scheme)),
            stack: m.stack_positions(),
            buffer: m.buffer_positions(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::encode;
    use crate::transition::{parse_tokens, Disco};
    use crate::treebank::parse_discbracket;

    const ALLERDINGS: &str = "(S (VP 0=Allerdings (PP 2=in 3=bestimmten 4=Vierteln) 6=nur 7=stundenweise 8=abgegeben) 1=wird 5=Wasser)";

    fn replay(n: usize, tokens: &[Transition], scheme: Scheme) -> Vec<MaskPair> {
        let mut c = Configuration::initial(n).unwrap();
        let mut out = vec![MaskPair::from_configuration(&c)];
        for t in tokens {
            c = c.apply(t, scheme).unwrap();
            out.push(MaskPair::from_configuration(&c));
        }
        out
    }

    #[test]
    fn first_shift_and_nt() {
        let s = Scheme::in_order().with_disco(Disco::Swap);
        let masks = trace(9, &parse_tokens("SHIFT NT(VP)").unwrap(), s).unwrap();
        assert_eq!(masks[1].stack_positions(), vec![0]);
        assert_eq!(masks[1].buffer_positions(), (1..9).collect::<Vec<_>>());
        assert_eq!(masks[2], masks[1]);
    }

    #[test]
    fn swap_prefix_masks() {
        let s = Scheme::in_order().with_disco(Disco::Swap);
        let tokens = parse_tokens(
            "SHIFT NT(VP) SHIFT SHIFT SWAP NT(PP) SHIFT SHIFT SWAP SHIFT SHIFT SWAP REDUCE",
        )
        .unwrap();
        let masks = trace(9, &tokens, s).unwrap();
        assert_eq!(masks.len(), 14);
        let last = &masks[13];
        assert_eq!(last.stack_positions(), vec![0, 2]);
        assert_eq!(last.buffer_positions(), vec![1, 5, 6, 7, 8]);
        assert_eq!(masks, replay(9, &tokens, s));
    }

    #[test]
    fn all_schemes_match_replay_on_fixture() {
        let tree = parse_discbracket(ALLERDINGS).unwrap();
        for s in Scheme::all().into_iter().filter(Scheme::handles_discontinuity) {
            let tokens = encode(&tree, s).unwrap().tokens;
            assert_eq!(trace(9, &tokens, s).unwrap(), replay(9, &tokens, s), "{s}");
        }
    }

    #[test]
    fn empty_sequence_and_errors() {
        assert_eq!(trace(3, &[], Scheme::top_down()).unwrap(), vec![MaskPair::initial(3)]);
        let err = trace(1, &parse_tokens("SHIFT SHIFT").unwrap(), Scheme::top_down()).unwrap_err();
        assert!(matches!(err, MaskError::AtStep { step: 1, .. }));
        assert_eq!(MaskTracker::new(0, Scheme::top_down()).unwrap_err(), MaskError::EmptySentence);
    }

    #[test]
    fn rows_render_sets() {
        let tokens = parse_tokens("NT(S) SHIFT").unwrap();
        let s = Scheme::top_down();
        let rows = trace_rows(&trace(2, &tokens, s).unwrap(), &tokens, s);
        assert_eq!(rows[0].to_string(), "0\t-\t{}\t{0,1}");
        assert_eq!(rows[2].to_string(), "2\tSHIFT\t{0}\t{1}");
    }
}
