//! Labeled bracketing scores.
//!
//! Every constituent is reduced to a `(label, yield)` item; yields are sets
//! of word positions, so discontinuous constituents are scored the same way
//! as continuous ones. Items are matched as multisets and counts are summed
//! over the treebank before computing precision and recall.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::tree::{Tree, Yield};
use crate::treebank::Treebank;

pub const DEFAULT_PUNCT: &[&str] = &[",", ".", ":", ";", "''", "``", "-LRB-", "-RRB-", "!", "?"];

/// What to report when a score has nothing to count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum ZeroDenominator {
    /// Report 100.0; the score is flagged as undefined.
    #[default]
    Perfect,
    /// Report 0.0; the score is flagged as undefined.
    Zero,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub drop_punct: bool,
    pub ignore_root: bool,
    pub punct: BTreeSet<String>,
    pub zero_denominator: ZeroDenominator,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            drop_punct: false,
            ignore_root: false,
            punct: DEFAULT_PUNCT.iter().map(|s| s.to_string()).collect(),
            zero_denominator: ZeroDenominator::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("gold has {gold} trees but prediction has {pred}")]
    CountMismatch { gold: usize, pred: usize },
    #[error("sentence {index} differs between gold and prediction")]
    SentenceMismatch { index: usize },
}

/// Matched, gold and predicted item counts for one sentence or a treebank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.matched += o.matched;
        self.gold += o.gold;
        self.pred += o.pred;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    /// Set when gold and prediction both have no items.
    pub undefined: bool,
}

impl Counts {
    pub fn scores(self, convention: ZeroDenominator) -> Scores {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        if self.gold == 0 && self.pred == 0 {
            let v = match convention {
                ZeroDenominator::Perfect => 100.0,
                ZeroDenominator::Zero => 0.0,
            };
            return Scores {
                precision: v,
                recall: v,
                f1: v,
                counts: self,
                undefined: true,
            };
        }
        let precision = ratio(self.matched, self.pred);
        let recall = ratio(self.matched, self.gold);
        let f1 = if self.matched == 0 {
            0.0
        } else {
            200.0 * self.matched as f64 / (self.gold + self.pred) as f64
        };
        Scores {
            precision,
            recall,
            f1,
            counts: self,
            undefined: false,
        }
    }
}

type Item = (String, Vec<usize>);

fn items(tree: &Tree, opts: &EvalOptions, discontinuous_only: bool) -> Vec<Item> {
    let dropped: Vec<bool> = tree
        .words()
        .iter()
        .map(|w| opts.drop_punct && opts.punct.contains(w))
        .collect();
    let root: *const _ = tree.root();
    tree.constituents()
        .into_iter()
        .filter(|n| !(opts.ignore_root && std::ptr::eq(*n, root)))
        .filter_map(|n| {
            let kept: Vec<usize> = n.span().positions().iter().copied().filter(|p| !dropped[*p]).collect();
            if kept.is_empty() {
                return None;
            }
            // consecutiveness is judged on the sentence with punctuation removed
            let reindexed: Vec<usize> = kept
                .iter()
                .map(|p| *p - dropped[..*p].iter().filter(|d| **d).count())
                .collect();
            if discontinuous_only && Yield::from_positions(reindexed).is_consecutive() {
                return None;
            }
            Some((n.label().to_string(), kept))
        })
        .collect()
}

fn count(gold: &Tree, pred: &Tree, opts: &EvalOptions, discontinuous_only: bool) -> Counts {
    let g = items(gold, opts, discontinuous_only);
    let p = items(pred, opts, discontinuous_only);
    let mut pool: HashMap<&Item, usize> = HashMap::new();
    for item in &g {
        *pool.entry(item).or_default() += 1;
    }
    let mut matched = 0;
    for item in &p {
        if let Some(c) = pool.get_mut(item) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    Counts {
        matched,
        gold: g.len(),
        pred: p.len(),
    }
}

fn aligned(gold: &Treebank, pred: &Treebank) -> Result<(), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    match gold.iter().zip(pred.iter()).position(|(g, p)| g.words() != p.words()) {
        Some(index) => Err(EvalError::SentenceMismatch { index }),
        None => Ok(()),
    }
}

/// Per-sentence counts for all constituents and for discontinuous ones.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SentenceCounts {
    pub index: usize,
    pub length: usize,
    pub all: Counts,
    pub disc: Counts,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub sentences: Vec<SentenceCounts>,
    pub all: Scores,
    pub disc: Scores,
    pub exact_match: f64,
}

/// Counts for one aligned sentence pair.
pub fn score_sentence(index: usize, gold: &Tree, pred: &Tree, opts: &EvalOptions) -> Result<SentenceCounts, EvalError> {
    if gold.words() != pred.words() {
        return Err(EvalError::SentenceMismatch { index });
    }
    Ok(SentenceCounts {
        index,
        length: gold.len(),
        all: count(gold, pred, opts, false),
        disc: count(gold, pred, opts, true),
        exact: gold == pred,
    })
}

impl Evaluation {
    /// Corpus-level scores from per-sentence counts.
    pub fn from_sentences(sentences: Vec<SentenceCounts>, opts: &EvalOptions) -> Self {
        let mut total = Counts::default();
        let mut total_disc = Counts::default();
        let mut exact = 0usize;
        for s in &sentences {
            total += s.all;
            total_disc += s.disc;
            exact += s.exact as usize;
        }
        let exact_match = if sentences.is_empty() { 1.0 } else { exact as f64 / sentences.len() as f64 };
        Evaluation {
            sentences,
            all: total.scores(opts.zero_denominator),
            disc: total_disc.scores(opts.zero_denominator),
            exact_match,
        }
    }
}

pub fn evaluate(gold: &Treebank, pred: &Treebank, opts: &EvalOptions) -> Result<Evaluation, EvalError> {
    aligned(gold, pred)?;
    let sentences = gold
        .iter()
        .zip(pred.iter())
        .enumerate()
        .map(|(index, (g, p))| score_sentence(index, g, p, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Evaluation::from_sentences(sentences, opts))
}

pub fn f1(gold: &Treebank, pred: &Treebank, opts: &EvalOptions) -> Result<Scores, EvalError> {
    Ok(evaluate(gold, pred, opts)?.all)
}

/// Scores restricted to constituents with a non-consecutive yield.
pub fn disc_f1(gold: &Treebank, pred: &Treebank, opts: &EvalOptions) -> Result<Scores, EvalError> {
    Ok(evaluate(gold, pred, opts)?.disc)
}

/// Fraction of identical trees, in `[0, 1]`.
pub fn exact_match(gold: &Treebank, pred: &Treebank) -> Result<f64, EvalError> {
    Ok(evaluate(gold, pred, &EvalOptions::default())?.exact_match)
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  Sent.  Len.  Match  Gold  Test  DMatch  DGold  DTest")?;
        for s in &self.sentences {
            writeln!(
                f,
                "{:>6} {:>5} {:>6} {:>5} {:>5} {:>7} {:>6} {:>6}",
                s.index + 1,
                s.length,
                s.all.matched,
                s.all.gold,
                s.all.pred,
                s.disc.matched,
                s.disc.gold,
                s.disc.pred
            )?;
        }
        writeln!(f, "=== Summary ===")?;
        writeln!(f, "Number of sentence     = {:>7}", self.sentences.len())?;
        writeln!(f, "Bracketing Recall      = {:>7.2}", self.all.recall)?;
        writeln!(f, "Bracketing Precision   = {:>7.2}", self.all.precision)?;
        writeln!(f, "Bracketing FMeasure    = {:>7.2}", self.all.f1)?;
        writeln!(f, "Complete match         = {:>7.2}", 100.0 * self.exact_match)?;
        writeln!(f, "Disc. Recall           = {:>7.2}", self.disc.recall)?;
        writeln!(f, "Disc. Precision        = {:>7.2}", self.disc.precision)?;
        write!(f, "Disc. FMeasure         = {:>7.2}", self.disc.f1)?;
        if self.disc.undefined {
            write!(f, " (no discontinuous constituents)")?;
        }
        Ok(())
    }
}
