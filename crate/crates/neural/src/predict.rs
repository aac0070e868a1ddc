//! Beam search over transition tokens.
//!
//! Each hypothesis carries its parser configuration and mask tracker. At
//! every step, tokens that are not viable in the hypothesis's configuration
//! get no score, so returned sequences never need repairing unless the
//! length cap cuts them short.

use std::cmp::Ordering;

use discoseq::mask::{MaskPair, MaskTracker};
use discoseq::transition::{Configuration, Transition};

use crate::mat::Mat;
use crate::model::{Model, ModelError};

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub tokens: Vec<Transition>,
    /// Sum of token log-probabilities under the model.
    pub score: f64,
    /// False when the length cap stopped the search before a terminal state.
    pub complete: bool,
}

#[derive(Clone)]
struct Hyp {
    ids: Vec<usize>,
    config: Configuration,
    tracker: MaskTracker,
    masks: Vec<MaskPair>,
    score: f64,
}

fn log_softmax_last(logits: &Mat) -> Vec<f64> {
    let row = logits.row(logits.rows - 1);
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

impl Model {
    /// Default hard cap on the number of decoding steps for an `n`-word sentence.
    pub fn length_cap(&self, n: usize) -> usize {
        (2 * self.max_target_len).max(4 * n + 8)
    }

    /// Beam search with the given width (1 is greedy decoding).
    pub fn predict(&self, words: &[String], beam: usize) -> Result<Prediction, ModelError> {
        self.predict_capped(words, beam, self.length_cap(words.len()))
    }

    pub fn predict_capped(&self, words: &[String], beam: usize, cap: usize) -> Result<Prediction, ModelError> {
        let scheme = self.scheme;
        let word_ids = self.vocab.word_ids(words);
        let enc = self.encode(&word_ids)?;
        let n = words.len();
        let tracker = MaskTracker::new(n, scheme).map_err(|_| ModelError::EmptySentence)?;
        let start = Hyp {
            ids: Vec::new(),
            config: Configuration::initial(n).map_err(|_| ModelError::EmptySentence)?,
            masks: vec![tracker.masks().clone()],
            tracker,
            score: 0.0,
        };
        let beam = beam.max(1);
        let cap = cap.min(self.config.max_positions);
        let mut active = vec![start];
        let mut finished: Vec<Hyp> = Vec::new();

        for _ in 0..cap {
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            for (h, hyp) in active.iter().enumerate() {
                let mut inputs = Vec::with_capacity(hyp.ids.len() + 1);
                inputs.push(self.vocab.bos());
                inputs.extend_from_slice(&hyp.ids);
                let (logits, _) = self.decode_with_encoding(&enc, &inputs, &hyp.masks)?;
                let logp = log_softmax_last(&logits);
                for (v, lp) in logp.iter().enumerate() {
                    if hyp.config.viable(self.vocab.transition(v), scheme) {
                        candidates.push((hyp.score + lp, h, v));
                    }
                }
            }
            if candidates.is_empty() {
                break;
            }
            // ties resolve towards earlier hypotheses and smaller token ids
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next = Vec::with_capacity(beam);
            for &(score, h, v) in candidates.iter().take(beam) {
                let t = self.vocab.transition(v);
                let mut hyp = active[h].clone();
                hyp.config = hyp.config.apply(t, scheme).expect("viable tokens are legal");
                hyp.tracker.step(t).expect("legal tokens keep masks consistent");
                hyp.masks.push(hyp.tracker.masks().clone());
                hyp.ids.push(v);
                hyp.score = score;
                if hyp.config.is_terminal(scheme) {
                    finished.push(hyp);
                } else {
                    next.push(hyp);
                }
            }
            active = next;
            let best_finished = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            let best_active = active.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if active.is_empty() || best_finished >= best_active {
                break;
            }
        }

        let best = |hyps: &[Hyp]| {
            hyps.iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal).then(j.cmp(i)))
                .map(|(_, h)| h.clone())
        };
        let (hyp, complete) = match best(&finished) {
            Some(h) => (h, true),
            None => (best(&active).expect("a dead end keeps its hypotheses"), false),
        };
        Ok(Prediction {
            tokens: hyp.ids.iter().map(|&v| self.vocab.transition(v).clone()).collect(),
            score: hyp.score,
            complete,
        })
    }

    /// Log-probability the model assigns to `tokens` under teacher forcing.
    pub fn sequence_score(&self, words: &[String], tokens: &[Transition]) -> Result<f64, ModelError> {
        let word_ids = self.vocab.word_ids(words);
        let enc = self.encode(&word_ids)?;
        let mut tracker = MaskTracker::new(words.len(), self.scheme).map_err(|_| ModelError::EmptySentence)?;
        let mut masks = vec![tracker.masks().clone()];
        let mut inputs = vec![self.vocab.bos()];
        let mut targets = Vec::with_capacity(tokens.len());
        for t in tokens {
            let id = self
                .vocab
                .token_id(&t.render(self.scheme))
                .ok_or_else(|| ModelError::UnknownToken(t.to_string()))?;
            targets.push(id);
            tracker.step(t).map_err(|_| ModelError::UnknownToken(t.to_string()))?;
            masks.push(tracker.masks().clone());
            inputs.push(id);
        }
        inputs.pop();
        masks.pop();
        if targets.is_empty() {
            return Ok(0.0);
        }
        let (logits, _) = self.decode_with_encoding(&enc, &inputs, &masks)?;
        let mut score = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = logits.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            score += row[t] - lse;
        }
        Ok(score)
    }
}
