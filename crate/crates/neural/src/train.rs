//! Teacher-forced training on oracle sequences.

use discoseq::decoder::{decode, DecodeOptions};
use discoseq::mask::trace;
use discoseq::oracle::{encode, EncodeError};
use discoseq::transition::Scheme;
use discoseq::treebank::Treebank;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mat::Mat;
use crate::model::{Example, Model, ModelConfig, ModelError, Vocab};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training treebank is empty")]
    Empty,
    #[error("tree {index} cannot be encoded: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error("non-finite loss at epoch {epoch}, update {update}")]
    NonFinite { epoch: usize, update: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Mean label-smoothed cross-entropy of probability rows against targets.
pub fn loss(distributions: &Mat, gold: &[usize], smoothing: f64) -> f64 {
    assert_eq!(distributions.rows, gold.len(), "one target per row");
    if gold.is_empty() {
        return 0.0;
    }
    let v = distributions.cols as f64;
    let mut total = 0.0;
    for (r, &g) in gold.iter().enumerate() {
        for (c, p) in distributions.row(r).iter().enumerate() {
            let q = smoothing / v + if c == g { 1.0 - smoothing } else { 0.0 };
            if q > 0.0 {
                total -= q * p.ln();
            }
        }
    }
    total / gold.len() as f64
}

/// Builds the vocabulary and teacher-forcing examples for a treebank.
pub fn prepare(treebank: &Treebank, scheme: Scheme) -> Result<(Vocab, Vec<Example>, usize), TrainError> {
    let mut lins = Vec::with_capacity(treebank.len());
    for (index, tree) in treebank.iter().enumerate() {
        lins.push(encode(tree, scheme).map_err(|source| TrainError::Encode { index, source })?);
    }
    let vocab = Vocab::build(
        treebank.iter().map(|t| t.words()),
        lins.iter().flat_map(|l| l.token_strings()),
    );
    let max_len = lins.iter().map(|l| l.len()).max().unwrap_or(0);
    let examples = examples_with_vocab(treebank, scheme, &vocab)?;
    Ok((vocab, examples, max_len))
}

/// Examples for `treebank` under an existing vocabulary.
pub fn examples_with_vocab(treebank: &Treebank, scheme: Scheme, vocab: &Vocab) -> Result<Vec<Example>, TrainError> {
    treebank
        .iter()
        .enumerate()
        .map(|(index, tree)| {
            let lin = encode(tree, scheme).map_err(|source| TrainError::Encode { index, source })?;
            let targets = lin
                .token_strings()
                .iter()
                .map(|t| vocab.token_id(t).ok_or_else(|| ModelError::UnknownToken(t.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            let mut masks = trace(tree.len(), &lin.tokens, scheme).expect("oracle sequences are legal");
            masks.pop();
            Ok(Example {
                words: vocab.word_ids(tree.words()),
                targets,
                masks,
            })
        })
        .collect()
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: usize,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let zeros: Vec<Mat> = model.params.mats.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Model, grads: &[Option<Mat>]) -> f64 {
        self.step += 1;
        let cfg = &model.config;
        let lr = cfg.schedule.lr(self.step);
        let (b1, b2) = cfg.adam_betas;
        let eps = cfg.adam_eps;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for (((p, gi), mi), vi) in model.params.mats[i].data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        lr
    }
}

/// Per-sentence loss sums and gradients for a batch, summed in batch order
/// so the result does not depend on thread scheduling.
fn batch_gradients(
    model: &Model,
    examples: &[Example],
    batch: &[usize],
    dropout_seed: u64,
) -> Result<(f64, usize, Vec<Option<Mat>>), ModelError> {
    let parts: Vec<Result<(f64, Vec<Option<Mat>>), ModelError>> = batch
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let fwd = model.forward(&examples[i], Some(&mut rng))?;
            Ok((fwd.loss_value().expect("loss recorded"), fwd.gradients()))
        })
        .collect();
    let mut total = 0.0;
    let mut tokens = 0;
    let mut sum: Vec<Option<Mat>> = vec![None; model.params.len()];
    for (part, &i) in parts.into_iter().zip(batch) {
        let (l, grads) = part?;
        total += l;
        tokens += examples[i].targets.len();
        for (acc, g) in sum.iter_mut().zip(grads) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g),
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
    }
    Ok((total, tokens, sum))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-token training loss.
    pub loss: f64,
    pub lr: f64,
    pub updates: usize,
    /// Greedy-decoding exact match on the training set, when evaluated.
    pub train_exact_match: Option<f64>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Worker threads for gradient computation; `Some(1)` runs serially.
    pub threads: Option<usize>,
    /// Evaluate training exact match every this many epochs (0 = never).
    pub eval_every: usize,
    /// Stop as soon as an evaluation reaches 100% exact match.
    pub stop_at_exact_match: bool,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochStats)>,
}

/// Fraction of training trees that greedy decoding reproduces exactly.
pub fn exact_match_on(model: &Model, treebank: &Treebank, beam: usize) -> Result<f64, ModelError> {
    if treebank.is_empty() {
        return Ok(1.0);
    }
    let hits: Vec<bool> = treebank
        .trees
        .par_iter()
        .map(|tree| {
            let pred = model.predict(tree.words(), beam)?;
            let out = decode(tree.words(), &pred.tokens, model.scheme, &DecodeOptions::default())
                .map_err(|_| ModelError::EmptySentence)?;
            Ok(out.tree == *tree)
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / treebank.len() as f64)
}

pub fn train(
    treebank: &Treebank,
    scheme: Scheme,
    config: ModelConfig,
    mut opts: TrainOptions<'_>,
) -> Result<(Model, Vec<EpochStats>), TrainError> {
    if treebank.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| TrainError::Threads(e.to_string()))?;

    let (vocab, examples, max_len) = prepare(treebank, scheme)?;
    let mut model = Model::new(config, vocab, scheme, max_len)?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::new();

    for epoch in 1..=model.config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut token_count = 0;
        let mut lr = 0.0;
        for batch in order.chunks(model.config.batch_size) {
            let dropout_seed = model.config.seed ^ ((adam.step as u64 + 1) << 32);
            let (l, tokens, mut grads) = pool.install(|| batch_gradients(&model, &examples, batch, dropout_seed))?;
            if !l.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    update: adam.step + 1,
                });
            }
            loss_sum += l;
            token_count += tokens;
            for g in grads.iter_mut().flatten() {
                g.scale(1.0 / tokens as f64);
            }
            lr = adam.update(&mut model, &grads);
        }
        let evaluate = opts.eval_every > 0 && (epoch % opts.eval_every == 0 || epoch == model.config.epochs);
        let train_exact_match = if evaluate {
            Some(pool.install(|| exact_match_on(&model, treebank, 1))?)
        } else {
            None
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / token_count as f64,
            lr,
            updates: adam.step,
            train_exact_match,
        };
        if let Some(cb) = opts.on_epoch.as_deref_mut() {
            cb(&stats);
        }
        let done = opts.stop_at_exact_match && train_exact_match == Some(1.0);
        history.push(stats);
        if done {
            break;
        }
    }
    Ok((model, history))
}
