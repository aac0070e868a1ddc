//! Encoder-decoder transformer whose cross-attention has a stack head and a
//! buffer head.
//!
//! The encoder sees the sentence with one extra position in front, a
//! sentinel. The stack head attends to the sentinel only while the stack is
//! empty, and the buffer head only while the buffer is empty, so every
//! attention row has at least one visible key.

use std::collections::HashMap;

use discoseq::mask::MaskPair;
use discoseq::transition::{Scheme, Transition};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::Mat;
use crate::tape::{Tape, Var};

pub const UNK: usize = 0;
pub const SENTINEL: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup_updates: usize,
    pub warmup_init_lr: f64,
    pub min_lr: f64,
}

impl Schedule {
    /// Linear warm-up to `peak_lr`, then decay with the inverse square root
    /// of the update number. `update` counts from 1.
    pub fn lr(&self, update: usize) -> f64 {
        let u = update.max(1) as f64;
        let w = self.warmup_updates as f64;
        let lr = if self.warmup_updates > 0 && u <= w {
            self.warmup_init_lr + (self.peak_lr - self.warmup_init_lr) * u / w
        } else {
            self.peak_lr * (w.max(1.0) / u).sqrt()
        };
        lr.max(self.min_lr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    /// Restrict head 0 to the stack and head 1 to the buffer in every
    /// decoder cross-attention layer.
    pub specialized_heads: bool,
    pub schedule: Schedule,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beam: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// CPU-sized defaults.
    pub fn toy() -> Self {
        ModelConfig {
            d_model: 64,
            layers: 2,
            heads: 4,
            d_ff: 128,
            max_positions: 512,
            dropout: 0.0,
            label_smoothing: 0.01,
            specialized_heads: true,
            schedule: Schedule {
                peak_lr: 5e-4,
                warmup_updates: 100,
                warmup_init_lr: 1e-7,
                min_lr: 1e-9,
            },
            adam_betas: (0.9, 0.98),
            adam_eps: 1e-8,
            batch_size: 4,
            epochs: 300,
            beam: 10,
            seed: 1,
        }
    }

    /// Full-size hyper-parameters for real treebanks. `d_ff` is
    /// four times the model size.
    pub fn large() -> Self {
        ModelConfig {
            d_model: 256,
            layers: 6,
            heads: 4,
            d_ff: 1024,
            max_positions: 1024,
            dropout: 0.33,
            label_smoothing: 0.01,
            specialized_heads: true,
            schedule: Schedule {
                peak_lr: 5e-4,
                warmup_updates: 4000,
                warmup_init_lr: 1e-7,
                min_lr: 1e-9,
            },
            adam_betas: (0.9, 0.98),
            adam_eps: 1e-8,
            batch_size: 3584,
            epochs: 80,
            beam: 10,
            seed: 1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "large" => Some(Self::large()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("heads must divide d_model");
        }
        if self.specialized_heads && self.heads < 2 {
            return bad("specialized heads need at least two heads");
        }
        if self.layers == 0 || self.d_ff == 0 {
            return bad("layers and d_ff must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.label_smoothing) {
            return bad("dropout must be in [0,1) and label smoothing in [0,1]");
        }
        if self.batch_size == 0 || self.beam == 0 {
            return bad("batch size and beam must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("expected {expected} mask pairs, got {got}")]
    MaskCount { expected: usize, got: usize },
    #[error("token `{0}` is not in the output vocabulary")]
    UnknownToken(String),
    #[error("sentence must contain at least one word")]
    EmptySentence,
}

/// Input words and output tokens known to a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabLists", into = "VocabLists")]
pub struct Vocab {
    words: Vec<String>,
    tokens: Vec<String>,
    word_ids: HashMap<String, usize>,
    token_ids: HashMap<String, usize>,
    transitions: Vec<Transition>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    words: Vec<String>,
    tokens: Vec<String>,
}

impl TryFrom<VocabLists> for Vocab {
    type Error = String;

    fn try_from(v: VocabLists) -> Result<Self, String> {
        if v.words.len() < 2 {
            return Err("word list lacks the reserved entries".into());
        }
        if let Some(bad) = v.tokens.iter().find(|t| t.parse::<Transition>().is_err()) {
            return Err(format!("malformed token `{bad}`"));
        }
        Ok(Vocab::from_lists(v.words, v.tokens))
    }
}

impl From<Vocab> for VocabLists {
    fn from(v: Vocab) -> Self {
        VocabLists {
            words: v.words,
            tokens: v.tokens,
        }
    }
}

impl Vocab {
    /// `words` must start with the unknown and sentinel entries.
    fn from_lists(words: Vec<String>, tokens: Vec<String>) -> Self {
        let word_ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let token_ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let transitions = tokens
            .iter()
            .map(|t| t.parse().expect("vocabulary tokens are well-formed"))
            .collect();
        Vocab {
            words,
            tokens,
            word_ids,
            token_ids,
            transitions,
        }
    }

    /// Builds a vocabulary from training sentences and rendered token
    /// sequences; both lists are sorted so the result is order-independent.
    pub fn build<'a>(
        sentences: impl IntoIterator<Item = &'a [String]>,
        token_strings: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut words: Vec<String> = sentences
            .into_iter()
            .flatten()
            .filter(|w| *w != "<unk>" && *w != "<s>")
            .cloned()
            .collect();
        words.sort();
        words.dedup();
        let mut all = vec!["<unk>".to_string(), "<s>".to_string()];
        all.extend(words);
        let mut tokens: Vec<String> = token_strings.into_iter().collect();
        tokens.sort();
        tokens.dedup();
        Vocab::from_lists(all, tokens)
    }

    pub fn word_id(&self, w: &str) -> usize {
        self.word_ids.get(w).copied().unwrap_or(UNK)
    }

    pub fn word_ids(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().map(|w| self.word_id(w)).collect()
    }

    pub fn token_id(&self, t: &str) -> Option<usize> {
        self.token_ids.get(t).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn transition(&self, id: usize) -> &Transition {
        &self.transitions[id]
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Id of the begin-of-sequence decoder input.
    pub fn bos(&self) -> usize {
        self.tokens.len()
    }
}

/// Named parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub mats: Vec<Mat>,
}

impl Params {
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> &Mat {
        &self.mats[self.index(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        let i = self.index(name).unwrap_or_else(|| panic!("no parameter {name}"));
        &mut self.mats[i]
    }

    pub fn count(&self) -> usize {
        self.mats.iter().map(|m| m.data.len()).sum()
    }
}

struct Init<'a> {
    params: Params,
    rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    fn add(&mut self, name: String, m: Mat) {
        self.params.names.push(name);
        self.params.mats.push(m);
    }

    fn xavier(&mut self, name: String, rows: usize, cols: usize) {
        let m = Mat::uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), self.rng);
        self.add(name, m);
    }

    fn embedding(&mut self, name: String, rows: usize, d: usize) {
        let m = Mat::uniform(rows, d, (3.0 / d as f64).sqrt(), self.rng);
        self.add(name, m);
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.add(format!("{prefix}.g"), Mat::filled(1, d, 1.0));
        self.add(format!("{prefix}.b"), Mat::zeros(1, d));
    }

    fn attention(&mut self, prefix: &str, d: usize) {
        for w in ["wq", "wk", "wv", "wo"] {
            self.xavier(format!("{prefix}.{w}"), d, d);
        }
        self.add(format!("{prefix}.bo"), Mat::zeros(1, d));
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, f: usize) {
        self.xavier(format!("{prefix}.w1"), d, f);
        self.add(format!("{prefix}.b1"), Mat::zeros(1, f));
        self.xavier(format!("{prefix}.w2"), f, d);
        self.add(format!("{prefix}.b2"), Mat::zeros(1, d));
    }
}

/// Additive `−∞`/0 matrix letting row `t` see columns `0..=t`.
pub fn causal_mask(t: usize) -> Mat {
    let mut m = Mat::zeros(t, t);
    for i in 0..t {
        for j in i + 1..t {
            m.set(i, j, f64::NEG_INFINITY);
        }
    }
    m
}

/// Cross-attention mask for a specialized head: row `t` is the stack (or
/// buffer) mask of step `t`, preceded by the sentinel column, which is
/// visible exactly when the row hides every word.
pub fn head_mask(masks: &[MaskPair], stack: bool) -> Mat {
    let n = masks.first().map_or(0, MaskPair::len);
    let mut m = Mat::zeros(masks.len(), n + 1);
    for (t, pair) in masks.iter().enumerate() {
        let src = if stack { &pair.stack } else { &pair.buffer };
        let row = m.row_mut(t);
        row[1..].copy_from_slice(src);
        row[0] = if src.iter().all(|v| *v == f64::NEG_INFINITY) { 0.0 } else { f64::NEG_INFINITY };
    }
    m
}

fn positional_encoding(rows: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(rows, d);
    for pos in 0..rows {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

/// Attention weights of the specialized heads in one decoder layer.
#[derive(Clone, Debug)]
pub struct CrossRecord {
    pub stack_weights: Mat,
    pub buffer_weights: Mat,
    /// Per-head outputs before the output projection, head-major.
    pub head_outputs: Vec<Mat>,
}

pub struct DecoderOutput {
    pub logits: Var,
    pub cross: Vec<CrossRecord>,
}

/// Source of dropout masks; `None` disables dropout.
pub type DropoutRng<'a> = Option<&'a mut ChaCha8Rng>;

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub scheme: Scheme,
    pub params: Params,
    /// Longest training sequence; used for the decoding length cap.
    pub max_target_len: usize,
}

struct Ctx<'a, 'r> {
    tape: Tape,
    model: &'a Model,
    vars: Vec<Option<Var>>,
    dropout: DropoutRng<'r>,
}

impl<'a, 'r> Ctx<'a, 'r> {
    fn p(&mut self, name: &str) -> Var {
        let i = self.model.params.index(name).unwrap_or_else(|| panic!("no parameter {name}"));
        if let Some(v) = self.vars[i] {
            return v;
        }
        let v = self.tape.param(i, &self.model.params.mats[i]);
        self.vars[i] = Some(v);
        v
    }

    fn linear(&mut self, x: Var, w: &str, b: &str) -> Var {
        let w = self.p(w);
        let b = self.p(b);
        let y = self.tape.matmul(x, w);
        self.tape.add_row(y, b)
    }

    fn layer_norm(&mut self, x: Var, prefix: &str) -> Var {
        let g = self.p(&format!("{prefix}.g"));
        let b = self.p(&format!("{prefix}.b"));
        self.tape.layer_norm(x, g, b)
    }

    fn dropout(&mut self, x: Var) -> Var {
        let rate = self.model.config.dropout;
        let Some(rng) = self.dropout.as_deref_mut() else { return x };
        if rate == 0.0 {
            return x;
        }
        let (r, c) = self.tape.value(x).shape();
        let keep = 1.0 / (1.0 - rate);
        let data = (0..r * c).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        self.tape.mul_const(x, Mat::from_vec(r, c, data))
    }

    /// Multi-head attention; `masks[h]` is added to head `h`'s scores.
    fn attention(&mut self, xq: Var, xkv: Var, prefix: &str, masks: &[Option<Mat>]) -> (Var, Vec<Var>, Vec<Var>) {
        let d = self.model.config.d_model;
        let h = self.model.config.heads;
        let dk = d / h;
        let wq = self.p(&format!("{prefix}.wq"));
        let wk = self.p(&format!("{prefix}.wk"));
        let wv = self.p(&format!("{prefix}.wv"));
        let q = self.tape.matmul(xq, wq);
        let k = self.tape.matmul(xkv, wk);
        let v = self.tape.matmul(xkv, wv);
        let mut outs = Vec::with_capacity(h);
        let mut weights = Vec::with_capacity(h);
        for head in 0..h {
            let qh = self.tape.cols_slice(q, head * dk, dk);
            let kh = self.tape.cols_slice(k, head * dk, dk);
            let vh = self.tape.cols_slice(v, head * dk, dk);
            let s = self.tape.matmul_t(qh, kh);
            let mut s = self.tape.scale(s, 1.0 / (dk as f64).sqrt());
            if let Some(m) = &masks[head] {
                let m = self.tape.constant(m.clone());
                s = self.tape.add(s, m);
            }
            let w = self.tape.softmax(s);
            weights.push(w);
            outs.push(self.tape.matmul(w, vh));
        }
        let cat = self.tape.concat_cols(&outs);
        let o = self.linear(cat, &format!("{prefix}.wo"), &format!("{prefix}.bo"));
        (o, weights, outs)
    }

    fn feed_forward(&mut self, x: Var, prefix: &str) -> Var {
        let h = self.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"));
        let h = self.tape.gelu(h);
        self.linear(h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    fn embed(&mut self, table: &str, ids: &[usize]) -> Var {
        let d = self.model.config.d_model;
        let t = self.p(table);
        let e = self.tape.gather_rows(t, ids);
        let e = self.tape.scale(e, (d as f64).sqrt());
        let pe = self.tape.constant(positional_encoding(ids.len(), d));
        let x = self.tape.add(e, pe);
        self.dropout(x)
    }

    fn encoder(&mut self, word_ids: &[usize]) -> Var {
        let mut ids = Vec::with_capacity(word_ids.len() + 1);
        ids.push(SENTINEL);
        ids.extend_from_slice(word_ids);
        let mut x = self.embed("enc.emb", &ids);
        let none = vec![None; self.model.config.heads];
        for l in 0..self.model.config.layers {
            let p = format!("enc.{l}");
            let h = self.layer_norm(x, &format!("{p}.ln1"));
            let (a, _, _) = self.attention(h, h, &format!("{p}.att"), &none);
            let a = self.dropout(a);
            x = self.tape.add(x, a);
            let h = self.layer_norm(x, &format!("{p}.ln2"));
            let f = self.feed_forward(h, &format!("{p}.ff"));
            let f = self.dropout(f);
            x = self.tape.add(x, f);
        }
        self.layer_norm(x, "enc.ln")
    }

    fn decoder(&mut self, enc: Var, inputs: &[usize], masks: &[MaskPair]) -> DecoderOutput {
        let cfg = &self.model.config;
        let heads = cfg.heads;
        let specialized = cfg.specialized_heads;
        let mut x = self.embed("dec.emb", inputs);
        let mut self_masks = vec![None; heads];
        let causal = causal_mask(inputs.len());
        self_masks.iter_mut().for_each(|m| *m = Some(causal.clone()));
        let mut cross_masks = vec![None; heads];
        if specialized {
            cross_masks[0] = Some(head_mask(masks, true));
            cross_masks[1] = Some(head_mask(masks, false));
        }
        let mut cross = Vec::new();
        for l in 0..self.model.config.layers {
            let p = format!("dec.{l}");
            let h = self.layer_norm(x, &format!("{p}.ln1"));
            let (a, _, _) = self.attention(h, h, &format!("{p}.self"), &self_masks);
            let a = self.dropout(a);
            x = self.tape.add(x, a);
            let h = self.layer_norm(x, &format!("{p}.ln2"));
            let (a, w, outs) = self.attention(h, enc, &format!("{p}.cross"), &cross_masks);
            cross.push(CrossRecord {
                stack_weights: self.tape.value(w[0]).clone(),
                buffer_weights: self.tape.value(w[1.min(w.len() - 1)]).clone(),
                head_outputs: outs.iter().map(|o| self.tape.value(*o).clone()).collect(),
            });
            let a = self.dropout(a);
            x = self.tape.add(x, a);
            let h = self.layer_norm(x, &format!("{p}.ln3"));
            let f = self.feed_forward(h, &format!("{p}.ff"));
            let f = self.dropout(f);
            x = self.tape.add(x, f);
        }
        let h = self.layer_norm(x, "dec.ln");
        let logits = self.linear(h, "out.w", "out.b");
        DecoderOutput { logits, cross }
    }
}

/// Teacher-forced training example.
#[derive(Clone, Debug)]
pub struct Example {
    pub words: Vec<usize>,
    pub targets: Vec<usize>,
    /// Mask pair before each target token (`targets.len()` entries).
    pub masks: Vec<MaskPair>,
}

/// Result of one teacher-forced forward pass on a tape.
pub struct Forward<'a> {
    pub tape: Tape,
    pub logits: Var,
    pub loss: Option<Var>,
    pub cross: Vec<CrossRecord>,
    model: &'a Model,
}

impl Forward<'_> {
    /// Row-wise softmax of the logits.
    pub fn distributions(&self) -> Mat {
        crate::mat::masked_softmax_rows(self.tape.value(self.logits), None).expect("finite logits")
    }

    pub fn loss_value(&self) -> Option<f64> {
        self.loss.map(|l| self.tape.value(l).data[0])
    }

    pub fn gradients(&self) -> Vec<Option<Mat>> {
        let loss = self.loss.expect("forward pass without targets");
        self.tape.backward(loss, self.model.params.len()).0
    }
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, scheme: Scheme, max_target_len: usize) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let mut init = Init {
            params: Params {
                names: Vec::new(),
                mats: Vec::new(),
            },
            rng: &mut rng,
        };
        init.embedding("enc.emb".into(), vocab.n_words(), d);
        init.embedding("dec.emb".into(), vocab.n_tokens() + 1, d);
        for l in 0..config.layers {
            let p = format!("enc.{l}");
            init.layer_norm(&format!("{p}.ln1"), d);
            init.attention(&format!("{p}.att"), d);
            init.layer_norm(&format!("{p}.ln2"), d);
            init.feed_forward(&format!("{p}.ff"), d, config.d_ff);
        }
        init.layer_norm("enc.ln", d);
        for l in 0..config.layers {
            let p = format!("dec.{l}");
            init.layer_norm(&format!("{p}.ln1"), d);
            init.attention(&format!("{p}.self"), d);
            init.layer_norm(&format!("{p}.ln2"), d);
            init.attention(&format!("{p}.cross"), d);
            init.layer_norm(&format!("{p}.ln3"), d);
            init.feed_forward(&format!("{p}.ff"), d, config.d_ff);
        }
        init.layer_norm("dec.ln", d);
        init.xavier("out.w".into(), d, vocab.n_tokens());
        init.add("out.b".into(), Mat::zeros(1, vocab.n_tokens()));
        let params = init.params;
        Ok(Model {
            config,
            vocab,
            scheme,
            params,
            max_target_len,
        })
    }

    fn ctx<'r>(&self, dropout: DropoutRng<'r>) -> Ctx<'_, 'r> {
        Ctx {
            tape: Tape::new(),
            model: self,
            vars: vec![None; self.params.len()],
            dropout,
        }
    }

    fn check_len(&self, len: usize) -> Result<(), ModelError> {
        if len > self.config.max_positions {
            return Err(ModelError::TooLong {
                len,
                max: self.config.max_positions,
            });
        }
        Ok(())
    }

    /// Encoder states for a sentence, sentinel row first.
    pub fn encode(&self, word_ids: &[usize]) -> Result<Mat, ModelError> {
        if word_ids.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        self.check_len(word_ids.len() + 1)?;
        let mut ctx = self.ctx(None);
        let enc = ctx.encoder(word_ids);
        Ok(ctx.tape.value(enc).clone())
    }

    /// Decoder logits given fixed encoder states; `inputs[0]` is the
    /// begin-of-sequence id and `masks[t]` the mask pair at step `t`.
    pub fn decode_with_encoding(
        &self,
        enc: &Mat,
        inputs: &[usize],
        masks: &[MaskPair],
    ) -> Result<(Mat, Vec<CrossRecord>), ModelError> {
        self.check_len(inputs.len())?;
        if masks.len() != inputs.len() {
            return Err(ModelError::MaskCount {
                expected: inputs.len(),
                got: masks.len(),
            });
        }
        let mut ctx = self.ctx(None);
        let e = ctx.tape.constant(enc.clone());
        let out = ctx.decoder(e, inputs, masks);
        Ok((ctx.tape.value(out.logits).clone(), out.cross))
    }

    /// Teacher-forced pass over a full example, recording the loss.
    pub fn forward<'m>(&'m self, ex: &Example, dropout: DropoutRng<'_>) -> Result<Forward<'m>, ModelError> {
        if ex.words.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        self.check_len(ex.words.len() + 1)?;
        self.check_len(ex.targets.len())?;
        if ex.masks.len() != ex.targets.len() {
            return Err(ModelError::MaskCount {
                expected: ex.targets.len(),
                got: ex.masks.len(),
            });
        }
        let mut inputs = Vec::with_capacity(ex.targets.len());
        inputs.push(self.vocab.bos());
        inputs.extend_from_slice(&ex.targets[..ex.targets.len().saturating_sub(1)]);
        let mut ctx = self.ctx(dropout);
        let enc = ctx.encoder(&ex.words);
        let out = ctx.decoder(enc, &inputs, &ex.masks);
        let loss = ctx.tape.cross_entropy(out.logits, &ex.targets, self.config.label_smoothing);
        Ok(Forward {
            tape: ctx.tape,
            logits: out.logits,
            loss: Some(loss),
            cross: out.cross,
            model: self,
        })
    }
}
