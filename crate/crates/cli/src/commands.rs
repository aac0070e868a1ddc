use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use discoseq::decoder::{decode, DecodeOptions, RepairStats};
use discoseq::mask::{trace, trace_rows};
use discoseq::metrics::{score_sentence, EvalOptions, Evaluation, ZeroDenominator};
use discoseq::oracle::{encode, vocab_stats};
use discoseq::transition::{parse_tokens, render_tokens, Scheme, Transition};
use discoseq::tree::Tree;
use discoseq::treebank::{emit_sentence, load_treebank, parse_sentence, Format, Treebank};
use discoseq_neural::checkpoint;
use discoseq_neural::model::ModelConfig;
use discoseq_neural::train::TrainOptions;
use serde_json::json;

use crate::io::{input, numbered_lines, output, tree_format, Jobs};
use crate::Failure;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn data(msg: impl std::fmt::Display) -> Failure {
    Failure::Data(anyhow!("{msg}"))
}

fn load(path: &Path, format: Option<Format>) -> Result<Treebank, Failure> {
    let format = tree_format(format, path);
    load_treebank(path, format).map_err(data)
}

fn parse_tree(format: Format, line: &str, source: &Path, line_no: usize) -> Result<Tree, Failure> {
    format
        .parse(line)
        .map_err(|e| data(format!("{}:{line_no}: {e}", source.display())))
}

#[allow(clippy::too_many_arguments)]
pub fn linearize(
    scheme: Scheme,
    path: &Path,
    format: Option<Format>,
    out: Option<&Path>,
    sentences_out: Option<&Path>,
    jsonl: bool,
    jobs: usize,
) -> Result<(), Failure> {
    let format = tree_format(format, path);
    let jobs = Jobs::new(jobs)?;
    let mut out = output(out)?;
    let mut sent_out = sentences_out.map(|p| output(Some(p))).transpose()?;
    let lines = numbered_lines(input(path)?, path.display().to_string());
    jobs.map_ordered(
        lines,
        |(line_no, line)| {
            let tree = parse_tree(format, &line, path, line_no)?;
            let lin = encode(&tree, scheme).map_err(|e| data(format!("{}:{line_no}: {e}", path.display())))?;
            Ok((emit_sentence(tree.words()), lin.to_string()))
        },
        |(sentence, tokens)| {
            if jsonl {
                let obj = json!({"sentence": sentence, "scheme": scheme.to_string(), "tokens": tokens});
                writeln!(out, "{obj}")?;
            } else {
                writeln!(out, "{tokens}")?;
            }
            if let Some(w) = sent_out.as_mut() {
                writeln!(w, "{sentence}")?;
            }
            Ok(())
        },
    )?;
    out.flush()?;
    if let Some(mut w) = sent_out {
        w.flush()?;
    }
    Ok(())
}

struct DecodeJob {
    line_no: usize,
    scheme: Scheme,
    words: Vec<String>,
    tokens: Vec<Transition>,
}

fn json_job(line_no: usize, line: &str, scheme: Option<Scheme>) -> Result<DecodeJob, Failure> {
    let bad = |what: &str| data(format!("tokens line {line_no}: {what}"));
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
    let field = |name: &str| value.get(name).and_then(|v| v.as_str());
    let sentence = field("sentence").ok_or_else(|| bad("missing \"sentence\""))?;
    let tokens = field("tokens").ok_or_else(|| bad("missing \"tokens\""))?;
    let line_scheme = field("scheme")
        .map(|s| s.parse::<Scheme>().map_err(|e| bad(&e.to_string())))
        .transpose()?;
    let scheme = match (scheme, line_scheme) {
        (Some(a), Some(b)) if a != b => return Err(bad(&format!("scheme {b} differs from --scheme {a}"))),
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(usage("--scheme is required when token lines carry no scheme")),
    };
    Ok(DecodeJob {
        line_no,
        scheme,
        words: parse_sentence(sentence),
        tokens: parse_tokens(tokens).map_err(|e| bad(&format!("bad token `{}`", e.0)))?,
    })
}

pub fn delinearize(
    scheme: Option<Scheme>,
    sentences: Option<&Path>,
    tokens: &Path,
    out: Option<&Path>,
    fallback_label: String,
    jobs: usize,
) -> Result<(), Failure> {
    let jobs = Jobs::new(jobs)?;
    let opts = DecodeOptions { fallback_label };
    let mut out = output(out)?;
    let mut stats = RepairStats::default();
    let token_lines = numbered_lines(input(tokens)?, tokens.display().to_string());

    let items: Box<dyn Iterator<Item = Result<DecodeJob, Failure>>> = match sentences {
        None => Box::new(token_lines.map(move |r| r.and_then(|(n, line)| json_job(n, &line, scheme)))),
        Some(path) => {
            let scheme = scheme.ok_or_else(|| usage("--scheme is required with --sentences"))?;
            let mut sents = numbered_lines(input(path)?, path.display().to_string());
            let mut toks = token_lines;
            Box::new(std::iter::from_fn(move || match (sents.next(), toks.next()) {
                (None, None) => None,
                (Some(Err(e)), _) | (_, Some(Err(e))) => Some(Err(e)),
                (Some(Ok((n, s))), Some(Ok((_, t)))) => Some(
                    parse_tokens(&t)
                        .map_err(|e| data(format!("tokens line {n}: bad token `{}`", e.0)))
                        .map(|tokens| DecodeJob {
                            line_no: n,
                            scheme,
                            words: parse_sentence(&s),
                            tokens,
                        }),
                ),
                _ => Some(Err(data("sentence and token files have different lengths"))),
            }))
        }
    };

    jobs.map_ordered(
        items,
        |job| {
            decode(&job.words, &job.tokens, job.scheme, &opts).map_err(|e| data(format!("line {}: {e}", job.line_no)))
        },
        |decoded| {
            stats.add(&decoded);
            writeln!(out, "{}", decoded.tree)?;
            Ok(())
        },
    )?;
    out.flush()?;
    eprintln!("{stats}");
    Ok(())
}

pub fn roundtrip(scheme: Scheme, path: &Path, format: Option<Format>) -> Result<(), Failure> {
    let treebank = load(path, format)?;
    let mut out = output(None)?;
    let (mut unencodable, mut mismatched) = (0, 0);
    for (i, tree) in treebank.iter().enumerate() {
        let lin = match encode(tree, scheme) {
            Ok(lin) => lin,
            Err(e) => {
                writeln!(out, "tree {}: cannot encode: {e}", i + 1)?;
                unencodable += 1;
                continue;
            }
        };
        let decoded = decode(tree.words(), &lin.tokens, scheme, &DecodeOptions::default())
            .map_err(|e| Failure::Internal(anyhow!("tree {}: {e}", i + 1)))?;
        if decoded.tree != *tree || !decoded.repairs.is_empty() {
            mismatched += 1;
            writeln!(out, "tree {}:", i + 1)?;
            writeln!(out, "  input   {tree}")?;
            writeln!(out, "  tokens  {lin}")?;
            writeln!(out, "  decoded {}", decoded.tree)?;
            let rules: Vec<String> = decoded.rules().iter().map(|r| r.to_string()).collect();
            writeln!(out, "  repairs {}", if rules.is_empty() { "-".to_string() } else { rules.join(",") })?;
        }
    }
    out.flush()?;
    if mismatched > 0 {
        return Err(Failure::Internal(anyhow!(
            "{mismatched} of {} trees did not round-trip under {scheme}",
            treebank.len()
        )));
    }
    if unencodable > 0 {
        return Err(data(format!("{unencodable} of {} trees cannot be encoded under {scheme}", treebank.len())));
    }
    eprintln!("{} trees round-trip under {scheme}", treebank.len());
    Ok(())
}

fn scheme_list(spec: &str) -> Result<Vec<Scheme>, Failure> {
    if spec == "all" {
        return Ok(Scheme::all());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Scheme>().map_err(usage))
        .collect()
}

pub fn stats(spec: &str, path: &Path, format: Option<Format>, json: bool, dict: bool) -> Result<(), Failure> {
    let schemes = scheme_list(spec)?;
    let all = spec == "all";
    let treebank = load(path, format)?;
    let mut out = output(None)?;
    if !json {
        writeln!(out, "{:<22} {:>6} {:>10}", "scheme", "size", "max_length")?;
    }
    for scheme in schemes {
        let stats = match vocab_stats(&treebank, scheme) {
            Ok(s) => s,
            // continuous-only schemes are skipped when listing everything
            Err(e) if all => {
                eprintln!("{scheme}: {e}");
                continue;
            }
            Err(e) => return Err(data(e)),
        };
        if json {
            let mut obj = json!({"scheme": scheme.to_string(), "size": stats.size, "max_length": stats.max_length});
            if dict {
                obj["dictionary"] = json!(stats.dictionary);
            }
            writeln!(out, "{obj}")?;
        } else {
            writeln!(out, "{:<22} {:>6} {:>10}", scheme.to_string(), stats.size, stats.max_length)?;
            if dict {
                let words: Vec<&str> = stats.dictionary.iter().map(String::as_str).collect();
                writeln!(out, "  {}", words.join(" "))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn mask_trace(scheme: Scheme, tree: &str, format: Format, tokens: Option<&str>, json: bool) -> Result<(), Failure> {
    let tree = format.parse(tree).map_err(|e| data(format!("--tree: {e}")))?;
    let tokens = match tokens {
        Some(t) => parse_tokens(t).map_err(|e| data(format!("--tokens: bad token `{}`", e.0)))?,
        None => encode(&tree, scheme).map_err(data)?.tokens,
    };
    let masks = trace(tree.len(), &tokens, scheme).map_err(data)?;
    let mut out = output(None)?;
    if !json {
        writeln!(out, "step\ttoken\tstack\tbuffer")?;
    }
    for row in trace_rows(&masks, &tokens, scheme) {
        if json {
            writeln!(out, "{}", serde_json::to_string(&row).map_err(anyhow::Error::from)?)?;
        } else {
            writeln!(out, "{row}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    gold: &Path,
    pred: &Path,
    format: Option<Format>,
    no_punct: bool,
    ignore_root: bool,
    zero_if_undefined: bool,
    json: bool,
    jobs: usize,
) -> Result<(), Failure> {
    let opts = EvalOptions {
        drop_punct: no_punct,
        ignore_root,
        zero_denominator: if zero_if_undefined {
            ZeroDenominator::Zero
        } else {
            ZeroDenominator::Perfect
        },
        ..EvalOptions::default()
    };
    let (gold_format, pred_format) = (tree_format(format, gold), tree_format(format, pred));
    let jobs = Jobs::new(jobs)?;
    let mut golds = numbered_lines(input(gold)?, gold.display().to_string());
    let mut preds = numbered_lines(input(pred)?, pred.display().to_string());
    let mut index = 0;
    let pairs = std::iter::from_fn(move || {
        let item = match (golds.next(), preds.next()) {
            (None, None) => return None,
            (Some(Err(e)), _) | (_, Some(Err(e))) => Err(e),
            (Some(Ok(g)), Some(Ok(p))) => Ok((index, g, p)),
            (Some(_), None) | (None, Some(_)) => Err(data("gold and prediction have different numbers of trees")),
        };
        index += 1;
        Some(item)
    });
    let mut sentences = Vec::new();
    jobs.map_ordered(
        pairs,
        |(i, (gn, gl), (pn, pl))| {
            let g = parse_tree(gold_format, &gl, gold, gn)?;
            let p = parse_tree(pred_format, &pl, pred, pn)?;
            score_sentence(i, &g, &p, &opts).map_err(|e| data(format!("{e} (gold line {gn}, prediction line {pn})")))
        },
        |s| {
            sentences.push(s);
            Ok(())
        },
    )?;
    let evaluation = Evaluation::from_sentences(sentences, &opts);
    let mut out = output(None)?;
    if json {
        let summary = json!({
            "sentences": evaluation.sentences.len(),
            "all": evaluation.all,
            "disc": evaluation.disc,
            "exact_match": evaluation.exact_match,
        });
        writeln!(out, "{summary}")?;
    } else {
        writeln!(out, "{evaluation}")?;
    }
    out.flush()?;
    Ok(())
}

pub struct TrainArgs {
    pub scheme: Scheme,
    pub input: PathBuf,
    pub format: Option<Format>,
    pub checkpoint: PathBuf,
    pub preset: String,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub d_model: Option<usize>,
    pub eval_every: usize,
    pub until_exact: bool,
    pub jobs: Option<usize>,
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mut config = ModelConfig::preset(&args.preset).ok_or_else(|| usage(format!("unknown preset `{}`", args.preset)))?;
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.d_model {
        config.d_model = d;
    }
    config.validate().map_err(usage)?;
    let treebank = load(&args.input, args.format)?;

    let mut out = output(None)?;
    writeln!(out, "epoch\tloss\tlr\ttrain_exact_match")?;
    let mut log_error = None;
    let mut on_epoch = |s: &discoseq_neural::EpochStats| {
        let em = s.train_exact_match.map_or("-".to_string(), |m| format!("{:.4}", m));
        if let Err(e) = writeln!(out, "{}\t{:.6}\t{:.3e}\t{em}", s.epoch, s.loss, s.lr).and_then(|_| out.flush()) {
            log_error.get_or_insert(e);
        }
    };
    let opts = TrainOptions {
        threads: args.jobs,
        eval_every: args.eval_every,
        stop_at_exact_match: args.until_exact,
        on_epoch: Some(&mut on_epoch),
    };
    let (model, _) = discoseq_neural::train(&treebank, args.scheme, config, opts).map_err(data)?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    checkpoint::save(&model, &args.checkpoint)
        .with_context(|| format!("cannot write {}", args.checkpoint.display()))?;
    eprintln!("wrote {}", args.checkpoint.display());
    Ok(())
}

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub sentences: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub format: Option<Format>,
    pub beam: usize,
    pub out: Option<PathBuf>,
    pub tokens_out: Option<PathBuf>,
    pub fallback_label: String,
    pub jobs: usize,
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    if args.beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    let model = checkpoint::load(&args.checkpoint).with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let sentences: Box<dyn Iterator<Item = Result<(usize, Vec<String>), Failure>>> = match (&args.sentences, &args.trees) {
        (Some(path), None) => Box::new(
            numbered_lines(input(path)?, path.display().to_string()).map(|r| r.map(|(n, l)| (n, parse_sentence(&l)))),
        ),
        (None, Some(path)) => {
            let format = tree_format(args.format, path);
            let path = path.clone();
            Box::new(
                numbered_lines(input(&path)?, path.display().to_string())
                    .map(move |r| r.and_then(|(n, l)| Ok((n, parse_tree(format, &l, &path, n)?.words().to_vec())))),
            )
        }
        _ => return Err(usage("give exactly one of --sentences or --trees")),
    };
    let jobs = Jobs::new(args.jobs)?;
    let opts = DecodeOptions {
        fallback_label: args.fallback_label.clone(),
    };
    let mut out = output(args.out.as_deref())?;
    let mut tokens_out = args.tokens_out.as_deref().map(|p| output(Some(p))).transpose()?;
    let mut stats = RepairStats::default();
    let mut incomplete = 0;
    jobs.map_ordered(
        sentences,
        |(n, words)| {
            if words.is_empty() {
                return Err(data(format!("line {n}: empty sentence")));
            }
            let pred = model.predict(&words, args.beam).map_err(|e| data(format!("line {n}: {e}")))?;
            let decoded = decode(&words, &pred.tokens, model.scheme, &opts).map_err(|e| data(format!("line {n}: {e}")))?;
            Ok((pred, decoded))
        },
        |(pred, decoded)| {
            stats.add(&decoded);
            incomplete += usize::from(!pred.complete);
            writeln!(out, "{}", decoded.tree)?;
            if let Some(w) = tokens_out.as_mut() {
                writeln!(w, "{}", render_tokens(&pred.tokens, model.scheme))?;
            }
            Ok(())
        },
    )?;
    out.flush()?;
    if let Some(mut w) = tokens_out {
        w.flush()?;
    }
    eprintln!("{stats}");
    if incomplete > 0 {
        eprintln!("{incomplete} predictions hit the length cap");
    }
    Ok(())
}
