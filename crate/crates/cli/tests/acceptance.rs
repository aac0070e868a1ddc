//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any FAIL.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use discoseq::decoder::{decode, DecodeOptions};
use discoseq::mask::{trace, MaskPair};
use discoseq::metrics::{f1, EvalOptions};
use discoseq::oracle::encode;
use discoseq::sample::{random_tree, SampleConfig};
use discoseq::transition::{Configuration, Disco, Scheme, Transition};
use discoseq::tree::Tree;
use discoseq::treebank::{load_treebank, parse_bracketed, parse_discbracket, Format, Treebank};
use discoseq_neural::checkpoint;
use discoseq_neural::gradcheck::grad_check;
use discoseq_neural::mat::Mat;
use discoseq_neural::masked_attention;
use discoseq_neural::model::{Model, ModelConfig};
use discoseq_neural::train::prepare;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn allerdings() -> Tree {
    load_treebank(fixture("allerdings.disc"), Format::Discbracket).unwrap().trees.remove(0)
}

fn schemes_for(tree: &Tree) -> Vec<Scheme> {
    Scheme::all()
        .into_iter()
        .filter(|s| s.handles_discontinuity() || tree.is_continuous())
        .collect()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn worked_examples() -> Outcome {
    let tree = allerdings();
    let cases = [
        (
            Scheme::in_order().with_disco(Disco::Swap),
            "SHIFT NT(VP) SHIFT SHIFT SWAP NT(PP) SHIFT SHIFT SWAP SHIFT SHIFT SWAP REDUCE",
        ),
        (
            Scheme::in_order().with_disco(Disco::ShiftK),
            "SHIFT#0 NT(VP) SHIFT#1 NT(PP) SHIFT#1 SHIFT#1 REDUCE",
        ),
    ];
    for (scheme, expected) in cases {
        let got = encode(&tree, scheme).map_err(|e| e.to_string())?.token_strings();
        let want: Vec<&str> = expected.split(' ').collect();
        check(got.len() >= want.len() && got[..want.len()] == want[..], || {
            format!("{scheme}: got {}", got.join(" "))
        })?;
    }
    Ok("13-token in-order+swap and 7-token in-order+shiftk prefixes match".into())
}

fn roundtrip_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SampleConfig::default();
    let (mut trees, mut disc, mut pairs) = (0, 0, 0);
    while trees < 1200 {
        let tree = random_tree(&mut rng, &cfg);
        trees += 1;
        disc += usize::from(!tree.is_continuous());
        for scheme in schemes_for(&tree) {
            let lin = encode(&tree, scheme).map_err(|e| format!("{scheme}: {e} on {tree}"))?;
            let out = decode(tree.words(), &lin.tokens, scheme, &DecodeOptions::default()).map_err(|e| e.to_string())?;
            check(out.tree == tree && out.repairs.is_empty(), || format!("{scheme} fails on {tree}"))?;
            pairs += 1;
        }
    }
    check(disc > 100 && disc < trees, || format!("generator gave {disc} discontinuous of {trees}"))?;
    Ok(format!("{trees} trees ({disc} discontinuous), {pairs} tree/scheme pairs"))
}

fn mask_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = SampleConfig::default();
    let (mut sequences, mut steps) = (0, 0);
    while sequences < 300 {
        let tree = random_tree(&mut rng, &cfg);
        for scheme in schemes_for(&tree) {
            let tokens = encode(&tree, scheme).map_err(|e| e.to_string())?.tokens;
            let masks = trace(tree.len(), &tokens, scheme).map_err(|e| e.to_string())?;
            let mut c = Configuration::initial(tree.len()).map_err(|e| e.to_string())?;
            check(masks[0] == MaskPair::from_configuration(&c), || format!("{scheme} step 0 on {tree}"))?;
            for (i, t) in tokens.iter().enumerate() {
                c = c.apply(t, scheme).map_err(|e| e.to_string())?;
                check(masks[i + 1] == MaskPair::from_configuration(&c), || {
                    format!("{scheme} step {} on {tree}", i + 1)
                })?;
                steps += 1;
            }
            sequences += 1;
        }
    }
    Ok(format!("{sequences} sequences, {steps} steps"))
}

fn states(tree: &Tree, scheme: Scheme) -> Vec<Configuration> {
    let mut c = Configuration::initial(tree.len()).unwrap();
    let mut out = vec![c.clone()];
    for t in encode(tree, scheme).unwrap().tokens {
        c = c.apply(&t, scheme).unwrap();
        out.push(c.clone());
    }
    out
}

fn equivalence_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SampleConfig::default();
    let shiftk = Scheme::in_order().with_disco(Disco::ShiftK);
    let swapk = Scheme::in_order().with_disco(Disco::SwapK);
    let (mut compared, mut legal) = (0, 0);
    let mut same = |a: Result<Configuration, _>, b: Result<Configuration, _>, what: &str| -> Result<(), String> {
        compared += 1;
        match (a, b) {
            (Ok(a), Ok(b)) => {
                legal += 1;
                check(a == b, || format!("{what}: configurations differ"))
            }
            (Err(_), Err(_)) => Ok(()),
            _ => Err(format!("{what}: legality differs")),
        }
    };
    for _ in 0..300 {
        let tree = random_tree(&mut rng, &cfg);
        for c in states(&tree, shiftk) {
            same(c.apply(&Transition::Shift, shiftk), c.apply(&Transition::shift_k(0), shiftk), "SHIFT#0")?;
        }
        let swap_states = states(&tree, swapk)
            .into_iter()
            .chain(states(&tree, Scheme::bottom_up().with_disco(Disco::Swap)));
        for c in swap_states {
            same(c.apply(&Transition::Swap, swapk), c.apply(&Transition::swap_k(1), swapk), "SWAP#1")?;
            let k = rng.gen_range(1..5);
            let mut stepwise = Ok(c.clone());
            for _ in 0..k {
                stepwise = stepwise.and_then(|c| c.apply(&Transition::Swap, swapk));
            }
            same(c.apply(&Transition::swap_k(k), swapk), stepwise, "SWAP#k")?;
        }
    }
    check(legal > 1000, || format!("only {legal} legal comparisons"))?;
    Ok(format!("{compared} comparisons, {legal} with legal moves"))
}

fn fixture_trees() -> Vec<(String, Treebank)> {
    ["allerdings.disc", "one_tree.disc", "toy20.disc", "small.mrg"]
        .iter()
        .map(|name| {
            let format = if name.ends_with(".mrg") { Format::Bracketed } else { Format::Discbracket };
            (name.to_string(), load_treebank(fixture(name), format).unwrap())
        })
        .collect()
}

fn length_law() -> Outcome {
    let shiftk = Scheme::in_order().with_disco(Disco::ShiftK);
    let mut n = 0;
    for (name, tb) in fixture_trees() {
        for (i, tree) in tb.iter().enumerate() {
            let a = encode(tree, shiftk).map_err(|e| e.to_string())?.len();
            let b = encode(&tree.to_canonical_continuous(), Scheme::in_order()).map_err(|e| e.to_string())?.len();
            check(a == b, || format!("{name} tree {}: {a} vs {b}", i + 1))?;
            n += 1;
        }
    }
    Ok(format!("{n} fixture trees"))
}

fn attention() -> Outcome {
    let tb = load_treebank(fixture("toy20.disc"), Format::Discbracket).unwrap();
    let scheme = Scheme::in_order().with_disco(Disco::Swap);
    let (vocab, examples, max_len) = prepare(&tb, scheme).map_err(|e| e.to_string())?;
    let model = Model::new(ModelConfig::toy(), vocab, scheme, max_len).map_err(|e| e.to_string())?;
    let mut masked = 0;
    for ex in &examples {
        let fwd = model.forward(ex, None).map_err(|e| e.to_string())?;
        for layer in &fwd.cross {
            for (t, pair) in ex.masks.iter().enumerate() {
                for w in 0..pair.len() {
                    for (mask, weights) in [(&pair.stack, &layer.stack_weights), (&pair.buffer, &layer.buffer_weights)] {
                        if mask[w] != 0.0 {
                            masked += 1;
                            check(weights.get(t, w + 1) == 0.0, || format!("nonzero weight at step {t}, word {w}"))?;
                        }
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (q, k, v) = (Mat::uniform(4, 6, 2.0, &mut rng), Mat::uniform(7, 6, 2.0, &mut rng), Mat::uniform(7, 3, 1.0, &mut rng));
        let mut mask = Mat::zeros(4, 7);
        for r in 0..4 {
            for c in 0..7 {
                if c != r && rng.gen_bool(0.5) {
                    mask.set(r, c, f64::NEG_INFINITY);
                }
            }
        }
        let (_, w) = masked_attention(&q, &k, &v, &mask).map_err(|e| e.to_string())?;
        for r in 0..4 {
            for c in 0..7 {
                if mask.get(r, c) != 0.0 {
                    masked += 1;
                    check(w.get(r, c) == 0.0, || "masked_attention leaks weight".into())?;
                }
            }
        }
    }

    let tiny = |specialized| ModelConfig {
        d_model: 8,
        layers: 1,
        heads: 2,
        d_ff: 16,
        specialized_heads: specialized,
        label_smoothing: 0.1,
        ..ModelConfig::toy()
    };
    let small = Treebank::new(vec![parse_discbracket("(S (VP 0=a 2=c) 1=b)").unwrap()], "small");
    let mut worst: f64 = 0.0;
    for specialized in [true, false] {
        let (vocab, examples, max_len) = prepare(&small, scheme).map_err(|e| e.to_string())?;
        let model = Model::new(tiny(specialized), vocab, scheme, max_len).map_err(|e| e.to_string())?;
        let report = grad_check(&model, &examples, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(report.max_rel_error);
    }
    check(worst < 1e-4, || format!("max relative gradient error {worst:.2e}"))?;
    Ok(format!("{masked} masked weights exactly zero, max relative gradient error {worst:.2e}"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_discoseq"))
}

fn run_bin(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`discoseq {}` failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn toy_overfit(dir: &Path) -> Outcome {
    let toy = fixture("toy20.disc");
    let toy = toy.to_str().unwrap();
    let ckpt = dir.join("toy.ckpt");
    let pred = dir.join("pred.disc");
    let log = run_bin(&[
        "train", "--scheme", "inorder+swap", "--in", toy, "--checkpoint", ckpt.to_str().unwrap(), "--preset", "toy",
        "--until-exact",
    ])?;
    let last = log.lines().last().unwrap_or_default().to_string();
    run_bin(&[
        "predict", "--checkpoint", ckpt.to_str().unwrap(), "--trees", toy, "--beam", "1", "--out", pred.to_str().unwrap(),
    ])?;
    let report = run_bin(&["eval", "--gold", toy, "--pred", pred.to_str().unwrap(), "--json"])?;
    let v: serde_json::Value = serde_json::from_str(report.trim()).map_err(|e| e.to_string())?;
    let (f, df, em) = (v["all"]["f1"].as_f64(), v["disc"]["f1"].as_f64(), v["exact_match"].as_f64());
    check(f == Some(100.0) && df == Some(100.0) && em == Some(1.0), || format!("eval gave {report}"))?;
    let epoch = last.split('\t').next().unwrap_or("?");
    Ok(format!("exact match 100% after {epoch} epochs; eval F1 100.00, DF1 100.00"))
}

fn metrics_sanity() -> Outcome {
    let variants = [(false, false), (true, false), (false, true), (true, true)];
    for (name, tb) in fixture_trees() {
        for (drop_punct, ignore_root) in variants {
            let opts = EvalOptions {
                drop_punct,
                ignore_root,
                ..EvalOptions::default()
            };
            let s = f1(&tb, &tb, &opts).map_err(|e| e.to_string())?;
            check(s.f1 == 100.0, || format!("{name}: gold vs gold F1 {}", s.f1))?;
        }
    }
    let gold = Treebank::new(vec![parse_bracketed("(S (NP a) (VP b))").unwrap()], "g");
    let pred = Treebank::new(vec![parse_bracketed("(S (NP a) (NP b))").unwrap()], "p");
    let opts = EvalOptions {
        ignore_root: true,
        ..EvalOptions::default()
    };
    let s = f1(&gold, &pred, &opts).map_err(|e| e.to_string())?;
    check((s.precision, s.recall, s.f1) == (50.0, 50.0, 50.0), || format!("hand example gave {s:?}"))?;
    Ok("gold vs gold 100.00 on all fixtures; hand example 50.00".into())
}

fn masked_prediction(dir: &Path) -> Outcome {
    let model = checkpoint::load(dir.join("toy.ckpt")).map_err(|e| format!("needs the criterion 7 checkpoint: {e}"))?;
    let tb = load_treebank(fixture("toy20.disc"), Format::Discbracket).unwrap();
    for beam in [1, 10] {
        let mut repairs = 0;
        for tree in tb.iter() {
            let pred = model.predict(tree.words(), beam).map_err(|e| e.to_string())?;
            let out = decode(tree.words(), &pred.tokens, model.scheme, &DecodeOptions::default()).map_err(|e| e.to_string())?;
            repairs += out.repairs.len();
        }
        check(repairs == 0, || format!("beam {beam}: {repairs} repairs"))?;
    }
    Ok(format!("beam 1 and beam 10 on {} sentences need no repairs", tb.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let secs = Duration::from_secs;
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 worked-example fidelity", secs(1), Box::new(worked_examples)),
        ("2 round-trip suite", secs(60), Box::new(roundtrip_suite)),
        ("3 mask-engine oracle equivalence", secs(30), Box::new(mask_equivalence)),
        ("4 equivalence laws", Duration::MAX, Box::new(equivalence_laws)),
        ("5 length law", Duration::MAX, Box::new(length_law)),
        ("6 attention correctness", secs(60), Box::new(attention)),
        ("7 toy overfit", secs(600), Box::new(|| toy_overfit(dir.path()))),
        ("8 metrics sanity", Duration::MAX, Box::new(metrics_sanity)),
        ("9 legality-masked prediction", Duration::MAX, Box::new(|| masked_prediction(dir.path()))),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > limit => Err(format!("{msg}, but took longer than {:.0} s", limit.as_secs_f64())),
            other => other,
        };
        let t = elapsed.as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS  {name} ({t:.2} s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name} ({t:.2} s): {msg}");
            }
        }
    }
    println!("SKIP  10 PTB table statistics: needs a licensed treebank, see README");
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
