use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_discoseq"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn roundtrip_fixtures_exit_zero() {
    let toy = fixture("toy20.disc");
    for scheme in ["topdown+swap", "inorder+swap", "bottomup+swap", "inorder+swapk", "inorder+shiftk"] {
        let o = run(&["roundtrip", "--scheme", scheme, "--in", toy.to_str().unwrap()]);
        assert!(o.status.success(), "{scheme}: {}", stderr(&o));
    }
    let mrg = fixture("small.mrg");
    for scheme in ["topdown", "topdown:enriched", "inorder", "inorder:enriched", "bottomup"] {
        let o = run(&["roundtrip", "--scheme", scheme, "--in", mrg.to_str().unwrap()]);
        assert!(o.status.success(), "{scheme}: {}", stderr(&o));
    }
}

#[test]
fn roundtrip_reports_unencodable_trees() {
    let o = run(&["roundtrip", "--scheme", "inorder", "--in", fixture("allerdings.disc").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("tree 1: cannot encode"));
}

#[test]
fn stats_on_one_tree() {
    let o = run(&["stats", "--scheme", "inorder", "--in", fixture("one_tree.disc").to_str().unwrap(), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["size"], 4);
    assert_eq!(v["max_length"], 5);
}

#[test]
fn stats_all_skips_continuous_schemes_on_discontinuous_data() {
    let o = run(&["stats", "--in", fixture("toy20.disc").to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 6);
    assert!(out.contains("inorder+shiftk"));
    assert!(!out.contains("topdown:enriched"));
}

#[test]
fn eval_gold_against_gold() {
    for name in ["toy20.disc", "small.mrg", "allerdings.disc"] {
        let f = fixture(name);
        let o = run(&["eval", "--gold", f.to_str().unwrap(), "--pred", f.to_str().unwrap(), "--no-punct"]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("Bracketing FMeasure    =  100.00"), "{name}");
    }
}

#[test]
fn eval_mismatched_files_is_a_data_error() {
    let o = run(&[
        "eval",
        "--gold",
        fixture("toy20.disc").to_str().unwrap(),
        "--pred",
        fixture("allerdings.disc").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn eval_jobs_do_not_change_the_report() {
    let f = fixture("toy20.disc");
    let a = run(&["eval", "--gold", f.to_str().unwrap(), "--pred", f.to_str().unwrap()]);
    let b = run(&["eval", "--gold", f.to_str().unwrap(), "--pred", f.to_str().unwrap(), "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn linearize_then_delinearize_is_identity() {
    let toy = fixture("toy20.disc");
    let original = std::fs::read(&toy).unwrap();
    for scheme in ["topdown+swap", "inorder+swap", "bottomup+swap", "inorder+swapk", "inorder+shiftk"] {
        let lin = run(&["linearize", "--scheme", scheme, "--in", toy.to_str().unwrap(), "--jsonl", "--jobs", "3"]);
        assert!(lin.status.success());
        let mut child = bin()
            .args(["delinearize", "--jobs", "2"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(&lin.stdout).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success());
        assert_eq!(out.stdout, original, "{scheme}");
        assert!(stderr(&out).contains("0 repaired"));
    }
}

#[test]
fn separate_sentence_and_token_files() {
    let dir = tempfile::tempdir().unwrap();
    let (tokens, sents, trees) = (dir.path().join("t"), dir.path().join("s"), dir.path().join("d"));
    let toy = fixture("toy20.disc");
    let p = |x: &PathBuf| x.to_str().unwrap().to_string();
    let o = run(&[
        "linearize", "--scheme", "inorder+shiftk", "--in", &p(&toy), "--out", &p(&tokens), "--sentences-out", &p(&sents),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&tokens).unwrap();
    assert!(text.lines().next().unwrap().starts_with("SHIFT#"));
    let o = run(&[
        "delinearize", "--scheme", "inorder+shiftk", "--sentences", &p(&sents), "--tokens", &p(&tokens), "--out", &p(&trees),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&trees).unwrap(), std::fs::read(&toy).unwrap());
}

#[test]
fn delinearize_repairs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (tokens, sents) = (dir.path().join("t"), dir.path().join("s"));
    std::fs::write(&sents, "a b c\n").unwrap();
    std::fs::write(&tokens, "SHIFT NT(X) REDUCE\n").unwrap();
    let o = run(&[
        "delinearize", "--scheme", "inorder", "--sentences", sents.to_str().unwrap(), "--tokens", tokens.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("(ROOT"));
    assert!(stderr(&o).contains("1 repaired"));
}

#[test]
fn mask_trace_table() {
    let o = run(&["mask-trace", "--scheme", "inorder+swap", "--tree", "(S (VP 0=a 2=c) 1=b)"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "step\ttoken\tstack\tbuffer");
    assert_eq!(lines[1], "0\t-\t{}\t{0,1,2}");
    assert!(lines.contains(&"5\tSWAP\t{0,2}\t{1}"));
    assert_eq!(*lines.last().unwrap(), "10\tFINISH\t{0}\t{}");
}

#[test]
fn mask_trace_rejects_illegal_tokens() {
    let o = run(&["mask-trace", "--scheme", "inorder", "--tree", "(S 0=a 1=b)", "--tokens", "REDUCE"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["stats", "--scheme", "bottomup+shiftk", "--in", "x"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let o = run(&["stats", "--in", "/nonexistent/trees.disc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("discoseq: "));
    assert!(o.stdout.is_empty());
}

#[test]
fn train_and_predict_small() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let pred = dir.path().join("p.disc");
    let small = fixture("allerdings.disc");
    let o = run(&[
        "train", "--scheme", "inorder+swap", "--in", small.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(),
        "--epochs", "3", "--d-model", "16", "--seed", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = run(&[
        "predict", "--checkpoint", ckpt.to_str().unwrap(), "--trees", small.to_str().unwrap(), "--beam", "2", "--out",
        pred.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(stderr(&o).contains("decoded 1 items"));
}

#[test]
fn train_rejects_bad_config() {
    let o = run(&["train", "--scheme", "inorder+swap", "--in", "x", "--checkpoint", "y", "--preset", "huge"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["train", "--scheme", "inorder+swap", "--in", "x", "--checkpoint", "y", "--d-model", "10"]);
    assert_eq!(o.status.code(), Some(1));
}
