//! End-to-end tests of the binary: exit codes, determinism, file formats.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treecomp"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("treecomp-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn treecomp")
}

#[test]
fn encode_decode_roundtrip() {
    let dir = scratch("roundtrip");
    let term = dir.join("in.term");
    let gram = dir.join("out.gram");
    let back = dir.join("back.term");
    std::fs::write(&term, "f(a(b(c)),a(b(d)))").unwrap();
    let out = run(&[
        "encode",
        "--input",
        term.to_str().unwrap(),
        "--output",
        gram.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(&[
        "decode",
        "--input",
        gram.to_str().unwrap(),
        "--output",
        back.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(&back).unwrap().trim(),
        "f(a(b(c)),a(b(d)))"
    );
}

#[test]
fn encode_single_constant() {
    let dir = scratch("single");
    let term = dir.join("c.term");
    std::fs::write(&term, "c").unwrap();
    let out = run(&["encode", "--input", term.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), "_nt0 -> c");
}

#[test]
fn parse_error_exits_2() {
    let dir = scratch("parse2");
    let term = dir.join("bad.term");
    std::fs::write(&term, "f(a,,b)").unwrap();
    let out = run(&["encode", "--input", term.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_3() {
    let out = run(&["encode", "--input", "/nonexistent/nope.term"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn budget_exceeded_exits_4() {
    let dir = scratch("budget");
    let gram = dir.join("big.gram");
    let mut src = String::from("A0(y1) -> a(a(y1))\n");
    for i in 1..=20 {
        src.push_str(&format!("A{i}(y1) -> A{}(A{}(y1))\n", i - 1, i - 1));
    }
    src.push_str("S -> A20(c)\n");
    std::fs::write(&gram, src).unwrap();
    let out = run(&[
        "decode",
        "--input",
        gram.to_str().unwrap(),
        "--node-budget",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_grammar_exits_2() {
    let dir = scratch("invalid");
    let gram = dir.join("bad.gram");
    std::fs::write(&gram, "A -> f(A,c)\nS -> A\n").unwrap();
    let out = run(&["decode", "--input", gram.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_ok() {
    let dir = scratch("verify");
    let term = dir.join("in.term");
    std::fs::write(&term, "g(f(c,a(d)),f(c,a(d)))").unwrap();
    let out = run(&["verify", "--input", term.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
}

#[test]
fn identical_seed_and_config_give_identical_bytes() {
    let a = run(&[
        "bench", "--family", "random", "--sizes", "500,1000", "--seed", "42",
    ]);
    let b = run(&[
        "bench", "--family", "random", "--sizes", "500,1000", "--seed", "42",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let dir = scratch("determinism");
    let term = dir.join("in.term");
    std::fs::write(&term, "f(a(b(c)),a(b(d)))").unwrap();
    let g1 = run(&["encode", "--input", term.to_str().unwrap()]);
    let g2 = run(&["encode", "--input", term.to_str().unwrap()]);
    assert_eq!(g1.stdout, g2.stdout);
}

#[test]
fn million_node_caterpillar_compresses_to_few_lines() {
    let dir = scratch("caterpillar");
    let term = dir.join("cat.term");
    let n = 1_000_000usize;
    let mut src = String::with_capacity(2 * n + 8);
    for _ in 1..n {
        src.push_str("a(");
    }
    src.push('c');
    for _ in 1..n {
        src.push(')');
    }
    std::fs::write(&term, src).unwrap();
    let gram = dir.join("cat.gram");
    let out = run(&[
        "encode",
        "--input",
        term.to_str().unwrap(),
        "--output",
        gram.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let lines = std::fs::read_to_string(&gram).unwrap().lines().count();
    assert!(lines <= 64, "caterpillar grammar has {lines} lines");
}

#[test]
fn normalize_then_simulate_stays_synced() {
    let dir = scratch("simulate");
    let term = dir.join("in.term");
    std::fs::write(&term, "g(f(a(a(b(c))),d),f(a(a(b(c))),d))").unwrap();

    // A handle grammar for the same tree, via normalize of a literal rule.
    let lit = dir.join("lit.gram");
    std::fs::write(&lit, "S -> g(f(a(a(b(c))),d),f(a(a(b(c))),d))\n").unwrap();
    let hand = dir.join("hand.gram");
    let out = run(&[
        "normalize",
        "--input",
        lit.to_str().unwrap(),
        "--output",
        hand.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let trace = dir.join("run.trace");
    let out = run(&[
        "encode",
        "--input",
        term.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--output",
        dir.join("enc.gram").to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out = run(&[
        "simulate",
        "--input",
        term.to_str().unwrap(),
        "--grammar",
        hand.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("synced=true"));
    assert!(!text.contains("synced=false"));
    assert!(text.trim_end().ends_with("final tree size: 1"));
}

#[test]
fn stats_are_json_lines() {
    let dir = scratch("stats");
    let term = dir.join("in.term");
    std::fs::write(&term, "f(a(b(c)),a(b(d)))").unwrap();
    let out = run(&["stats", "--input", term.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("size_start").is_some());
        assert!(v.get("covered_two_chains").is_some());
    }
}
