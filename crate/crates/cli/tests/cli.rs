use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bli(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_bli")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "bli {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture(dir: &Path) -> String {
    let d = dir.to_str().unwrap();
    bli(&["fixture", "--out-dir", d, "--words", "100", "--dim", "10", "--context-dim", "12"]);
    dir.join("experiment.ini").to_str().unwrap().to_string()
}

#[test]
fn fixture_then_run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("out");
    let o = bli(&["run", "--config", &config, "--plan", "M1", "--out-dir", out.to_str().unwrap()]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Pr@1 = 1.0000"), "{stdout}");
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("code,embedding_kind,language_pair,pr_at_1"));
    assert!(out.join("M1/rankings.tsv").exists());
}

#[test]
fn matrix_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = bli(&["matrix", "--config", &config, "--plan", "M1", "--plan", "M6", "--out-dir", out_s, "--sequential"]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("M1") && table.contains("M6"), "{table}");
    assert!(out.join("results.txt").exists());

    let rankings = out.join("M1/rankings.tsv");
    let gold = dir.path().join("gold.tsv");
    let o = bli(&["eval", "--rankings", rankings.to_str().unwrap(), "--gold", gold.to_str().unwrap(), "--k", "1,5"]);
    let report = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "k,precision,hits,evaluated,skipped_oov,coverage");
    assert!(lines[1].starts_with("1,1,"), "{report}");
    assert!(lines[2].starts_with("5,1,"), "{report}");
}

#[test]
fn sweeps_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    bli(&["sweep-alpha", "--config", &config, "--plan", "M3", "--grid", "-0.15,0,0.15", "--out-dir", out_s]);
    let alpha = fs::read_to_string(out.join("alpha_sweep.csv")).unwrap();
    assert_eq!(alpha.lines().count(), 1 + 9);

    bli(&["sweep-minfreq", "--config", &config, "--plan", "M1", "--thresholds", "0,1000", "--out-dir", out_s]);
    let minfreq = fs::read_to_string(out.join("minfreq_sweep.csv")).unwrap();
    assert_eq!(minfreq.lines().count(), 1 + 2);
}

#[test]
fn curate_applies_filters() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str, text: &str| {
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    };
    let pairs = p("pairs.tsv", "hund\tdog\nkatze\tcat\nberlin\tberlin\nbaum\tplant\nhaus\tzebra\n");
    let src = p("src.txt", "hund\nkatze\nberlin\nbaum\nhaus\n");
    let trg = p("trg.txt", "dog\ncat\nberlin\nplant\n");
    let round = p("round.tsv", "hund\thund\nkatze\tkatze\nberlin\tberlin\nbaum\tpflanze\n");
    let nouns = p("nouns.txt", "berlin\n");
    let out = dir.path().join("kept.tsv");
    let args = [
        "curate", "--pairs", &pairs, "--src-words", &src, "--trg-words", &trg, "--roundtrip", &round,
        "--proper-nouns", &nouns, "--out", out.to_str().unwrap(),
    ];
    bli(&args);
    assert_eq!(fs::read_to_string(out).unwrap(), "hund\tdog\nkatze\tcat\n");
}

#[test]
fn unknown_plan_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_bli"))
        .args(["run", "--config", &config, "--plan", "M99"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
