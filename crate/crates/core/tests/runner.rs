use std::path::Path;

use bli_core::experiment::{read_results_csv, run_experiment, run_matrix, write_results_csv, ExperimentConfig};
use bli_core::fixtures::write_planted_fixture;

fn small_fixture(dir: &Path) -> ExperimentConfig {
    write_planted_fixture(dir, 120, 12, 16, 0.0, 3).unwrap();
    ExperimentConfig::load(dir.join("experiment.ini"), None).unwrap()
}

#[test]
fn baseline_only_matrix_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let rows = run_matrix(&[cfg.plan("M1").unwrap().clone()], None, false);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].delta_vs_baseline, Some(0.0));
    assert!(rows[0].error.is_none());
}

#[test]
fn stored_deltas_match_recomputation_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let plans: Vec<_> = ["M1", "M2", "M6"].iter().map(|c| cfg.plan(c).unwrap().clone()).collect();
    let rows = run_matrix(&plans, Some(&dir.path().join("out")), false);
    let csv = dir.path().join("out/results.csv");
    write_results_csv(&csv, &rows).unwrap();
    let back = read_results_csv(&csv).unwrap();
    assert_eq!(back.len(), 3);
    let base = back.iter().find(|r| r.code == "M1").unwrap().pr_at_1.unwrap();
    for row in &back {
        let want = row.pr_at_1.unwrap() - base;
        assert!((row.delta_vs_baseline.unwrap() - want).abs() < 1e-12, "{}", row.code);
    }
    for artifact in ["mapping.txt", "dictionary.tsv", "trace.csv", "eval.csv", "rankings.tsv"] {
        assert!(dir.path().join("out/M2").join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn failing_plan_leaves_other_rows_intact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let good = cfg.plan("M1").unwrap().clone();
    let mut missing = cfg.plan("M2").unwrap().clone();
    missing.inputs.src_embeddings = dir.path().join("absent.vec");
    let rows = run_matrix(&[good, missing], None, false);
    assert!(rows[0].error.is_none());
    assert!(rows[0].pr_at_1.is_some());
    let err = rows[1].error.as_deref().unwrap();
    assert!(err.contains("`load`"), "{err}");
    assert!(rows[1].pr_at_1.is_none() && rows[1].delta_vs_baseline.is_none());
}

#[test]
fn errors_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let mut plan = cfg.plan("M2").unwrap().clone();
    plan.params.insert("dimred_dim".into(), "0".into());
    let err = run_experiment(&plan, None).unwrap_err().to_string();
    assert!(err.contains("`effective_dimred`"), "{err}");

    let mut plan = cfg.plan("M1").unwrap().clone();
    plan.params.insert("keep_prob_initial".into(), "0".into());
    let err = run_experiment(&plan, None).unwrap_err().to_string();
    assert!(err.contains("`config`"), "{err}");
}

#[test]
fn cscbli_plan_writes_spring_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let out = dir.path().join("out");
    let outcome = run_experiment(cfg.plan("M15").unwrap(), Some(&out)).unwrap();
    assert!(outcome.cscbli.is_some());
    assert!(outcome.row.pr_at_1.unwrap() > 0.9);
    for artifact in ["spring_src.txt", "spring_trg.txt", "cscbli_dictionary.tsv"] {
        assert!(out.join("M15").join(artifact).exists(), "{artifact}");
    }
}
