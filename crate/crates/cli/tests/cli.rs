use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtl"))
        .args(args)
        .env_remove("MTL_SEED")
        .output()
        .expect("spawn mtl")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Two 2-d clouds with pairwise distinct first coordinates.
fn clouds(dir: &Path) -> (PathBuf, PathBuf) {
    let src = write(dir, "src.csv", "0.1;0.9\n0.5;0.2\n0.8;0.7\n0.3;0.4\n");
    let dst = write(dir, "dst.csv", "2.0;1.0\n1.2;0.0\n1.7;3.0\n1.4;0.5\n");
    (src, dst)
}

fn perm(v: &Value) -> Vec<u64> {
    v["result"]["matching"]["pairs"]
        .as_array()
        .unwrap_or_else(|| panic!("no pairs in {v}"))
        .iter()
        .map(|p| p[1].as_u64().unwrap())
        .collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn map_cm_reports_kind_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = clouds(dir.path());
    let out = mtl(&["map", path(&src), path(&dst), "--kind", "cm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["config"]["params"]["kind"], "cm");
    assert_eq!(v["result"]["matching"]["kind"], "CM");
    assert_eq!(v["result"]["segments"].as_array().unwrap().len(), 4);
}

#[test]
fn oteps_one_is_cm_and_small_eps_is_kr() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = clouds(dir.path());
    let run = |extra: &[&str]| {
        let mut args = vec!["map", path(&src), path(&dst)];
        args.extend_from_slice(extra);
        perm(&json_of(&mtl(&args)))
    };
    assert_eq!(run(&["--kind", "oteps", "--eps", "1"]), run(&["--kind", "cm"]));
    assert_eq!(run(&["--kind", "oteps", "--eps", "1e-12"]), run(&["--kind", "kr"]));
}

#[test]
fn map_csv_and_plot_data_carry_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = clouds(dir.path());
    for (fmt, header) in [("csv", "source;target"), ("plot-data", "x0;y0;x1;y1")] {
        let out = mtl(&["map", path(&src), path(&dst), "--kind", "kr", "--format", fmt]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config: {"));
        assert_eq!(lines.next().unwrap(), header);
        assert_eq!(lines.count(), 4);
    }
}

#[test]
fn usage_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = clouds(dir.path());
    assert_eq!(mtl(&["map", path(&src), path(&dst), "--kind", "qp"]).status.code(), Some(2));
    assert_eq!(mtl(&["map", path(&src), path(&dst), "--kind", "oteps"]).status.code(), Some(2));
    let short = write(dir.path(), "short.csv", "0;0\n1;1\n");
    assert_eq!(mtl(&["map", path(&src), path(&short), "--kind", "cm"]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(mtl(&["map", path(&missing), path(&dst), "--kind", "cm"]).status.code(), Some(1));
}

#[test]
fn qp_with_reference_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = clouds(dir.path());
    let r = write(dir.path(), "ref.csv", "0;0\n0;1\n1;0\n1;1\n");
    let out = mtl(&["map", path(&src), path(&dst), "--kind", "qp", "--ref", path(&r)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["result"]["matching"]["kind"], "QP");
    assert!(v["config"]["inputs"]["ref"].is_string());
}

#[test]
fn check_identity_passes_everything() {
    let out = mtl(&["check", "--builtin", "identity"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["result"]["all_pass"], true);
    assert_eq!(v["result"]["reports"].as_array().unwrap().len(), 4);
}

#[test]
fn check_rotation_fails_cyclic_monotonicity_with_witness() {
    let out = mtl(&["check", "--builtin", "rotation", "--property", "cyclic_monotone"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json_of(&out);
    let r = &v["result"]["reports"][0];
    assert_eq!(r["verdict"], "fail");
    assert!(r["witness"].is_object());
}

#[test]
fn check_stretched_gradient_fails_gradient_field() {
    let out = mtl(&["check", "--builtin", "stretched-gradient", "--property", "gradient-field"]);
    assert_eq!(out.status.code(), Some(3));
    let ok = mtl(&["check", "--builtin", "convex-gradient", "--property", "gradient_field"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn path_independence_counterexample_for_cm_only() {
    let out = mtl(&["check", "--builtin", "path-indep-counterexample", "--property", "path_independence"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json_of(&out);
    assert_eq!(v["result"]["reports"][0]["witness"]["indices"].as_array().unwrap().len(), 4);
    for fam in ["kr", "qp"] {
        let out = mtl(&["check", "--builtin", "path-indep-counterexample", "--family", fam]);
        assert_eq!(out.status.code(), Some(0), "{fam}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn map_property_on_family_target_is_usage_error() {
    let out = mtl(&["check", "--builtin", "gene-smoking", "--property", "triangular"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scm_family_algebra_holds_for_builtins() {
    for name in ["gene-smoking", "cyclic-triangular", "qp-linear"] {
        let out = mtl(&["check", "--builtin", name, "--n", "20"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn gene_smoking_counterfactual_point() {
    let out = mtl(&["scm", "--builtin", "gene-smoking", "counterfactual", "--a", "0", "--a-prime", "1", "--x", "1,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    let y: Vec<f64> = serde_json::from_value(v["result"]["counterfactual"].clone()).unwrap();
    assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 4.0).abs() < 1e-12, "{y:?}");
}

#[test]
fn solve_then_recover_round_trips() {
    let solve = json_of(&mtl(&["scm", "--builtin", "cyclic-triangular", "solve", "--a", "0.5", "--u", "0.1,0.3,0.4"]));
    let x: Vec<f64> = serde_json::from_value(solve["result"]["x"].clone()).unwrap();
    let xs = x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    let rec = json_of(&mtl(&["scm", "--builtin", "cyclic-triangular", "recover", "--a", "0.5", "--x", &xs]));
    let u: Vec<f64> = serde_json::from_value(rec["result"]["u"].clone()).unwrap();
    for (got, want) in u.iter().zip([0.1, 0.3, 0.4]) {
        assert!((got - want).abs() < 1e-10, "{u:?}");
    }
}

#[test]
fn validate_reports_the_cycle() {
    let v = json_of(&mtl(&["scm", "--builtin", "cyclic-triangular", "validate"]));
    assert_eq!(v["result"]["acyclic"], false);
    assert_eq!(v["result"]["cycles"][0], serde_json::json!(["X2", "X3"]));
}

#[test]
fn model_file_and_intervention() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.scm", "# toy\nA = UA\nX1 = 2*A + U1\nX2 = X1 - A + U2\n");
    let out = mtl(&["scm", "--model", path(&model), "intervene", "--a", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert!(v["result"]["text"].as_str().unwrap().starts_with("A = 3\n"));
    let bad = write(dir.path(), "bad.scm", "X1 = X1 + U1\n");
    assert_eq!(mtl(&["scm", "--model", path(&bad), "validate"]).status.code(), Some(2));
}

#[test]
fn sample_is_seeded_and_rejects_zero() {
    let a = mtl(&["scm", "--builtin", "gene-smoking", "sample", "--a", "0", "--n", "5"]);
    let b = mtl(&["--seed", "20240917", "scm", "--builtin", "gene-smoking", "sample", "--a", "0", "--n", "5"]);
    let c = mtl(&["--seed", "1", "scm", "--builtin", "gene-smoking", "sample", "--a", "0", "--n", "5"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(json_of(&a)["result"]["points"], json_of(&c)["result"]["points"]);
    assert_eq!(mtl(&["scm", "--builtin", "gene-smoking", "sample", "--a", "0", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn counterfactual_sample_is_index_aligned() {
    let v = json_of(&mtl(&["scm", "--builtin", "qp-linear", "counterfactual", "--a", "0", "--a-prime", "1", "--sample", "6"]));
    let perm = perm(&v);
    assert_eq!(perm, (0..6).collect::<Vec<_>>());
}

#[test]
fn repro_fig_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    assert!(mtl(&["repro-fig", "--out", path(&d1)]).status.success());
    assert!(mtl(&["repro-fig", "--out", path(&d2)]).status.success());
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(d1.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["result"]["pairwise_distinct"], true);
    for f in ["cm.csv", "qp.csv", "kr.csv", "summary.json"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f}");
    }
}
