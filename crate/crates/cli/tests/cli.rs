use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tcpu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcpu"))
        .args(args)
        .output()
        .expect("failed to launch tcpu")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is not a single JSON document")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = tcpu(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn estimate(dir: &Path, pos: &str, unl: &str, tgt: &str, extra: &[&str]) -> Output {
    let (p, u, t) = (dir.join(pos), dir.join(unl), dir.join(tgt));
    let mut args = vec![
        "estimate",
        "--positives",
        p.to_str().unwrap(),
        "--unlabeled",
        u.to_str().unwrap(),
        "--target",
        t.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    tcpu(&args)
}

#[test]
fn simulate_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let out = tcpu(&[
        "simulate",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--n-source",
        "400",
        "--n-target",
        "150",
        "--pi",
        "0.25",
        "--p",
        "3",
        "--json",
    ]);
    let doc = json_of(&out);
    // A = 1/(1 − 0.5·0.75) = 1.6; m = 1.6·0.5·0.25·400 = 80, n = 1.6·0.5·400 = 320
    assert_eq!(doc["positives"], 80);
    assert_eq!(doc["unlabeled"], 320);
    assert_eq!(doc["target"], 150);
    let text = std::fs::read_to_string(dir.path().join("positives.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3"));
    assert_eq!(lines.count(), 80);
    assert!(dir.path().join("unlabeled.csv").exists());
    assert!(dir.path().join("target.csv").exists());
}

#[test]
fn target_equal_to_unlabeled_returns_source_prior() {
    let dir = TempDir::new().unwrap();
    simulate(
        dir.path(),
        &["--n-source", "300", "--n-target", "10", "--seed", "4"],
    );
    let doc = json_of(&estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "unlabeled.csv",
        &["--pi", "0.3", "--json"],
    ));
    assert!((doc["estimate_raw"].as_f64().unwrap() - 0.3).abs() <= 1e-10);
    assert_eq!(doc["pi_source"], "known");
    assert_eq!(doc["bound"]["coverage"].as_f64().unwrap(), 1.0 - 3.0 * 0.05);
}

#[test]
fn hand_instance_estimates_zero() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "u.csv", "x\n0\n2\n");
    write(dir.path(), "p.csv", "x\n0\n");
    write(dir.path(), "t.csv", "x\n2\n");
    let doc = json_of(&estimate(
        dir.path(),
        "p.csv",
        "u.csv",
        "t.csv",
        &["--pi", "0.5", "--tau", "1", "--json"],
    ));
    assert!(doc["estimate_raw"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(doc["n"], 2);
    assert_eq!(doc["m"], 1);
    assert_eq!(doc["n_prime"], 1);
}

#[test]
fn human_output_lists_estimate_and_bound() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "200", "--n-target", "200"]);
    let out = estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &["--pi", "0.2"],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("target prior estimate"));
    assert!(text.contains("error bound"));
    assert!(text.contains("coverage:              0.85"));
}

#[test]
fn estimated_prior_and_median_heuristic() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "600", "--n-target", "300"]);
    let doc = json_of(&estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &[
            "--estimate-pi",
            "--median-heuristic",
            "--standardize",
            "--json",
        ],
    ));
    assert_eq!(doc["pi_source"], "km2_plugin");
    assert!(doc["km2_lambda_hat"].as_f64().unwrap() >= 1.0);
    let pi = doc["pi_used"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&pi));
    assert!(doc["tau"].as_f64().unwrap() > 0.0);
}

#[test]
fn delta_above_maximum_exits_one() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "100", "--n-target", "50"]);
    let out = estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &["--pi", "0.2", "--delta", "0.06"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid delta"));
}

#[test]
fn degenerate_embedding_exits_two() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "100", "--n-target", "50"]);
    let out = estimate(
        dir.path(),
        "positives.csv",
        "positives.csv",
        "target.csv",
        &["--pi", "0.2"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn parse_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "u.csv", "a,b\n0,1\n2,oops\n");
    write(dir.path(), "p.csv", "a,b\n0,0\n");
    write(dir.path(), "t.csv", "a,b\n1,1\n");
    let out = estimate(dir.path(), "p.csv", "u.csv", "t.csv", &["--pi", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    write(dir.path(), "ragged.csv", "a,b\n0\n");
    let out = estimate(dir.path(), "p.csv", "ragged.csv", "t.csv", &["--pi", "0.5"]);
    assert_eq!(out.status.code(), Some(1));

    write(dir.path(), "wide.csv", "a,b,c\n0,0,0\n");
    let out = estimate(dir.path(), "p.csv", "wide.csv", "t.csv", &["--pi", "0.5"]);
    assert_eq!(out.status.code(), Some(1));

    let out = estimate(
        dir.path(),
        "p.csv",
        "missing.csv",
        "t.csv",
        &["--pi", "0.5"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prior_flags_are_exclusive() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "100", "--n-target", "50"]);
    let both = estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &["--pi", "0.2", "--estimate-pi"],
    );
    assert_eq!(both.status.code(), Some(1));
    let neither = estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &[],
    );
    assert_eq!(neither.status.code(), Some(1));
    let bad_pi = estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &["--pi", "1.0"],
    );
    assert_eq!(bad_pi.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert!(tcpu(&["--help"]).status.success());
    assert!(tcpu(&["bench", "--help"]).status.success());
}

#[test]
fn bound_from_denominator() {
    let doc = json_of(&tcpu(&[
        "bound",
        "--n",
        "1000",
        "--denominator",
        "0.5",
        "--json",
    ]));
    let e = &doc["empirical"];
    assert!((e["bound_value"].as_f64().unwrap() - 0.43788).abs() <= 1e-4);
    assert_eq!(e["N"], 1000);
    assert_eq!(e["M"], 1.0);
    assert_eq!(e["kind"], "empirical");
    assert!(doc["population"].is_null());

    let doc = json_of(&tcpu(&[
        "bound",
        "--n",
        "5000",
        "--m",
        "1000",
        "--n-prime",
        "3000",
        "--denominator",
        "0.5",
        "--json",
    ]));
    assert_eq!(doc["empirical"]["N"], 1000);

    let text =
        String::from_utf8(tcpu(&["bound", "--n", "1000", "--denominator", "0.5"]).stdout).unwrap();
    assert!(text.contains("0.437866"));
    assert!(text.contains("coverage:              0.85"));
}

#[test]
fn bound_population_mode() {
    let doc = json_of(&tcpu(&[
        "bound",
        "--n",
        "1000",
        "--denominator",
        "0.5",
        "--pi",
        "0.2",
        "--alpha",
        "0.5",
        "--mmd-pm",
        "1",
        "--json",
    ]));
    assert_eq!(doc["population"]["required_n"], 300);
    assert_eq!(doc["population"]["bound"]["kind"], "population");

    let doc = json_of(&tcpu(&[
        "bound",
        "--n",
        "100",
        "--denominator",
        "0.5",
        "--pi",
        "0.2",
        "--alpha",
        "0.5",
        "--mmd-pm",
        "1",
        "--json",
    ]));
    assert!(doc["population"]["bound"].is_null());
    assert!(doc["population"]["error"].as_str().unwrap().contains("300"));
}

#[test]
fn bound_usage_errors() {
    let out = tcpu(&["bound", "--n", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    let out = tcpu(&["bound", "--denominator", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = tcpu(&[
        "bound",
        "--n",
        "10",
        "--denominator",
        "0.5",
        "--delta",
        "0.06",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = tcpu(&["bound", "--n", "10", "--denominator", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bound_from_files() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["--n-source", "200", "--n-target", "90"]);
    let p = dir.path().join("positives.csv");
    let u = dir.path().join("unlabeled.csv");
    let t = dir.path().join("target.csv");
    let doc = json_of(&tcpu(&[
        "bound",
        "--positives",
        p.to_str().unwrap(),
        "--unlabeled",
        u.to_str().unwrap(),
        "--target",
        t.to_str().unwrap(),
        "--json",
    ]));
    // m = 1/(0.6)·0.5·0.2·200 ≈ 33 is the smallest sample
    assert_eq!(doc["empirical"]["N"], 33);

    let est = json_of(&estimate(
        dir.path(),
        "positives.csv",
        "unlabeled.csv",
        "target.csv",
        &["--pi", "0.2", "--json"],
    ));
    let a = doc["empirical"]["bound_value"].as_f64().unwrap();
    let b = est["bound"]["bound_value"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12);
}

fn bench_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "cfg.json",
        r#"{
  "scenario": {"synthetic": {"n_source": 150, "n_target": 150, "pi": 0.2}},
  "methods": ["tcpu_known_pi", "km2_ls"],
  "repetitions": 2,
  "seed": 3,
  "km": {"lambda_grid": [1.0, 1.5, 2.0, 3.0, 5.0, 10.0]},
  "sweep": {"parameter": "pi_prime", "values": [0.2, 0.4, 0.6, 0.8]}
}"#,
    )
}

#[test]
fn bench_writes_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = bench_config(dir.path());
    let csv_path = dir.path().join("out.csv");
    let out = tcpu(&[
        "bench",
        cfg.to_str().unwrap(),
        "--output",
        csv_path.to_str().unwrap(),
        "--json",
    ]);
    let summary = json_of(&out);
    assert_eq!(summary["summary"].as_array().unwrap().len(), 8);
    assert_eq!(
        summary["uncertainty"],
        "standard error of the mean across repetitions"
    );

    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with(
        "method,rep,pi,pi_prime,estimate_raw,estimate_clipped,abs_error,bound,elapsed_s,error_msg"
    ));
    assert_eq!(lines.count(), 4 * 2 * 2);
    let on_disk: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, summary);
}

#[test]
fn bench_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = bench_config(dir.path());
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let out = tcpu(&[
            "bench",
            cfg.to_str().unwrap(),
            "--output",
            path.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "3"));
}

#[test]
fn bench_records_failures_per_row() {
    let dir = TempDir::new().unwrap();
    // c = 1 leaves no unlabeled data, so every estimate fails
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"scenario": {"synthetic": {"n_source": 50, "n_target": 50, "c": 1.0}}, "repetitions": 2, "output_path": "ignored.csv"}"#,
    );
    let path = dir.path().join("fail.csv");
    let out = tcpu(&[
        "bench",
        cfg.to_str().unwrap(),
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains("empty")), "{rows:?}");
}

#[test]
fn bench_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"scenario": {"synthetic": {}}, "repetitions": 0}"#,
    );
    let out = tcpu(&["bench", cfg.to_str().unwrap(), "--output", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = write(dir.path(), "broken.json", "{not json");
    let out = tcpu(&["bench", cfg.to_str().unwrap(), "--output", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = write(
        dir.path(),
        "noout.json",
        r#"{"scenario": {"synthetic": {}}}"#,
    );
    let out = tcpu(&["bench", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
