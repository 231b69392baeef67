use std::path::Path;
use std::process::{Command, Output};

fn dynsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynsched")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {line:?}"))
        .parse()
        .unwrap()
}

#[test]
fn optimize_beta_reference_points() {
    let out = dynsched(&["optimize-beta", "--kernel", "outer", "--n", "100", "--p", "20"]);
    assert!(out.status.success());
    let beta = field(&stdout(&out), "beta");
    assert!((beta - 4.17).abs() <= 0.05, "{beta}");
    assert!((field(&stdout(&out), "phase1_fraction") - 0.985).abs() <= 0.002);

    let out = dynsched(&["optimize-beta", "--kernel", "matmul", "--n", "40", "--p", "100"]);
    let beta = field(&stdout(&out), "beta");
    assert!((beta - 2.92).abs() <= 0.05, "{beta}");
}

#[test]
fn simulate_is_reproducible() {
    let args =
        ["simulate", "--kernel", "outer", "--n", "40", "--p", "8", "--strategy", "dynamic-outer-2p", "--seed", "12"];
    let a = dynsched(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&dynsched(&args)));
    let line = stdout(&a);
    assert_eq!(line.lines().count(), 1);
    assert!(field(&line, "normalized_comm") > 1.0);
    assert!(line.contains("strategy=dynamic-outer-2p"));
}

#[test]
fn simulate_with_speed_file_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let speeds = dir.path().join("speeds.txt");
    std::fs::write(&speeds, "# three workers\n10\n20\n40\n").unwrap();
    let trace = dir.path().join("trace.csv");
    let out = dynsched(&[
        "simulate",
        "--kernel",
        "matmul",
        "--n",
        "6",
        "--p",
        "3",
        "--strategy",
        "dynamic-matrix",
        "--speeds-file",
        speeds.to_str().unwrap(),
        "--seed",
        "1",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next(), Some("event_time,worker,x,unprocessed_fraction"));
    assert!(text.lines().count() > 3);

    // Speed count must agree with --p.
    let out = dynsched(&[
        "simulate",
        "--kernel",
        "outer",
        "--n",
        "6",
        "--p",
        "4",
        "--strategy",
        "random-outer",
        "--speeds-file",
        speeds.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_prints_model_terms() {
    let out = dynsched(&["analyze", "--kernel", "outer", "--n", "100", "--p", "20", "--beta", "4.17"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for key in ["lower_bound", "phase1_volume", "phase2_volume", "objective", "first_order_objective"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key}="))), "{key} missing in {text}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let cases: [&[&str]; 6] = [
        &["simulate", "--kernel", "outer", "--n", "10", "--p", "2", "--strategy", "nope", "--seed", "1"],
        &["simulate", "--kernel", "outer", "--n", "10", "--p", "2", "--strategy", "random-matrix", "--seed", "1"],
        &[
            "simulate",
            "--kernel",
            "outer",
            "--n",
            "10",
            "--p",
            "2",
            "--strategy",
            "random-outer",
            "--seed",
            "1",
            "--beta",
            "2",
        ],
        &["simulate", "--kernel", "outer", "--n", "10", "--p", "2", "--strategy", "random-outer"],
        &["analyze", "--kernel", "outer", "--n", "10", "--p", "2", "--beta", "50"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = dynsched(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(dynsched(&["--help"]).status.code(), Some(0));
}

#[test]
fn experiment_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.spec");
    std::fs::write(&spec, "kernel = outer\nn = 20\np = 2, 4\nreplications = 2\nseed = 5\n").unwrap();
    let out_dir = dir.path().join("out");
    let run = |jobs: &str| {
        let out = dynsched(&[
            "experiment",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--jobs",
            jobs,
            "--plot",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("tiny.csv")).unwrap()
    };
    let first = run("1");
    assert_eq!(first, run("3"));
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.starts_with("kernel,n,p,strategy,scenario,beta,mean_norm_comm,stddev,replications,analysis_pred\n"));
    let svg = std::fs::read_to_string(out_dir.join("tiny.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
}

#[test]
fn experiment_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(dynsched(&["experiment", "--recipe", "fig99", "--out", out]).status.code(), Some(1));
    assert_eq!(dynsched(&["experiment", "--out", out]).status.code(), Some(1));
    let bad = dir.path().join("bad.spec");
    std::fs::write(&bad, "kernel = outer\nn = 10\n").unwrap();
    assert_eq!(dynsched(&["experiment", "--spec", bad.to_str().unwrap(), "--out", out]).status.code(), Some(1));
    assert!(!Path::new(out).join("bad.csv").exists());

    // Output location that cannot be created: a runtime fault.
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let good = dir.path().join("good.spec");
    std::fs::write(&good, "kernel = outer\nn = 4\np = 2\nreplications = 1\n").unwrap();
    let target = blocker.join("sub");
    let code =
        dynsched(&["experiment", "--spec", good.to_str().unwrap(), "--out", target.to_str().unwrap()]).status.code();
    assert_eq!(code, Some(2));
}
