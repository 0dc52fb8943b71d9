use std::process::{Command, Output};

fn dlogsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlogsim")).args(args).output().expect("binary runs")
}

const SOLVE: &[&str] = &["solve", "--N", "11", "--a", "3", "--b", "9", "--epsilon", "0.25", "--trials", "50"];

#[test]
fn same_seed_same_bytes() {
    let run = |seed: &str| dlogsim(&[SOLVE, &["--seed", seed]].concat());
    let (x, y, z) = (run("5"), run("5"), run("6"));
    assert!(x.status.success());
    assert_eq!(x.stdout, y.stdout);
    assert_ne!(x.stdout, z.stdout);
    let text = String::from_utf8(x.stdout).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.lines().last().unwrap().starts_with("{\"summary\":"));
}

#[test]
fn distributed_csv_is_reproducible() {
    let args = [
        "solve-dist", "--N", "11", "--a", "3", "--b", "9", "--k", "2", "--h", "2", "--epsilon-prime", "0.2",
        "--mode", "analytic", "--trials", "20", "--seed", "9", "--format", "csv",
    ];
    let (x, y) = (dlogsim(&args), dlogsim(&args));
    assert!(x.status.success());
    assert_eq!(x.stdout, y.stdout);
    let text = String::from_utf8(x.stdout).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(String::from_utf8(x.stderr).unwrap().contains("\"plan\""));
}

#[test]
fn configuration_errors_exit_2() {
    // 2 has order 10 mod 11: not prime.
    let bad_order = dlogsim(&["solve", "--N", "11", "--a", "2", "--b", "4", "--seed", "1"]);
    assert_eq!(bad_order.status.code(), Some(2));
    let bad_eps = dlogsim(&[SOLVE, &["--seed", "1", "--epsilon", "1.5"]].concat());
    assert_eq!(bad_eps.status.code(), Some(2));
    let no_seed = dlogsim(SOLVE);
    assert_eq!(no_seed.status.code(), Some(2));
    let too_many_nodes = dlogsim(&["solve-dist", "--N", "11", "--a", "3", "--b", "9", "--k", "3", "--seed", "1"]);
    assert_eq!(too_many_nodes.status.code(), Some(2));
}

#[test]
fn resources_table() {
    let out = dlogsim(&["resources", "--r", "5", "--k", "2,3", "--epsilon", "0.25,0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    let symbolic = dlogsim(&["resources", "--r-log2", "1024", "--L", "2048", "--k", "16", "--epsilon-prime", "0.125"]);
    let text = String::from_utf8(symbolic.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1024,2048,16,0.25,0.125,4104,"));
}

#[test]
fn verify_reports_pass() {
    let out = dlogsim(&["verify", "--suite", "overlap"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("PASS overlap"));
}

#[test]
fn dist_compare_passes() {
    let out = dlogsim(&["dist-compare", "--N", "11", "--a", "3", "--b", "9", "--k", "2", "--h", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["joint_total_variation"].as_f64().unwrap() <= 1e-9);
}
