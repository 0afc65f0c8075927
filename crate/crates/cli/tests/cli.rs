use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn manetsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manetsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn default_campaign_sizes() {
    let o = manetsim(&["matrix", "--dry-run"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "600 runs planned");
    let o = manetsim(&["matrix", "--dry-run", "--with-tora"]);
    assert_eq!(stdout(&o).trim(), "900 runs planned");
}

#[test]
fn bad_input_maps_to_exit_codes() {
    assert_eq!(manetsim(&["run", "--protocol", "olsr", "--nodes", "10", "--pause", "0"]).status.code(), Some(1));
    assert_eq!(manetsim(&["run", "--protocol", "aodv", "--nodes", "1", "--pause", "0"]).status.code(), Some(1));
    assert_eq!(
        manetsim(&["run", "--protocol", "aodv", "--nodes", "10", "--pause", "500"]).status.code(),
        Some(1)
    );
    assert_eq!(manetsim(&["analyze", "--trace", "/nonexistent/trace.tr"]).status.code(), Some(2));

    let dir = scratch("cli_bad_trace");
    let bad = dir.join("bad.tr");
    fs::write(&bad, "r 1.000000 3 AGT CBR 0 1 2 3\n").unwrap();
    let trace = bad.to_str().unwrap();
    assert_eq!(manetsim(&["analyze", "--trace", trace]).status.code(), Some(3));
    assert!(manetsim(&["analyze", "--trace", trace, "--lenient"]).status.success());
}

#[test]
fn run_then_analyze_round_trip() {
    let dir = scratch("cli_round_trip");
    let trace = dir.join("run.tr");
    let result = dir.join("run.json");
    let legs = dir.join("legs.txt");
    let o = manetsim(&[
        "run",
        "--protocol",
        "DSDV",
        "--nodes",
        "12",
        "--pause",
        "0",
        "--seed",
        "5",
        "--duration",
        "60",
        "--out-trace",
        trace.to_str().unwrap(),
        "--out-result",
        result.to_str().unwrap(),
        "--out-mobility",
        legs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(json["protocol"], "Dsdv");
    assert_eq!(json["n_nodes"], 12);
    assert!(!fs::read_to_string(&legs).unwrap().is_empty());

    let o = manetsim(&["analyze", "--trace", trace.to_str().unwrap(), "--format", "jsonl"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let summary: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(summary["samples"], json["samples"]);
    assert_eq!(summary["censored"], json["censored"]);
    assert_eq!(summary["mean_ct"], json["mean_ct"]);
}

#[test]
fn small_matrix_writes_results_and_plots() {
    let dir = scratch("cli_matrix");
    let o = manetsim(&[
        "matrix",
        "--nodes-list",
        "10",
        "--pauses-list",
        "0,20",
        "--seeds",
        "1",
        "--duration",
        "40",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    let plot = fs::read_to_string(dir.join("plots/ct_n010.dat")).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 2);
}
