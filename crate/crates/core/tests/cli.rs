use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbf")).args(args).output().expect("mbf runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const FIB: &str = r#"{"kind": "substitution", "name": "fib", "alphabet": ["a", "b"], "rules": {"a": "ab", "b": "a"}}"#;

#[test]
fn build_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("fib.json");
    fs::write(&spec, FIB).unwrap();
    let out = dir.path().join("out");
    let o = mbf(&["build", "--system", spec.to_str().unwrap(), "--levels", "3", "--emit", "dot,csv", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = files(&out).into_iter().map(|f| f.0).collect();
    assert!(names.contains(&"complex-3.dot".to_string()));
    assert!(names.contains(&"bonding-3-2.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    assert!(!names.iter().any(|n| n.starts_with("tower-")));
    assert!(stderr(&o).contains("seed = 0"));
}

#[test]
fn build_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = mbf(&["build", "--system", "fibonacci", "--seed", "5", "--out-dir", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = mbf(&["build", "--system", "dyadic", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (name, bytes) in files(dir.path()) {
        let text = String::from_utf8(bytes).unwrap();
        if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text, "{name}");
        } else if name.ends_with(".csv") {
            let rows: Vec<Vec<i64>> =
                text.lines().map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
            let again: String = rows
                .iter()
                .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",") + "\n")
                .collect();
            assert_eq!(again, text, "{name}");
        } else if name.ends_with(".dot") {
            assert!(text.starts_with("digraph"), "{name}");
            assert!(text.trim_end().ends_with('}'), "{name}");
        }
    }
}

#[test]
fn periodic_spec_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("p.json");
    fs::write(&spec, r#"{"kind": "substitution", "alphabet": ["a", "b"], "rules": {"a": "ab", "b": "ab"}}"#).unwrap();
    let o = mbf(&["build", "--system", spec.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("REJECT_PERIODIC"), "{}", stderr(&o));
}

#[test]
fn shallow_scan_exits_three_with_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = mbf(&["build", "--system", "fibonacci", "--scan-depth", "1000", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    let need: usize = err
        .lines()
        .find_map(|l| l.strip_prefix("rerun with --scan-depth "))
        .expect("suggested depth")
        .trim()
        .parse()
        .unwrap();
    let ok = mbf(&["build", "--system", "fibonacci", "--scan-depth", &need.to_string(), "--out-dir", out.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let short = mbf(&["build", "--system", "fibonacci", "--scan-depth", &(need - 1).to_string(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(short.status.code(), Some(3));
}

#[test]
fn scan_depth_floor_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = mbf(&["build", "--system", "dyadic", "--scan-depth", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: scan depth raised"));
}

#[test]
fn check_dyadic_passes() {
    let o = mbf(&["check", "--system", "dyadic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 7);
}

#[test]
fn corrupted_fixture_fails() {
    let o = mbf(&["check", "--system", "dyadic", "--suite", "bonding", "--corrupt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAIL bonding: bonding_factorization"));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["suites"][0]["failure"], "bonding_factorization");
}

#[test]
fn voronoi_suite_is_reproducible() {
    let run = || mbf(&["check", "--system", "dyadic", "--suite", "voronoi", "--nets", "100", "--seed", "7"]);
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["suites"][0]["detail"]["mismatches"], 0);
    assert_eq!(v["seed"], 7);
}

#[test]
fn classify_both_ways() {
    let o = mbf(&["classify", "--system", "fibonacci", "--depth", "8"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("expansive"));
    let o = mbf(&["classify", "--system", "dyadic", "--depth", "8"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("equicontinuous"));
}

#[test]
fn unknown_suite_is_rejected() {
    let o = mbf(&["check", "--system", "dyadic", "--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
