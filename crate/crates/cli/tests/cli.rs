use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lpsumm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpsumm")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lpsumm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("valid json")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

/// Writes a generated `[A | b]` with small target noise.
fn write_regression(dir: &TempDir) -> String {
    let out = path(dir, "gen");
    ok(&["gen", "--method", "gaussian", "--rows", "120", "--cols", "3", "--noise", "0.01", "--out", &out]);
    format!("{out}/data.csv")
}

#[test]
fn gen_is_reproducible_and_lists_planted_rows() {
    let a = ok(&["gen", "--method", "gaussian", "--rows", "50", "--cols", "3", "--seed", "4"]);
    let b = ok(&["gen", "--method", "gaussian", "--rows", "50", "--cols", "3", "--seed", "4"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 50);
    assert_eq!(a.lines().next().unwrap().split(',').count(), 4);

    let dir = TempDir::new().unwrap();
    let out = path(&dir, "ai");
    ok(&["gen", "--method", "augmented-identity", "--rows", "200", "--cols", "4", "--planted", "2", "--out", &out]);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(format!("{out}/dataset.json")).unwrap()).unwrap();
    assert_eq!(meta["planted"].as_array().unwrap().len(), 2);
    assert_eq!(meta["features"], 6);
}

#[test]
fn leverage_json_shape() {
    let dir = TempDir::new().unwrap();
    let data = write_regression(&dir);
    for extra in [vec![], vec!["--tau", "0.05"], vec!["--budget", "16"]] {
        let mut args = vec!["leverage", "--input", &data, "--method", "orth"];
        args.extend(extra.iter().copied());
        let v = json(&args);
        for key in ["p", "method", "tau", "adjust", "kept_indices", "scores_summary"] {
            assert!(v.get(key).is_some(), "{key} missing from {v}");
        }
        let s = &v["scores_summary"];
        assert!(s["min"].as_f64().unwrap() <= s["max"].as_f64().unwrap());
        assert_eq!(v["method"], "orth");
    }
    // offline orthonormal scores sum to the column count
    let v = json(&["leverage", "--input", &data, "--method", "orth"]);
    assert!((v["scores_summary"]["sum"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn embed_prints_the_tree_trace() {
    let dir = TempDir::new().unwrap();
    let data = write_regression(&dir);
    let v = json(&["embed", "--input", &data, "--p", "1", "--gamma", "0.5", "--method", "rounding"]);
    let trace = v.as_array().unwrap();
    assert!(!trace.is_empty());
    for node in trace {
        assert!(node["level"].as_u64().unwrap() >= 1);
        assert!(node["output_rows"].as_u64().unwrap() <= node["input_rows"].as_u64().unwrap());
        assert!(node["certified_distortion"].as_f64().unwrap() >= 1.0);
    }
    let out = path(&dir, "emb");
    ok(&["embed", "--input", &data, "--p", "1", "--out", &out]);
    assert!(Path::new(&format!("{out}/embedding.csv")).exists());
    assert!(Path::new(&format!("{out}/trace.json")).exists());
}

#[test]
fn regress_solvers_agree_on_small_residuals() {
    let dir = TempDir::new().unwrap();
    let data = write_regression(&dir);
    for p in ["1", "1.5", "2", "3", "inf"] {
        let v = json(&["regress", "--input", &data, "--p", p]);
        assert_eq!(v["x"].as_array().unwrap().len(), 3);
        assert!(v.get("certified_gap").is_some());
        assert!(v["objective"].as_f64().unwrap() < 1.0, "p = {p}: {v}");
    }
    let v = json(&["regress", "--input", &data, "--p", "1", "--method", "rounding", "--gamma", "0.5"]);
    assert!(v["method"].as_str().unwrap().starts_with("embed"));
    assert!(v["certified_gap"].as_f64().unwrap() >= 1.0);
}

#[test]
fn linf_reports_the_additive_gap() {
    let dir = TempDir::new().unwrap();
    let data = write_regression(&dir);
    let v = json(&["linf", "--input", &data, "--eps", "0.2", "--p", "2"]);
    let gap = v["certified_gap"].as_f64().unwrap();
    let exact = json(&["regress", "--input", &data, "--p", "inf"]);
    // the stream's reduced objective never exceeds the full optimum
    assert!(v["objective"].as_f64().unwrap() <= exact["objective"].as_f64().unwrap() + 1e-9);
    assert!(gap > 0.0);
}

#[test]
fn lowrank_writes_factor_pair_and_metadata() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "r1.csv");
    let mut text = String::new();
    for i in 0..30 {
        let u = 1.0 + i as f64 * 0.1;
        let row: Vec<String> = [1.0, -2.0, 0.5, 3.0].iter().map(|v| format!("{}", u * v)).collect();
        text += &row.join(",");
        text.push('\n');
    }
    std::fs::write(&input, text).unwrap();
    let out = path(&dir, "lr");
    ok(&["lowrank", "--input", &input, "--rank", "1", "--out", &out]);
    let left = std::fs::read_to_string(format!("{out}/left.csv")).unwrap();
    let right = std::fs::read_to_string(format!("{out}/right.csv")).unwrap();
    assert_eq!(left.lines().count(), 30);
    assert_eq!(right.lines().count(), 1);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(format!("{out}/lowrank.json")).unwrap()).unwrap();
    assert!(meta["l1_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(meta["inner_method"], "enumerated");
}

#[test]
fn amm_emits_triples() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "a.csv");
    std::fs::write(&input, "1,0,0\n0,2,0\n0,0,3\n").unwrap();
    let text = ok(&["amm", "--input", &input, "--eps", "0.1"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,value"));
    let triples: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(triples, vec![(0, 0, 1.0), (1, 1, 4.0), (2, 2, 9.0)]);
    let out = path(&dir, "amm");
    ok(&["amm", "--input", &input, "--eps", "0.1", "--method", "columns", "--out", &out]);
    assert!(Path::new(&format!("{out}/product.csv")).exists());
}

#[test]
fn experiment_report_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = path(&dir, name);
        ok(&[
            "experiment", "--dataset", "gaussian", "--rows", "300", "--cols", "3", "--budgets", "6,24", "--trials", "2",
            "--method", "orth,identity,sample", "--out", &out,
        ]);
        out
    };
    let (a, b) = (run("x"), run("y"));
    let ma = std::fs::read(format!("{a}/metrics.csv")).unwrap();
    assert_eq!(ma, std::fs::read(format!("{b}/metrics.csv")).unwrap());
    let text = String::from_utf8(ma).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(format!("{a}/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["trials"], 2);
    assert!(Path::new(&format!("{a}/timings.csv")).exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = write_regression(&dir);
    assert_eq!(lpsumm(&["leverage"]).status.code(), Some(2));
    assert_eq!(lpsumm(&["leverage", "--input", &path(&dir, "missing.csv")]).status.code(), Some(2));
    assert_eq!(lpsumm(&["regress", "--input", &data, "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(lpsumm(&["amm", "--input", &data, "--eps", "2"]).status.code(), Some(2));
    let bad = path(&dir, "bad.csv");
    std::fs::write(&bad, "1,2\n3,x\n").unwrap();
    assert_eq!(lpsumm(&["leverage", "--input", &bad]).status.code(), Some(2));
    assert_eq!(lpsumm(&["nonsense"]).status.code(), Some(2));
    // a zero tolerance cannot be met, so the iterative solver reports non-convergence
    assert_eq!(lpsumm(&["regress", "--input", &data, "--p", "3", "--eps", "0"]).status.code(), Some(3));
}
