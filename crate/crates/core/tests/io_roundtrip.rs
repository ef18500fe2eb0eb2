use std::fmt::Write;

use proptest::prelude::*;
use tempfile::TempDir;

use lpsumm::matcore::{load_matrix, load_matrix_with, parse_csv, to_csv_string, write_csv, LoadOptions, MatrixFormat};
use lpsumm::MatrixF;

fn matrix_strategy() -> impl Strategy<Value = MatrixF> {
    (1usize..12, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1e12f64..1e12, n * d).prop_map(move |v| MatrixF::new(n, d, v).unwrap())
    })
}

fn coordinate_mm(m: &MatrixF) -> String {
    let mut entries = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if m.get(i, j) != 0.0 {
                entries.push((i, j, m.get(i, j)));
            }
        }
    }
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n% comment\n");
    let _ = writeln!(s, "{} {} {}", m.rows(), m.cols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(s, "{} {} {v:e}", i + 1, j + 1);
    }
    s
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(m in matrix_strategy()) {
        let back = parse_csv(&to_csv_string(&m), false).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn matrix_market_matches_csv(m in matrix_strategy()) {
        let dir = TempDir::new().unwrap();
        let csv = dir.path().join("m.csv");
        let mtx = dir.path().join("m.mtx");
        write_csv(&csv, &m).unwrap();
        std::fs::write(&mtx, coordinate_mm(&m)).unwrap();
        prop_assert_eq!(load_matrix(&csv, MatrixFormat::Csv).unwrap(), m.clone());
        prop_assert_eq!(load_matrix(&mtx, MatrixFormat::MatrixMarket).unwrap(), m);
    }
}

#[test]
fn array_layout_is_column_major() {
    let text = "%%MatrixMarket matrix array real general\n2 2\n1\n3\n2\n4\n";
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("a.mtx");
    std::fs::write(&path, text).unwrap();
    let m = load_matrix(&path, MatrixFormat::MatrixMarket).unwrap();
    assert_eq!(m, MatrixF::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
}

#[test]
fn header_line_is_skipped_on_request() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("h.csv");
    std::fs::write(&path, "x,y\n1,2\n").unwrap();
    assert!(load_matrix(&path, MatrixFormat::Csv).is_err());
    let m = load_matrix_with(&path, MatrixFormat::Csv, LoadOptions { header: true }).unwrap();
    assert_eq!(m.shape(), (1, 2));
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(parse_csv("1,2\n3\n", false).is_err());
    assert!(parse_csv("1,nan\n", false).is_err());
    assert!(parse_csv("", false).is_err());
    assert!(lpsumm::matcore::parse_matrix_market("%%MatrixMarket matrix coordinate complex general\n1 1 0\n").is_err());
}
