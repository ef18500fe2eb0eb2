//! CSV and Matrix Market ingestion plus CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::matrix::MatrixF;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "mm")]
    MatrixMarket,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "mm" | "mtx" | "matrix-market" | "matrixmarket" => Ok(MatrixFormat::MatrixMarket),
            other => Err(Error::InvalidArgument(format!("unknown matrix format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip the first line of a CSV file.
    pub header: bool,
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<MatrixF> {
    load_matrix_with(path, format, LoadOptions::default())
}

pub fn load_matrix_with(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    opts: LoadOptions,
) -> Result<MatrixF> {
    let text = fs::read_to_string(path)?;
    match format {
        MatrixFormat::Csv => parse_csv(&text, opts.header),
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {:?}", tok.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value {:?}", tok.trim()) });
    }
    Ok(v)
}

pub fn parse_csv(text: &str, header: bool) -> Result<MatrixF> {
    let mut cols: Option<usize> = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if header && k == 0 {
            continue;
        }
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let before = data.len();
        for tok in raw.split(',') {
            data.push(parse_value(tok, line)?);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse {
                    line,
                    msg: format!("ragged row: {width} fields, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Parse { line: 1, msg: "no data rows".into() })?;
    MatrixF::new(rows, cols, data)
}

pub fn parse_matrix_market(text: &str) -> Result<MatrixF> {
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let fields: Vec<String> = banner.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: "missing %%MatrixMarket matrix banner".into() });
    }
    let coordinate = match fields[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(Error::Parse { line: 1, msg: format!("unsupported layout {other}") }),
    };
    if !matches!(fields[3].as_str(), "real" | "integer" | "double") {
        return Err(Error::Parse { line: 1, msg: format!("unsupported field {}", fields[3]) });
    }
    if fields[4] != "general" {
        return Err(Error::Parse { line: 1, msg: format!("unsupported symmetry {}", fields[4]) });
    }

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_idx, size_line) = body
        .next()
        .ok_or(Error::Parse { line: 2, msg: "missing size line".into() })?;
    let size_line_no = size_idx + 1;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: size_line_no,
                msg: format!("bad size field {t:?}"),
            })
        })
        .collect::<Result<_>>()?;

    if coordinate {
        if dims.len() != 3 {
            return Err(Error::Parse { line: size_line_no, msg: "expected rows cols nnz".into() });
        }
        let (r, c, nnz) = (dims[0], dims[1], dims[2]);
        let mut m = MatrixF::zeros(r, c);
        let mut seen = 0;
        for (idx, l) in body {
            let line = idx + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse { line, msg: "expected `row col value`".into() });
            }
            let parse_idx = |s: &str, bound: usize| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("bad index {s:?}") })?;
                if v == 0 || v > bound {
                    return Err(Error::Parse { line, msg: format!("index {v} out of range 1..={bound}") });
                }
                Ok(v - 1)
            };
            let i = parse_idx(t[0], r)?;
            let j = parse_idx(t[1], c)?;
            let v = parse_value(t[2], line)?;
            m.set(i, j, m.get(i, j) + v);
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::DimensionMismatch(format!("header declares {nnz} entries, found {seen}")));
        }
        Ok(m)
    } else {
        if dims.len() != 2 {
            return Err(Error::Parse { line: size_line_no, msg: "expected rows cols".into() });
        }
        let (r, c) = (dims[0], dims[1]);
        // array format is column-major
        let mut colmajor = Vec::with_capacity(r * c);
        for (idx, l) in body {
            for tok in l.split_whitespace() {
                colmajor.push(parse_value(tok, idx + 1)?);
            }
        }
        if colmajor.len() != r * c {
            return Err(Error::DimensionMismatch(format!(
                "array of {}x{} needs {} values, found {}",
                r,
                c,
                r * c,
                colmajor.len()
            )));
        }
        let mut m = MatrixF::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                m.set(i, j, colmajor[j * r + i]);
            }
        }
        Ok(m)
    }
}

/// CSV with 17 significant digits, which round-trips every f64 exactly.
pub fn to_csv_string(m: &MatrixF) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 24);
    for r in m.row_iter() {
        for (j, v) in r.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_csv(path: impl AsRef<Path>, m: &MatrixF) -> Result<()> {
    fs::write(path, to_csv_string(m))?;
    Ok(())
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let mut s = String::new();
    for x in v {
        let _ = writeln!(s, "{x:.16e}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// `(i, j, value)` triples, one per line.
pub fn write_triples(path: impl AsRef<Path>, entries: &[(usize, usize, f64)]) -> Result<()> {
    let mut s = String::from("i,j,value\n");
    for (i, j, v) in entries {
        let _ = writeln!(s, "{i},{j},{v:.16e}");
    }
    fs::write(path, s)?;
    Ok(())
}
