//! Thresholded approximate matrix multiplication in the entrywise l1 norm.
//!
//! An entry survives when its magnitude is strictly above `eps / 2` times the
//! l1 norm of its row (or column). Products of the thresholded factors differ
//! from the exact ones by at most `eps ||A||_1 ||B||_1` in entrywise l1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{MatrixF, RowBlockStream};

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 2), got {eps}")));
    }
    Ok(())
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Sparse copy of a vector holding only its large entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdedVector {
    /// `(index, value)`, ascending by index.
    pub kept: Vec<(usize, f64)>,
    pub len: usize,
    pub eps: f64,
    /// The l1 norm the threshold was taken against.
    pub norm1_reference: f64,
}

impl ThresholdedVector {
    pub fn threshold(&self) -> f64 {
        self.eps / 2.0 * self.norm1_reference
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for &(i, x) in &self.kept {
            v[i] = x;
        }
        v
    }

    /// Inner product of two sparse vectors (merge of the index lists).
    pub fn dot(&self, other: &ThresholdedVector) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.kept.len() && j < other.kept.len() {
            let (a, b) = (self.kept[i].0, other.kept[j].0);
            if a == b {
                s += self.kept[i].1 * other.kept[j].1;
                i += 1;
                j += 1;
            } else if a < b {
                i += 1;
            } else {
                j += 1;
            }
        }
        s
    }
}

/// Keeps `x_i` with `|x_i| > (eps / 2) ref_norm`. With `ref_norm >= ||x||_1`
/// at most `2 / eps` entries survive.
pub fn threshold_vector(x: &[f64], eps: f64, ref_norm: f64) -> ThresholdedVector {
    let cut = eps / 2.0 * ref_norm;
    ThresholdedVector {
        kept: x.iter().enumerate().filter(|(_, v)| v.abs() > cut).map(|(i, &v)| (i, v)).collect(),
        len: x.len(),
        eps,
        norm1_reference: ref_norm,
    }
}

/// `<x_bar, y_bar>` with each vector thresholded against its own l1 norm.
/// Always within `eps ||x||_1 ||y||_1` of `<x, y>`, and never above it when
/// both inputs are nonnegative.
pub fn sketch_inner_product(x: &[f64], y: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    Ok(threshold_vector(x, eps, l1(x)).dot(&threshold_vector(y, eps, l1(y))))
}

/// A matrix stored as thresholded rows or thresholded columns.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdedMatrix {
    pub rows: usize,
    pub cols: usize,
    /// True when `lists` holds columns.
    pub by_column: bool,
    pub lists: Vec<ThresholdedVector>,
}

impl ThresholdedMatrix {
    pub fn to_dense(&self) -> MatrixF {
        let mut data = vec![0.0; self.rows * self.cols];
        for (i, j, v) in self.triples() {
            data[i * self.cols + j] = v;
        }
        MatrixF::new(self.rows, self.cols, data).expect("shape")
    }

    /// `(row, column, value)` of every stored entry, row-major.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .lists
            .iter()
            .enumerate()
            .flat_map(|(l, tv)| {
                let by_column = self.by_column;
                tv.kept.iter().map(move |&(k, v)| if by_column { (k, l, v) } else { (l, k, v) })
            })
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    pub fn nnz(&self) -> usize {
        self.lists.iter().map(|l| l.kept.len()).sum()
    }

    /// Longest stored row or column.
    pub fn max_kept(&self) -> usize {
        self.lists.iter().map(|l| l.kept.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AmmResult {
    pub a_bar: ThresholdedMatrix,
    pub b_bar: ThresholdedMatrix,
    pub eps: f64,
    /// `eps ||A||_1 ||B||_1`.
    pub error_bound: f64,
}

impl AmmResult {
    /// `A_bar B_bar^T` for the row-wise variant, `A_bar^T B_bar` for the
    /// column-wise one, as sparse triples.
    pub fn product_triples(&self) -> Vec<(usize, usize, f64)> {
        let (la, lb) = (&self.a_bar.lists, &self.b_bar.lists);
        let mut out = Vec::new();
        for (i, x) in la.iter().enumerate() {
            if x.kept.is_empty() {
                continue;
            }
            for (j, y) in lb.iter().enumerate() {
                let v = x.dot(y);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn product_dense(&self) -> MatrixF {
        let (r, c) = (self.a_bar.lists.len(), self.b_bar.lists.len());
        let mut data = vec![0.0; r * c];
        for (i, j, v) in self.product_triples() {
            data[i * c + j] = v;
        }
        MatrixF::new(r, c, data).expect("shape")
    }
}

fn threshold_rows(m: &MatrixF, eps: f64) -> ThresholdedMatrix {
    ThresholdedMatrix {
        rows: m.rows(),
        cols: m.cols(),
        by_column: false,
        lists: m.row_iter().map(|r| threshold_vector(r, eps, l1(r))).collect(),
    }
}

/// Row-wise thresholding of `A` and `B` for the product `A B^T`.
pub fn amm_rowwise(a: &MatrixF, b: &MatrixF, eps: f64) -> Result<AmmResult> {
    check_eps(eps)?;
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!("{} vs {} columns", a.cols(), b.cols())));
    }
    let norm = |m: &MatrixF| l1(m.data());
    Ok(AmmResult {
        a_bar: threshold_rows(a, eps),
        b_bar: threshold_rows(b, eps),
        eps,
        error_bound: eps * norm(a) * norm(b),
    })
}

/// Column thresholding in one pass: running column norms decide what is kept,
/// candidates that fall below the (growing) threshold are dropped on the fly,
/// and the survivors are re-pruned against the final norms.
struct ColumnThresholder {
    eps: f64,
    norms: Vec<f64>,
    cand: Vec<Vec<(usize, f64)>>,
    rows: usize,
}

impl ColumnThresholder {
    fn new(width: usize, eps: f64) -> Self {
        ColumnThresholder { eps, norms: vec![0.0; width], cand: vec![Vec::new(); width], rows: 0 }
    }

    fn push(&mut self, row: &[f64]) {
        let i = self.rows;
        self.rows += 1;
        for (j, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            self.norms[j] += v.abs();
            let cut = self.eps / 2.0 * self.norms[j];
            let list = &mut self.cand[j];
            list.retain(|(_, x)| x.abs() > cut);
            if v.abs() > cut {
                list.push((i, v));
            }
        }
    }

    fn finish(self) -> ThresholdedMatrix {
        let eps = self.eps;
        let rows = self.rows;
        let lists = self
            .cand
            .into_iter()
            .zip(&self.norms)
            .map(|(mut list, &norm)| {
                list.retain(|(_, x)| x.abs() > eps / 2.0 * norm);
                ThresholdedVector { kept: list, len: rows, eps, norm1_reference: norm }
            })
            .collect::<Vec<_>>();
        ThresholdedMatrix { rows, cols: self.norms.len(), by_column: true, lists }
    }

    fn total(&self) -> f64 {
        self.norms.iter().sum()
    }

    fn max_candidates(&self) -> usize {
        self.cand.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// One synchronized pass over the rows of `A` and `B` for the product
/// `A^T B`. The result is exactly what column-wise offline thresholding gives.
pub fn amm_streaming_columns(
    mut stream_a: RowBlockStream<'_>,
    mut stream_b: RowBlockStream<'_>,
    eps: f64,
) -> Result<AmmResult> {
    check_eps(eps)?;
    let mut ta = ColumnThresholder::new(stream_a.width(), eps);
    let mut tb = ColumnThresholder::new(stream_b.width(), eps);
    let space = (2.0 / eps).floor() as usize;
    loop {
        match (stream_a.next_row(), stream_b.next_row()) {
            (Some(ra), Some(rb)) => {
                ta.push(&ra?);
                tb.push(&rb?);
                if ta.max_candidates() > space || tb.max_candidates() > space {
                    return Err(Error::Invariant("column candidate list exceeded 2 / eps".into()));
                }
            }
            (None, None) => break,
            _ => {
                return Err(Error::DimensionMismatch("streams of A and B have different lengths".into()));
            }
        }
    }
    let error_bound = eps * ta.total() * tb.total();
    Ok(AmmResult { a_bar: ta.finish(), b_bar: tb.finish(), eps, error_bound })
}

/// Dense column-wise offline thresholding, the reference for the streaming pass.
pub fn threshold_columns(m: &MatrixF, eps: f64) -> ThresholdedMatrix {
    let lists = (0..m.cols())
        .map(|j| {
            let c = m.column(j);
            threshold_vector(&c, eps, l1(&c))
        })
        .collect();
    ThresholdedMatrix { rows: m.rows(), cols: m.cols(), by_column: true, lists }
}
