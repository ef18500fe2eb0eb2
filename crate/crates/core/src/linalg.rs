//! Dense factorizations backed by nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore::MatrixF;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn singular_values(a: &MatrixF) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.to_na().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn numerical_rank(a: &MatrixF) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > RANK_TOL * top).count(),
        _ => 0,
    }
}

pub fn require_full_column_rank(a: &MatrixF) -> Result<()> {
    let r = numerical_rank(a);
    if r < a.cols() {
        return Err(Error::RankDeficient { rank: r, expected: a.cols() });
    }
    Ok(())
}

/// Greedy maximal set of linearly independent columns, in column order.
pub fn independent_columns(a: &MatrixF) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..a.cols() {
        let mut trial = keep.clone();
        trial.push(j);
        if numerical_rank(&a.select_cols(&trial)) == trial.len() {
            keep = trial;
        }
    }
    keep
}

/// Thin QR, `A = Q R` with `Q` n x d and `R` d x d upper triangular (n >= d).
pub fn thin_qr(a: &MatrixF) -> (MatrixF, MatrixF) {
    let qr = a.to_na().qr();
    (MatrixF::from_na(&qr.q()), MatrixF::from_na(&qr.r()))
}

#[cfg(test)]
pub fn invert(m: &MatrixF) -> Result<MatrixF> {
    m.to_na()
        .try_inverse()
        .map(|inv| MatrixF::from_na(&inv))
        .ok_or_else(|| Error::RankDeficient { rank: numerical_rank(m), expected: m.cols() })
}

/// Inverse of an upper-triangular matrix by back substitution.
pub fn invert_upper(r: &MatrixF) -> Result<MatrixF> {
    let na = r.to_na();
    let d = na.nrows();
    let top = (0..d).fold(0.0_f64, |m, i| m.max(na[(i, i)].abs()));
    if (0..d).any(|i| na[(i, i)].abs() <= RANK_TOL * top) || top == 0.0 {
        return Err(Error::RankDeficient { rank: numerical_rank(r), expected: d });
    }
    let inv = na
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or(Error::RankDeficient { rank: 0, expected: d })?;
    Ok(MatrixF::from_na(&inv))
}

/// Least-squares solution of `A x ~ b` via SVD.
pub fn lstsq(a: &MatrixF, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} rows vs rhs of {}", a.rows(), b.len())));
    }
    if a.cols() == 0 {
        return Ok(Vec::new());
    }
    let svd = a.to_na().svd(true, true);
    let top = svd.singular_values.max();
    let x = svd
        .solve(&DVector::from_column_slice(b), RANK_TOL * top.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Inverse of a symmetric positive (semi)definite matrix. Returns the inverse
/// and whether a `1e-12 * trace` ridge had to be added.
pub fn spd_inverse(g: &MatrixF) -> (MatrixF, bool) {
    let na = g.to_na();
    if let Some(ch) = na.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|x| x.is_finite()) {
            return (MatrixF::from_na(&inv), false);
        }
    }
    let d = na.nrows();
    let ridge = 1e-12 * na.trace().abs().max(f64::MIN_POSITIVE);
    let reg = na + DMatrix::identity(d, d) * ridge;
    let inv = reg
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| reg.try_inverse())
        .unwrap_or_else(|| DMatrix::zeros(d, d));
    (MatrixF::from_na(&inv), true)
}

/// Right singular vector belonging to the smallest singular value.
pub fn smallest_right_singular_vector(a: &MatrixF) -> Option<Vec<f64>> {
    if a.cols() == 0 || a.rows() < a.cols() {
        return None;
    }
    let svd = a.to_na().svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    Some(vt.row(k).iter().copied().collect())
}

/// Thin SVD `A = U diag(s) V^T` with singular values in descending order.
pub fn thin_svd(a: &MatrixF) -> (MatrixF, Vec<f64>, MatrixF) {
    let svd = a.to_na().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u = MatrixF::from_na(&u).select_cols(&order);
    let vt = MatrixF::from_na(&vt).select_rows(&order);
    (u, s, vt)
}

/// `A^T diag(w) A`.
pub fn weighted_gram(a: &MatrixF, w: &[f64]) -> MatrixF {
    let d = a.cols();
    let mut g = vec![0.0; d * d];
    for (row, &wi) in a.row_iter().zip(w) {
        for j in 0..d {
            let s = wi * row[j];
            if s == 0.0 {
                continue;
            }
            for k in j..d {
                g[j * d + k] += s * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            g[j * d + k] = g[k * d + j];
        }
    }
    MatrixF::from_raw(d, d, g)
}

/// `a_i^T M a_i` for every row `a_i`.
pub fn row_quadratic_forms(a: &MatrixF, m: &MatrixF) -> Vec<f64> {
    a.row_iter()
        .map(|r| {
            let mut acc = 0.0;
            for j in 0..r.len() {
                let mut t = 0.0;
                for k in 0..r.len() {
                    t += m.get(j, k) * r[k];
                }
                acc += r[j] * t;
            }
            acc
        })
        .collect()
}
