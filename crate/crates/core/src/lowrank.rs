//! Entrywise-l1 low-rank approximation.
//!
//! The inner solver searches over column selections: `k` columns of `X` seed
//! the left factor, the right factor is fitted by exact l1 regression and both
//! factors are then refined by alternating l1 regressions. Every candidate is
//! scored on the full matrix; the zero matrix is always a candidate. The tree
//! variant reduces blocks of rows to `k` directions, merges directions upward
//! and finally fits every row of the input against the surviving directions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::conditioning::{lewis_weights, wcb_rounding, ROUNDING_TOL};
use crate::embedding::TreeConfig;
use crate::error::{Error, Result};
use crate::linalg::{independent_columns, lstsq, numerical_rank};
use crate::matcore::{block_iter, entrywise_pnorm, MatrixF, PNorm};
use crate::regression::{solve_lp_regression, RegressionInstance, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::seeded;

/// Alternating refinements applied to every candidate.
pub const ALTERNATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMode {
    Enumerated,
    Randomized,
}

impl fmt::Display for InnerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerMode::Enumerated => "enumerated",
            InnerMode::Randomized => "randomized",
        })
    }
}

impl FromStr for InnerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enumerated" => Ok(InnerMode::Enumerated),
            "randomized" => Ok(InnerMode::Randomized),
            _ => Err(Error::InvalidArgument(format!("unknown inner mode {s:?}"))),
        }
    }
}

/// Size limits of the enumerated search and the candidate count of the
/// randomized one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerCaps {
    pub max_d: usize,
    pub max_k: usize,
    pub max_n: usize,
    pub candidates: usize,
}

impl Default for InnerCaps {
    fn default() -> Self {
        InnerCaps { max_d: 8, max_k: 2, max_n: 64, candidates: 200 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowRankResult {
    /// n x k.
    pub left: MatrixF,
    /// k x d.
    pub right: MatrixF,
    pub k: usize,
    /// `||X - left right||_1`.
    pub l1_error: f64,
    pub inner_method: InnerMode,
    /// Distinct candidates scored by the inner solver (summed over the tree).
    pub candidates: usize,
    /// The zero matrix won.
    pub zero_fallback: bool,
    /// Fewer than `k` directions survived somewhere and zeros were padded in.
    pub padded: bool,
    /// Tree levels above the leaves; 0 for a single inner call.
    pub levels: usize,
    /// Largest number of matrix entries held at once by the tree pass.
    pub memory_high_water: usize,
}

impl LowRankResult {
    pub fn product(&self) -> MatrixF {
        self.left.matmul(&self.right).expect("factor shapes")
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        json!({
            "k": self.k,
            "rows": self.left.rows(),
            "cols": self.right.cols(),
            "l1_error": self.l1_error,
            "inner_method": self.inner_method,
            "candidates": self.candidates,
            "zero_fallback": self.zero_fallback,
            "padded": self.padded,
            "levels": self.levels,
            "memory_high_water": self.memory_high_water,
        })
    }
}

fn l1(m: &MatrixF) -> f64 {
    entrywise_pnorm(m, PNorm::one())
}

/// Coefficients `C` (rows x k) minimizing `||C basis - target||_1` row by row,
/// where `basis` is k x d.
fn fit_rows(target: &MatrixF, basis: &MatrixF) -> Result<MatrixF> {
    let bt = basis.transpose();
    let k = basis.rows();
    let mut data = Vec::with_capacity(target.rows() * k);
    for row in target.row_iter() {
        let inst = RegressionInstance::new(bt.clone(), row.to_vec(), PNorm::one())?;
        data.extend(solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER)?.x);
    }
    MatrixF::new(target.rows(), k, data)
}

/// Right factor (k x d) minimizing `||left R - target||_1` column by column.
fn fit_cols(target: &MatrixF, left: &MatrixF) -> Result<MatrixF> {
    Ok(fit_rows(&target.transpose(), &left.transpose())?.transpose())
}

fn residual_l1(x: &MatrixF, left: &MatrixF, right: &MatrixF) -> Result<f64> {
    Ok(l1(&x.sub(&left.matmul(right)?)?))
}

/// Seeds the left factor with the selected columns and alternates exact l1
/// fits; each half step can only lower the error.
fn complete(x: &MatrixF, cols: &[usize], k: usize) -> Result<(MatrixF, MatrixF, f64)> {
    let n = x.rows();
    let mut left = x.select_cols(cols);
    if left.cols() < k {
        let pad = MatrixF::zeros(n, k - left.cols());
        left = hstack(&left, &pad)?;
    }
    let mut right = fit_cols(x, &left)?;
    let mut err = residual_l1(x, &left, &right)?;
    for _ in 0..ALTERNATIONS {
        let nl = fit_rows(x, &right)?;
        let nr = fit_cols(x, &nl)?;
        let ne = residual_l1(x, &nl, &nr)?;
        if ne < err {
            let gain = err - ne;
            left = nl;
            right = nr;
            err = ne;
            if gain <= 1e-12 * err.max(f64::MIN_POSITIVE) {
                break;
            }
        } else {
            break;
        }
    }
    Ok((left, right, err))
}

fn hstack(a: &MatrixF, b: &MatrixF) -> Result<MatrixF> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!("{} vs {} rows", a.rows(), b.rows())));
    }
    let mut data = Vec::with_capacity(a.rows() * (a.cols() + b.cols()));
    for (ra, rb) in a.row_iter().zip(b.row_iter()) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    MatrixF::new(a.rows(), a.cols() + b.cols(), data)
}

/// All `r`-subsets of `0..d` in lexicographic order.
fn subsets(d: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for j in start..d {
            cur.push(j);
            rec(j + 1, d, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, r, &mut Vec::new(), &mut out);
    out
}

/// Column sampling probabilities: l1 Lewis weights of the columns (rows of
/// `X^T` restricted to independent directions), rounded down to a power of two
/// in `[1 / (n d), 1]`.
fn column_probabilities(x: &MatrixF) -> Result<Vec<f64>> {
    let (n, d) = x.shape();
    let xt = x.transpose();
    let basis = xt.select_cols(&independent_columns(&xt));
    let floor = 1.0 / (n * d).max(1) as f64;
    let raw = if basis.cols() == 0 {
        vec![1.0; d]
    } else {
        lewis_weights(&basis, PNorm::one(), 500 * basis.cols(), ROUNDING_TOL)?.weights
    };
    let total: f64 = raw.iter().sum();
    Ok(raw
        .iter()
        .map(|w| {
            let p = if total > 0.0 { (w / total).clamp(floor, 1.0) } else { 1.0 };
            2f64.powf(p.log2().floor()).max(floor)
        })
        .collect())
}

fn sample_columns(probs: &[f64], r: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut avail: Vec<usize> = (0..probs.len()).collect();
    let mut out = Vec::with_capacity(r);
    while out.len() < r && !avail.is_empty() {
        let total: f64 = avail.iter().map(|&j| probs[j]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = avail.len() - 1;
        for (t, &j) in avail.iter().enumerate() {
            if u < probs[j] {
                pick = t;
                break;
            }
            u -= probs[j];
        }
        out.push(avail.remove(pick));
    }
    out.sort_unstable();
    out
}

/// Best rank-`k` l1 approximation found over the candidate column selections.
/// Enumerated mode scores every selection and is deterministic; randomized
/// mode scores up to `caps.candidates` selections drawn from rounded Lewis
/// weights. Ties go to the earliest candidate.
pub fn l1_rank_k_inner(x: &MatrixF, k: usize, mode: InnerMode, seed: u64, caps: InnerCaps) -> Result<LowRankResult> {
    let (n, d) = x.shape();
    if k == 0 {
        return Err(Error::InvalidArgument("rank must be positive".into()));
    }
    if mode == InnerMode::Enumerated && (d > caps.max_d || k > caps.max_k || n > caps.max_n) {
        return Err(Error::CapExceeded(format!(
            "enumeration limited to d <= {}, k <= {}, n <= {} (got {n} x {d}, k = {k})",
            caps.max_d, caps.max_k, caps.max_n
        )));
    }
    let r = k.min(d).min(n);
    let candidates: Vec<Vec<usize>> = match mode {
        InnerMode::Enumerated => subsets(d, r),
        InnerMode::Randomized => {
            let probs = column_probabilities(x)?;
            let mut rng = seeded(seed);
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for _ in 0..caps.candidates {
                let c = sample_columns(&probs, r, &mut rng);
                if seen.insert(c.clone()) {
                    out.push(c);
                }
            }
            out
        }
    };
    let mut best = (MatrixF::zeros(n, k), MatrixF::zeros(k, d), l1(x));
    let mut zero_fallback = true;
    if r > 0 {
        for c in &candidates {
            let (l, rt, e) = complete(x, c, k)?;
            if e < best.2 {
                best = (l, rt, e);
                zero_fallback = false;
            }
        }
    }
    let (left, right, _) = best;
    let l1_error = residual_l1(x, &left, &right)?;
    Ok(LowRankResult {
        left,
        right,
        k,
        l1_error,
        inner_method: mode,
        candidates: candidates.len(),
        zero_fallback,
        padded: false,
        levels: 0,
        memory_high_water: n * d,
    })
}

/// `W = U S` with `U` an l1 well-conditioned basis, plus the observed and
/// certified range of `||W x||_1 / ||S x||_1`.
#[derive(Debug, Clone, Serialize)]
pub struct L1Decomposition {
    pub u: MatrixF,
    /// rank x k.
    pub s: MatrixF,
    pub rank: usize,
    /// `W` was rank deficient and `S` has fewer than `k` rows.
    pub reduced: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Certified `c`: every ratio lies in `[1 / c, c]`.
    pub certified: f64,
}

const RATIO_SAMPLES: usize = 256;

/// Factors `W` (n x k) through an l1 Lewis basis. `S` is rescaled so the
/// sampled ratios are centred on 1; the certified factor follows from
/// `||W x||_1 <= alpha ||S x||_inf` and `||S x||_1 <= k beta ||W x||_1`.
/// Fails if a sampled ratio leaves the certified range.
pub fn l1_decompose_wcb(w: &MatrixF) -> Result<L1Decomposition> {
    let (n, k) = w.shape();
    let cols = independent_columns(w);
    let rank = cols.len();
    if rank == 0 {
        return Ok(L1Decomposition {
            u: MatrixF::zeros(n, 0),
            s: MatrixF::zeros(0, k),
            rank: 0,
            reduced: k > 0,
            min_ratio: f64::NAN,
            max_ratio: f64::NAN,
            certified: f64::INFINITY,
        });
    }
    let base = w.select_cols(&cols);
    let f = wcb_rounding(&base, PNorm::one(), ROUNDING_TOL)?;
    // express every column of W in the independent ones: W = base T
    let mut tdata = vec![0.0; rank * k];
    for j in 0..k {
        let t = lstsq(&base, &w.column(j))?;
        for (i, v) in t.into_iter().enumerate() {
            tdata[i * k + j] = v;
        }
    }
    let t = MatrixF::new(rank, k, tdata)?;
    let s0 = f.s.matmul(&t)?;
    let mut rng = seeded(0x1d_ec0);
    let mut dirs: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..RATIO_SAMPLES {
        dirs.push((0..k).map(|_| crate::rng::gaussian(&mut rng)).collect());
    }
    let vl1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for z in &dirs {
        let sz = vl1(&s0.mul_vec(z)?);
        if sz == 0.0 {
            continue;
        }
        let r = vl1(&w.mul_vec(z)?) / sz;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let lambda = if lo.is_finite() && lo > 0.0 { (lo * hi).sqrt() } else { 1.0 };
    let s = s0.scale(lambda);
    let u = f.u.scale(1.0 / lambda);
    let (lo, hi) = (lo / lambda, hi / lambda);
    let upper = f.cert.alpha / lambda;
    let lower = 1.0 / (rank as f64 * f.cert.beta * lambda);
    let certified = upper.max(1.0 / lower);
    if lo < lower * (1.0 - 1e-9) || hi > upper * (1.0 + 1e-9) {
        return Err(Error::Invariant(format!(
            "sampled l1 ratio range [{lo:.4e}, {hi:.4e}] escapes the certified [{lower:.4e}, {upper:.4e}]"
        )));
    }
    Ok(L1Decomposition { u, s, rank, reduced: rank < k, min_ratio: lo, max_ratio: hi, certified })
}

struct LowRankEngine {
    k: usize,
    d: usize,
    block_rows: usize,
    mode: InnerMode,
    seed: u64,
    caps: InnerCaps,
    buffers: Vec<MatrixF>,
    calls: u64,
    candidates: usize,
    padded: bool,
    high_water: usize,
}

impl LowRankEngine {
    fn held(&self) -> usize {
        self.buffers.iter().map(|b| b.rows() * self.d).sum()
    }

    /// Inner solve on `c`, then `B = W V^T`, `W = U S`; returns `S V^T`.
    fn directions(&mut self, c: &MatrixF) -> Result<MatrixF> {
        let seed = self.seed ^ self.calls.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        self.calls += 1;
        let res = l1_rank_k_inner(c, self.k, self.mode, seed, self.caps)?;
        self.candidates += res.candidates;
        let dec = l1_decompose_wcb(&res.left)?;
        if dec.reduced {
            self.padded = true;
        }
        dec.s.matmul(&res.right)
    }

    fn push(&mut self, level: usize, piece: MatrixF) -> Result<()> {
        if self.buffers.len() <= level {
            self.buffers.resize(level + 1, MatrixF::empty(self.d));
        }
        if self.buffers[level].rows() + piece.rows() > self.block_rows && self.buffers[level].rows() > 0 {
            let full = std::mem::replace(&mut self.buffers[level], MatrixF::empty(self.d));
            let up = self.directions(&full)?;
            self.push(level + 1, up)?;
        }
        self.buffers[level] = self.buffers[level].vstack(&piece)?;
        self.high_water = self.high_water.max(self.held());
        Ok(())
    }

    /// Collapses all buffers into the final `k` directions.
    fn finish(mut self) -> Result<(MatrixF, LowRankEngine)> {
        let mut level = 0;
        loop {
            let top = self.buffers.len() - 1;
            if level >= top {
                break;
            }
            if self.buffers[level].rows() > 0 {
                let m = std::mem::replace(&mut self.buffers[level], MatrixF::empty(self.d));
                let up = self.directions(&m)?;
                self.push(level + 1, up)?;
            }
            level += 1;
        }
        let last = self.buffers.pop().unwrap_or_else(|| MatrixF::empty(self.d));
        let mut p = if last.rows() > self.k { self.directions(&last)? } else { last };
        if p.rows() < self.k {
            self.padded = true;
            p = p.vstack(&MatrixF::zeros(self.k - p.rows(), self.d))?;
        }
        Ok((p, self))
    }
}

/// Merge-and-reduce l1 low-rank approximation. Leaves of `cfg.block_rows`
/// rows are reduced to `k` directions each; directions are merged up to
/// `block_rows` rows and reduced again. A second pass over `a` fits every row
/// against the final directions `P`, giving `left = Q`, `right = P`.
pub fn l1_lowrank_tree(
    a: &MatrixF,
    k: usize,
    cfg: &TreeConfig,
    mode: InnerMode,
    seed: u64,
    caps: InnerCaps,
) -> Result<LowRankResult> {
    let d = a.cols();
    if k == 0 {
        return Err(Error::InvalidArgument("rank must be positive".into()));
    }
    if cfg.block_rows < 2 * k {
        return Err(Error::InvalidArgument(format!("block_rows = {} is below 2k = {}", cfg.block_rows, 2 * k)));
    }
    let mut eng = LowRankEngine {
        k,
        d,
        block_rows: cfg.block_rows,
        mode,
        seed,
        caps,
        buffers: Vec::new(),
        calls: 0,
        candidates: 0,
        padded: false,
        high_water: 0,
    };
    let mut leaves = 0usize;
    for block in block_iter(a, cfg.block_rows)? {
        let block = block?;
        eng.high_water = eng.high_water.max(eng.held() + block.rows() * d);
        let dirs = eng.directions(&block)?;
        eng.push(0, dirs)?;
        leaves += 1;
    }
    let levels = if leaves == 0 { 0 } else { eng.buffers.len() };
    let (p, eng) = eng.finish()?;
    // second pass
    let mut qdata = Vec::with_capacity(a.rows() * k);
    for block in block_iter(a, cfg.block_rows)? {
        let q = fit_rows(&block?, &p)?;
        qdata.extend_from_slice(q.data());
    }
    let left = MatrixF::new(a.rows(), k, qdata)?;
    let l1_error = residual_l1(a, &left, &p)?;
    let total = l1(a);
    let (left, right, l1_error, zero_fallback) = if l1_error > total {
        (MatrixF::zeros(a.rows(), k), MatrixF::zeros(k, d), total, true)
    } else {
        (left, p, l1_error, false)
    };
    Ok(LowRankResult {
        left,
        right,
        k,
        l1_error,
        inner_method: mode,
        candidates: eng.candidates,
        zero_fallback,
        padded: eng.padded,
        levels,
        memory_high_water: eng.high_water,
    })
}

/// Numerical rank of the product, for checking the rank constraint.
pub fn product_rank(r: &LowRankResult) -> usize {
    numerical_rank(&r.product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::WcbMethod;
    use crate::rng::gaussian;

    fn rank_k(n: usize, d: usize, k: usize, seed: u64) -> MatrixF {
        let mut r = seeded(seed);
        let l = MatrixF::new(n, k, (0..n * k).map(|_| gaussian(&mut r)).collect()).unwrap();
        let rt = MatrixF::new(k, d, (0..k * d).map(|_| gaussian(&mut r)).collect()).unwrap();
        l.matmul(&rt).unwrap()
    }

    #[test]
    fn exact_rank_is_recovered() {
        for k in [1, 2] {
            let x = rank_k(12, 5, k, 3 + k as u64);
            let res = l1_rank_k_inner(&x, k, InnerMode::Enumerated, 0, InnerCaps::default()).unwrap();
            assert!(res.l1_error <= 1e-6 * l1(&x), "k={k} err={}", res.l1_error);
            assert_eq!(res.left.shape(), (12, k));
            assert_eq!(res.right.shape(), (k, 5));
        }
    }

    #[test]
    fn spike_is_ignored() {
        let mut x = MatrixF::from_rows(&[[1.0, 2.0, -1.0, 0.5]; 6]).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                x.set(i, j, x.get(i, j) * (i as f64 + 1.0));
            }
        }
        x.set(2, 1, x.get(2, 1) + 7.0);
        let res = l1_rank_k_inner(&x, 1, InnerMode::Enumerated, 0, InnerCaps::default()).unwrap();
        assert!(res.l1_error <= 7.0 + 1e-6, "{}", res.l1_error);
    }

    #[test]
    fn caps_and_zero_fallback() {
        let x = MatrixF::zeros(70, 3);
        assert!(matches!(
            l1_rank_k_inner(&x, 1, InnerMode::Enumerated, 0, InnerCaps::default()),
            Err(Error::CapExceeded(_))
        ));
        let z = MatrixF::zeros(5, 3);
        let res = l1_rank_k_inner(&z, 1, InnerMode::Enumerated, 0, InnerCaps::default()).unwrap();
        assert_eq!(res.l1_error, 0.0);
        assert!(res.zero_fallback);
    }

    #[test]
    fn enumerated_beats_randomized_and_is_deterministic() {
        let mut r = seeded(8);
        let x = MatrixF::new(10, 6, (0..60).map(|_| gaussian(&mut r)).collect()).unwrap();
        let caps = InnerCaps { candidates: 5, ..InnerCaps::default() };
        let e = l1_rank_k_inner(&x, 2, InnerMode::Enumerated, 0, caps).unwrap();
        let e2 = l1_rank_k_inner(&x, 2, InnerMode::Enumerated, 0, caps).unwrap();
        assert_eq!(e.left.data(), e2.left.data());
        let rnd = l1_rank_k_inner(&x, 2, InnerMode::Randomized, 4, caps).unwrap();
        assert!(e.l1_error <= rnd.l1_error + 1e-12);
        assert!(e.l1_error <= l1(&x));
    }

    #[test]
    fn decompose_examples() {
        let dec = l1_decompose_wcb(&MatrixF::identity(2)).unwrap();
        assert!((dec.min_ratio - 1.0).abs() < 1e-12 && (dec.max_ratio - 1.0).abs() < 1e-12);
        let one = MatrixF::from_rows(&[[1.0], [-2.0], [3.0]]).unwrap();
        let dec = l1_decompose_wcb(&one).unwrap();
        assert!((dec.max_ratio / dec.min_ratio - 1.0).abs() < 1e-12);
        let mut r = seeded(5);
        let w = MatrixF::new(20, 2, (0..40).map(|_| gaussian(&mut r)).collect()).unwrap();
        let dec = l1_decompose_wcb(&w).unwrap();
        assert!(dec.min_ratio >= 1.0 / dec.certified && dec.max_ratio <= dec.certified);
    }

    #[test]
    fn tree_on_exact_rank() {
        let x = rank_k(64, 6, 2, 12);
        let cfg = TreeConfig::for_rows(64, 6, 0.5, PNorm::one(), WcbMethod::Rounding).unwrap();
        let res = l1_lowrank_tree(&x, 2, &cfg, InnerMode::Enumerated, 0, InnerCaps::default()).unwrap();
        assert!(res.l1_error <= 1e-5 * l1(&x), "{}", res.l1_error);
        assert!(res.levels >= 1);
        assert!(product_rank(&res) <= 2);
    }
}
