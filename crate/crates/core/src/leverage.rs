//! lp leverage scores, threshold checks and single-pass extraction of
//! high-leverage rows, plus the two heuristic baselines (row-norm surrogate
//! scores and uniform reservoir sampling).

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::conditioning::{wcb, WcbCertificate, WcbFactorization, WcbMethod};
use crate::error::{Error, Result};
use crate::linalg::{independent_columns, numerical_rank};
use crate::matcore::{vector_pnorm_pow, MatrixF, PNorm, RowBlockStream};
use crate::rng::seeded;

/// `w_i = ||e_i^T U||_p^p` for every row of the basis.
pub fn leverage_scores(f: &WcbFactorization) -> Vec<f64> {
    let p = f.cert.p;
    f.u.row_iter().map(|r| vector_pnorm_pow(r, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoresSummary {
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl ScoresSummary {
    pub fn of(scores: &[f64]) -> Self {
        if scores.is_empty() {
            return ScoresSummary { min: 0.0, max: 0.0, sum: 0.0 };
        }
        ScoresSummary {
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sum: scores.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LeverageReport {
    pub scores: Vec<f64>,
    pub p: PNorm,
    pub cert: WcbCertificate,
    pub threshold: f64,
    /// `{ i : scores[i] > threshold }`, ascending.
    pub kept: Vec<usize>,
}

impl LeverageReport {
    pub fn from_factorization(f: &WcbFactorization, threshold: f64) -> Self {
        let scores = leverage_scores(f);
        let kept = above(&scores, threshold);
        LeverageReport { scores, p: f.cert.p, cert: f.cert, threshold, kept }
    }

    /// Offline global scores of `a` under the given basis method.
    pub fn global(a: &MatrixF, p: PNorm, method: WcbMethod, seed: u64, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let f = wcb(a, p, method, seed)?;
        Ok(Self::from_factorization(&f, tau))
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "p": self.p,
            "method": self.cert.method,
            "tau": self.threshold,
            "adjust": 1.0,
            "kept_indices": self.kept,
            "scores_summary": ScoresSummary::of(&self.scores),
            "alpha": self.cert.alpha,
            "beta": self.cert.beta,
        })
    }
}

fn above(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > threshold)
        .map(|(i, _)| i)
        .collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be finite and nonnegative, got {tau}")));
    }
    Ok(())
}

/// Rows of `w` whose score under `f` is strictly above `tau`, with their indices.
pub fn lev_score_check(f: &WcbFactorization, w: &MatrixF, tau: f64) -> Result<(MatrixF, Vec<usize>)> {
    check_tau(tau)?;
    if f.u.rows() != w.rows() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows but the checked matrix has {}",
            f.u.rows(),
            w.rows()
        )));
    }
    let kept = above(&leverage_scores(f), tau);
    Ok((w.select_rows(&kept), kept))
}

/// How the local threshold of each block is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalThreshold {
    /// Keep everything whose global score may exceed `tau`: the local cut is
    /// `tau / adjust` with `adjust` from the block's certificate.
    Global(f64),
    /// Keep local scores above `alpha^p / m`, so at most `m` rows survive.
    Budget(usize),
}

/// State of the single-pass summarizer: the retained rows in original
/// coordinates, where they came from, and bookkeeping for the space bounds.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryState {
    /// Retained rows, verbatim.
    pub b: MatrixF,
    /// Original row index of every retained row, ascending.
    pub origin: Vec<usize>,
    /// Local score of every retained row at the last check.
    pub scores: Vec<f64>,
    pub budget_rows: usize,
    pub tau: f64,
    /// Local/global slack of the last block, `d * alpha^p * max(beta, beta^p)`.
    pub adjust: f64,
    pub local_threshold: f64,
    /// Space bound `alpha^p / local_threshold` of the last block.
    pub cap: f64,
    /// Largest retained row count after any reduction.
    pub max_rows: usize,
    pub blocks: usize,
    /// Blocks whose basis had to be computed on a subset of the columns.
    pub rank_deficient_blocks: usize,
    pub p: PNorm,
    pub method: String,
    pub last_cert: Option<WcbCertificate>,
}

impl SummaryState {
    fn new(d: usize, budget_rows: usize, tau: f64, p: PNorm, method: &str) -> Self {
        SummaryState {
            b: MatrixF::empty(d),
            origin: Vec::new(),
            scores: Vec::new(),
            budget_rows,
            tau,
            adjust: 1.0,
            local_threshold: tau,
            cap: f64::INFINITY,
            max_rows: 0,
            blocks: 0,
            rank_deficient_blocks: 0,
            p,
            method: method.to_string(),
            last_cert: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.b.rows()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "p": self.p,
            "method": self.method,
            "tau": self.tau,
            "adjust": self.adjust,
            "kept_indices": self.origin,
            "scores_summary": ScoresSummary::of(&self.scores),
            "local_threshold": self.local_threshold,
            "cap": self.cap,
            "max_rows": self.max_rows,
            "blocks": self.blocks,
            "rank_deficient_blocks": self.rank_deficient_blocks,
        })
    }

    fn retain(&mut self, w: MatrixF, origin: Vec<usize>, scores: &[f64], threshold: f64) {
        let kept = above(scores, threshold);
        self.b = w.select_rows(&kept);
        self.origin = kept.iter().map(|&i| origin[i]).collect();
        self.scores = kept.iter().map(|&i| scores[i]).collect();
        self.max_rows = self.max_rows.max(self.b.rows());
    }
}

/// Basis for `w`; when `w` is rank deficient it is computed on a maximal set
/// of independent columns. `None` for a zero matrix.
fn block_basis(
    w: &MatrixF,
    p: PNorm,
    method: WcbMethod,
    seed: u64,
) -> Result<Option<(WcbFactorization, bool)>> {
    if w.rows() > 0 && numerical_rank(w) == w.cols() {
        return Ok(Some((wcb(w, p, method, seed)?, false)));
    }
    let cols = independent_columns(w);
    if cols.is_empty() {
        return Ok(None);
    }
    Ok(Some((wcb(&w.select_cols(&cols), p, method, seed)?, true)))
}

fn block_seed(seed: u64, block: usize) -> u64 {
    seed ^ (block as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Single-pass summarizer shared by the threshold rules. Each block `A'` is
/// appended below the carried rows `B`, a basis of `[B; A']` is computed and
/// only rows whose local score clears the threshold are carried on.
pub fn stream_summarize(
    stream: RowBlockStream<'_>,
    p: PNorm,
    rule: LocalThreshold,
    method: WcbMethod,
    seed: u64,
) -> Result<SummaryState> {
    let d = stream.width();
    summarize_leading(stream, d, p, rule, method, seed, &mut |_, _| Ok(()))
}

/// Like [`stream_summarize`], but scores rows by their first `d` columns only
/// while carrying whole rows (used to keep the targets of a regression alongside).
pub(crate) fn summarize_leading(
    stream: RowBlockStream<'_>,
    d: usize,
    p: PNorm,
    rule: LocalThreshold,
    method: WcbMethod,
    seed: u64,
    observe: &mut dyn FnMut(&MatrixF, usize) -> Result<()>,
) -> Result<SummaryState> {
    let width = stream.width();
    if d > width {
        return Err(Error::DimensionMismatch(format!("{d} leading columns of a width-{width} stream")));
    }
    let lead: Vec<usize> = (0..d).collect();
    if d == 0 {
        return Err(Error::InvalidArgument("stream has zero columns".into()));
    }
    let tau = match rule {
        LocalThreshold::Global(t) => {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidArgument(format!("tau must be positive, got {t}")));
            }
            t
        }
        LocalThreshold::Budget(m) => {
            if m == 0 {
                return Err(Error::InvalidArgument("budget must be positive".into()));
            }
            1.0 / m as f64
        }
    };
    let mut state = SummaryState::new(width, stream.block_size(), tau, p, method.name());
    let mut next = 0usize;
    for block in stream {
        let block = block?;
        observe(&block, next)?;
        let w = state.b.vstack(&block)?;
        let mut origin = std::mem::take(&mut state.origin);
        origin.extend(next..next + block.rows());
        next += block.rows();
        let seed = block_seed(seed, state.blocks);
        state.blocks += 1;
        let basis_input = if d == width { w.clone() } else { w.select_cols(&lead) };
        let Some((f, reduced)) = block_basis(&basis_input, p, method, seed)? else {
            // all-zero rows carry no leverage
            state.retain(w, origin, &[], f64::INFINITY);
            continue;
        };
        if reduced {
            state.rank_deficient_blocks += 1;
        }
        let scores = leverage_scores(&f);
        let mass = f.cert.alpha_pow();
        let adjust = f.cert.local_adjust(d);
        let threshold = match rule {
            LocalThreshold::Global(t) => t / adjust,
            LocalThreshold::Budget(m) => mass / m as f64,
        };
        state.adjust = adjust;
        state.local_threshold = threshold;
        state.cap = mass / threshold;
        state.last_cert = Some(f.cert);
        state.retain(w, origin, &scores, threshold);
        if state.b.rows() as f64 > state.cap * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "summary holds {} rows, above the space bound {:.3}",
                state.b.rows(),
                state.cap
            )));
        }
    }
    Ok(state)
}

/// Every row whose global leverage may exceed `tau` in one pass over the
/// stream, using the local threshold `tau / (d * alpha^p * max(beta, beta^p))`.
pub fn stream_high_leverage(
    stream: RowBlockStream<'_>,
    p: PNorm,
    tau: f64,
    method: WcbMethod,
    seed: u64,
) -> Result<SummaryState> {
    stream_summarize(stream, p, LocalThreshold::Global(tau), method, seed)
}

/// Local and global scores of the rows in one block of `a`.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `(row of a, global score, local score)`.
    pub pairs: Vec<(usize, f64, f64)>,
    pub global_cert: WcbCertificate,
    pub local_cert: WcbCertificate,
    pub d: usize,
}

impl GapReport {
    /// `d * alpha^p * beta` with alpha from the global basis and beta from the local one.
    pub fn drop_factor(&self) -> f64 {
        self.d as f64 * self.global_cert.alpha_pow() * self.local_cert.beta
    }

    /// Rows where the local score is below `global / factor`.
    pub fn violations(&self, factor: f64) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|(_, w, wl)| *wl < w / factor)
            .map(|(i, _, _)| *i)
            .collect()
    }
}

pub fn local_global_gap(
    a: &MatrixF,
    block_rows: &[usize],
    p: PNorm,
    method: WcbMethod,
    seed: u64,
) -> Result<GapReport> {
    if block_rows.is_empty() {
        return Err(Error::InvalidArgument("block must contain at least one row".into()));
    }
    if let Some(&bad) = block_rows.iter().find(|&&i| i >= a.rows()) {
        return Err(Error::InvalidArgument(format!("row {bad} outside a matrix of {} rows", a.rows())));
    }
    let global = wcb(a, p, method, seed)?;
    let block = a.select_rows(block_rows);
    let local = wcb(&block, p, method, seed)?;
    let w = leverage_scores(&global);
    let wl = leverage_scores(&local);
    Ok(GapReport {
        pairs: block_rows.iter().zip(&wl).map(|(&i, &l)| (i, w[i], l)).collect(),
        global_cert: global.cert,
        local_cert: local.cert,
        d: a.cols(),
    })
}

/// `||e_i^T B||_2^2 / ||B||_F^2`; the caller keeps rows above `2 / m`.
pub fn surrogate_scores(b: &MatrixF) -> Result<Vec<f64>> {
    let total: f64 = b.data().iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("surrogate scores of a zero matrix".into()));
    }
    Ok(b.row_iter().map(|r| r.iter().map(|x| x * x).sum::<f64>() / total).collect())
}

/// Streaming baseline that keeps rows whose surrogate score in `[B; A']`
/// exceeds `2 / m`.
pub fn stream_surrogate(stream: RowBlockStream<'_>, m: usize) -> Result<SummaryState> {
    if m == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let d = stream.width();
    let threshold = 2.0 / m as f64;
    let mut state = SummaryState::new(d, stream.block_size(), threshold, PNorm::two(), "identity");
    state.local_threshold = threshold;
    state.cap = m as f64 / 2.0;
    let mut next = 0usize;
    for block in stream {
        let block = block?;
        let w = state.b.vstack(&block)?;
        let mut origin = std::mem::take(&mut state.origin);
        origin.extend(next..next + block.rows());
        next += block.rows();
        state.blocks += 1;
        let scores = match surrogate_scores(&w) {
            Ok(s) => s,
            Err(_) => vec![0.0; w.rows()],
        };
        state.retain(w, origin, &scores, threshold);
    }
    Ok(state)
}

/// Uniform sample of exactly `min(m, n)` rows by reservoir sampling, with
/// their original indices; rows are returned in input order.
pub fn uniform_sample_indexed(
    mut stream: RowBlockStream<'_>,
    m: usize,
    seed: u64,
) -> Result<(MatrixF, Vec<usize>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let d = stream.width();
    let mut rng = seeded(seed);
    let mut reservoir: Vec<(usize, Vec<f64>)> = Vec::with_capacity(m);
    let mut t = 0usize;
    while let Some(row) = stream.next_row() {
        let row = row?;
        if t < m {
            reservoir.push((t, row));
        } else {
            let j = rng.random_range(0..=t);
            if j < m {
                reservoir[j] = (t, row);
            }
        }
        t += 1;
    }
    reservoir.sort_by_key(|(i, _)| *i);
    let origin: Vec<usize> = reservoir.iter().map(|(i, _)| *i).collect();
    let data: Vec<f64> = reservoir.into_iter().flat_map(|(_, r)| r).collect();
    Ok((MatrixF::new(origin.len(), d, data)?, origin))
}

pub fn uniform_sample(stream: RowBlockStream<'_>, m: usize, seed: u64) -> Result<MatrixF> {
    Ok(uniform_sample_indexed(stream, m, seed)?.0)
}
