//! lp subspace embeddings by merge-and-reduce.
//!
//! A block `B` is reduced to the `d x d` change of basis `S` of a
//! well-conditioned factorization `B = U S`, scaled so that
//! `||S x||_p <= ||B x||_p` holds exactly. Summaries are concatenated up to
//! `block_rows` rows and reduced again, level by level, until what is left
//! fits in one block.

use serde::Serialize;

use crate::conditioning::{test_directions, wcb, WcbCertificate, WcbMethod};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, singular_values, thin_svd};
use crate::matcore::{block_iter, vector_pnorm, MatrixF, PNorm, RowBlockStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeConfig {
    pub gamma: f64,
    /// Rows per block; at least `2 d` so that every merge shrinks the data.
    pub block_rows: usize,
    pub p: PNorm,
    pub method: WcbMethod,
    pub seed: u64,
}

impl TreeConfig {
    /// Blocks of `max(ceil(n^gamma), 2 d)` rows.
    pub fn for_rows(n: usize, d: usize, gamma: f64, p: PNorm, method: WcbMethod) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let b = (n.max(1) as f64).powf(gamma).ceil() as usize;
        Ok(TreeConfig { gamma, block_rows: b.max(2 * d).max(1), p, method, seed: 0 })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_block_rows(mut self, b: usize) -> Self {
        self.block_rows = b;
        self
    }

    /// Level budget `ceil(1 / gamma) + 1`.
    pub fn max_levels(&self) -> usize {
        (1.0 / self.gamma).ceil() as usize + 1
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.p.is_inf() {
            return Err(Error::InvalidArgument("subspace embeddings need a finite p".into()));
        }
        if self.block_rows < 2 * d {
            return Err(Error::InvalidArgument(format!(
                "block_rows = {} is below 2d = {}; merges would not shrink",
                self.block_rows,
                2 * d
            )));
        }
        Ok(())
    }
}

/// Output of one reduce step.
#[derive(Debug, Clone, Serialize)]
pub struct ReduceOutput {
    /// `d x d` summary; rows beyond the numerical rank are zero.
    pub summary: MatrixF,
    /// Certified `d_eff`: `||B x||_p / d_eff <= ||S x||_p <= ||B x||_p`.
    pub distortion: f64,
    /// Largest over smallest sampled `||U y||_p / ||y||_p`, for reporting.
    pub sampled_distortion: f64,
    pub rank: usize,
    pub rank_deficient: bool,
    pub cert: Option<WcbCertificate>,
}

/// Provable `lo, hi` with `lo ||y||_p <= ||U y||_p <= hi ||y||_p`.
fn norm_bounds(u: &MatrixF, p: PNorm) -> (f64, f64) {
    let pv = p.value();
    let (n, r) = (u.rows() as f64, u.cols() as f64);
    let s = singular_values(u);
    let (smax, smin) = (s[0], *s.last().unwrap());
    // row-wise Hoelder: |u_i . y| <= ||u_i||_q ||y||_p
    let q = p.dual();
    let holder = u.row_iter().map(|row| p.pow(vector_pnorm(row, q))).sum::<f64>().powf(1.0 / pv);
    if pv == 2.0 {
        (smin, smax)
    } else if pv < 2.0 {
        let lo = smin * r.powf(0.5 - 1.0 / pv);
        let hi = holder.min(n.powf(1.0 / pv - 0.5) * smax);
        (lo, hi)
    } else {
        let lo = smin * n.powf(1.0 / pv - 0.5);
        let hi = holder.min(r.powf(0.5 - 1.0 / pv) * smax);
        (lo, hi)
    }
}

fn sampled_spread(u: &MatrixF, p: PNorm, seed: u64) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for y in test_directions(u, p, 64, seed) {
        let ratio = vector_pnorm(&u.mul_vec(&y).expect("width"), p) / vector_pnorm(&y, p);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Reduces `b` to a `d x d` summary. A rank-deficient block is first written
/// as `U_r (Sigma_r V_r^T)` through its thin SVD; the summary then has zero
/// rows below the rank and the sandwich still holds for every `x`.
pub fn reduce_block(b: &MatrixF, p: PNorm, method: WcbMethod, seed: u64) -> Result<ReduceOutput> {
    let d = b.cols();
    if p.is_inf() {
        return Err(Error::InvalidArgument("reduce needs a finite p".into()));
    }
    let rank = if b.rows() == 0 { 0 } else { numerical_rank(b) };
    if rank == 0 {
        return Ok(ReduceOutput {
            summary: MatrixF::zeros(d, d),
            distortion: 1.0,
            sampled_distortion: 1.0,
            rank,
            rank_deficient: d > 0,
            cert: None,
        });
    }
    let (u, s, cert) = if rank == d {
        let f = wcb(b, p, method, seed)?;
        (f.u, f.s, f.cert)
    } else {
        let (ul, sv, vt) = thin_svd(b);
        let keep: Vec<usize> = (0..rank).collect();
        let basis = ul.select_cols(&keep);
        let mut coef = vt.select_rows(&keep);
        for i in 0..rank {
            for j in 0..d {
                coef.set(i, j, coef.get(i, j) * sv[i]);
            }
        }
        let f = wcb(&basis, p, method, seed)?;
        (f.u, f.s.matmul(&coef)?, f.cert)
    };
    let (lo, hi) = norm_bounds(&u, p);
    if !(lo > 0.0) {
        return Err(Error::RankDeficient { rank: rank.saturating_sub(1), expected: rank });
    }
    let mut summary = s.scale(lo);
    if rank < d {
        summary = summary.vstack(&MatrixF::zeros(d - rank, d))?;
    }
    Ok(ReduceOutput {
        summary,
        distortion: (hi / lo).max(1.0),
        sampled_distortion: sampled_spread(&u, p, seed),
        rank,
        rank_deficient: rank < d,
        cert: Some(cert),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceNode {
    pub level: usize,
    pub input_rows: usize,
    pub output_rows: usize,
    pub certified_distortion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingResult {
    /// Final summary, at most `block_rows x d`.
    pub t: MatrixF,
    pub levels_used: usize,
    /// Nominal per-level factor `d`.
    pub per_level_distortion_bound: f64,
    /// Nominal `d^{-levels_used}`.
    pub total_lower_factor: f64,
    /// Product of certified per-level factors along the worst root path:
    /// `||A x||_p / certified_distortion <= ||T x||_p <= ||A x||_p`.
    pub certified_distortion: f64,
    /// Largest certified factor seen at each level, level 1 first.
    pub per_level_certified: Vec<f64>,
    pub trace: Vec<TraceNode>,
    /// Peak count of stored numbers (buffers plus the incoming block).
    pub memory_high_water: usize,
    pub rank_deficient: bool,
}

impl EmbeddingResult {
    pub fn trace_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.trace).expect("trace serializes")
    }
}

/// A summarized stretch of the input: `||A_piece x|| / dist <= ||m x|| <= ||A_piece x||`.
struct Piece {
    m: MatrixF,
    dist: f64,
    depth: usize,
}

struct Engine {
    cfg: TreeConfig,
    d: usize,
    /// `buffers[k]` holds outputs of level `k`; raw tails sit in level 1.
    buffers: Vec<Vec<Piece>>,
    trace: Vec<TraceNode>,
    per_level: Vec<f64>,
    reduces: u64,
    high_water: usize,
    rank_deficient: bool,
}

fn rows_of(pieces: &[Piece]) -> usize {
    pieces.iter().map(|p| p.m.rows()).sum()
}

fn concat(pieces: &[Piece], d: usize) -> Result<MatrixF> {
    let mut data = Vec::with_capacity(rows_of(pieces) * d);
    for p in pieces {
        data.extend_from_slice(p.m.data());
    }
    MatrixF::new(rows_of(pieces), d, data)
}

impl Engine {
    fn new(cfg: TreeConfig, d: usize) -> Self {
        Engine {
            cfg,
            d,
            buffers: vec![Vec::new(), Vec::new()],
            trace: Vec::new(),
            per_level: Vec::new(),
            reduces: 0,
            high_water: 0,
            rank_deficient: false,
        }
    }

    fn stored_rows(&self) -> usize {
        self.buffers.iter().map(|b| rows_of(b)).sum()
    }

    /// Merge `pieces` and reduce them into one level-`level` summary.
    fn reduce(&mut self, pieces: Vec<Piece>, level: usize) -> Result<Piece> {
        let merged = concat(&pieces, self.d)?;
        let seed = self.cfg.seed ^ self.reduces.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        self.reduces += 1;
        let out = reduce_block(&merged, self.cfg.p, self.cfg.method, seed)?;
        self.rank_deficient |= out.rank_deficient;
        self.trace.push(TraceNode {
            level,
            input_rows: merged.rows(),
            output_rows: out.summary.rows(),
            certified_distortion: out.distortion,
        });
        if self.per_level.len() < level {
            self.per_level.resize(level, 1.0);
        }
        self.per_level[level - 1] = self.per_level[level - 1].max(out.distortion);
        let inner = pieces.iter().map(|p| p.dist).fold(1.0, f64::max);
        let depth = pieces.iter().map(|p| p.depth).max().unwrap_or(0) + 1;
        Ok(Piece { m: out.summary, dist: inner * out.distortion, depth })
    }

    /// Appends a level-`level` piece; a buffer that cannot take another
    /// `d`-row summary is reduced right away and sent up.
    fn push(&mut self, level: usize, piece: Piece) -> Result<()> {
        if self.buffers.len() <= level + 1 {
            self.buffers.resize_with(level + 2, Vec::new);
        }
        let b = self.cfg.block_rows;
        if !self.buffers[level].is_empty() && rows_of(&self.buffers[level]) + piece.m.rows() > b {
            let full = std::mem::take(&mut self.buffers[level]);
            let s = self.reduce(full, level + 1)?;
            self.push(level + 1, s)?;
        }
        self.buffers[level].push(piece);
        if rows_of(&self.buffers[level]) + self.d > b {
            let full = std::mem::take(&mut self.buffers[level]);
            let s = self.reduce(full, level + 1)?;
            self.push(level + 1, s)?;
        }
        Ok(())
    }

    fn leaf(&mut self, block: MatrixF) -> Result<()> {
        self.high_water = self.high_water.max((self.stored_rows() + block.rows()) * self.d);
        let raw = Piece { m: block, dist: 1.0, depth: 0 };
        if raw.m.rows() >= self.d {
            let s = self.reduce(vec![raw], 1)?;
            self.push(1, s)
        } else {
            // short tail: merged upward without its own reduce
            self.push(1, raw)
        }
    }

    fn finish(mut self) -> Result<EmbeddingResult> {
        while self.stored_rows() > self.cfg.block_rows {
            let level = (0..self.buffers.len())
                .find(|&k| !self.buffers[k].is_empty())
                .expect("rows are stored somewhere");
            let pieces = std::mem::take(&mut self.buffers[level]);
            let up = if pieces.len() == 1 && pieces[0].m.rows() <= self.d {
                pieces.into_iter().next().unwrap()
            } else {
                self.reduce(pieces, level + 1)?
            };
            self.push(level + 1, up)?;
        }
        let mut pieces: Vec<Piece> = Vec::new();
        for buf in self.buffers.into_iter().rev() {
            pieces.extend(buf);
        }
        let t = concat(&pieces, self.d)?;
        let levels_used = pieces.iter().map(|p| p.depth).max().unwrap_or(0);
        let certified = pieces.iter().map(|p| p.dist).fold(1.0, f64::max);
        let d = self.d as f64;
        Ok(EmbeddingResult {
            t,
            levels_used,
            per_level_distortion_bound: d,
            total_lower_factor: d.powi(-(levels_used as i32)),
            certified_distortion: certified,
            per_level_certified: self.per_level,
            trace: self.trace,
            memory_high_water: self.high_water,
            rank_deficient: self.rank_deficient,
        })
    }
}

/// Streaming merge-and-reduce: the deep tree in which every finished block is
/// reduced, summaries are merged in arrival order, and a merged buffer is
/// reduced as soon as it holds `block_rows` rows (up to one summary).
pub fn subspace_embed(stream: RowBlockStream<'_>, cfg: &TreeConfig) -> Result<EmbeddingResult> {
    let d = stream.width();
    cfg.validate(d)?;
    let stream = stream.rebatch(cfg.block_rows)?;
    let mut engine = Engine::new(*cfg, d);
    for block in stream {
        engine.leaf(block?)?;
    }
    engine.finish()
}

/// Distributed merge-and-reduce over an explicit tree. `fanout = 0` is the
/// streaming deep tree and gives exactly the output of [`subspace_embed`];
/// `fanout >= 2` reduces the leaves, then groups up to `fanout` consecutive
/// summaries (never more than `block_rows` rows) per parent, level by level.
pub fn tree_simulate(a: &MatrixF, cfg: &TreeConfig, fanout: usize) -> Result<EmbeddingResult> {
    if fanout == 0 {
        return subspace_embed(block_iter(a, cfg.block_rows)?, cfg);
    }
    if fanout == 1 {
        return Err(Error::InvalidArgument("fanout must be 0 (deep tree) or at least 2".into()));
    }
    let d = a.cols();
    cfg.validate(d)?;
    let mut engine = Engine::new(*cfg, d);
    let mut level_pieces: Vec<Piece> = Vec::new();
    for block in block_iter(a, cfg.block_rows)? {
        let block = block?;
        engine.high_water = engine.high_water.max(block.rows() * d);
        let raw = Piece { m: block, dist: 1.0, depth: 0 };
        if raw.m.rows() >= d {
            level_pieces.push(engine.reduce(vec![raw], 1)?);
        } else {
            level_pieces.push(raw);
        }
    }
    let mut level = 1;
    while rows_of(&level_pieces) > cfg.block_rows {
        level += 1;
        let mut next = Vec::new();
        let mut group: Vec<Piece> = Vec::new();
        let flush = |group: &mut Vec<Piece>, next: &mut Vec<Piece>, engine: &mut Engine| -> Result<()> {
            let g = std::mem::take(group);
            if g.len() == 1 && g[0].m.rows() <= d {
                next.extend(g);
            } else if !g.is_empty() {
                engine.high_water = engine.high_water.max(rows_of(&g) * d);
                next.push(engine.reduce(g, level)?);
            }
            Ok(())
        };
        for piece in level_pieces {
            if !group.is_empty() && (group.len() == fanout || rows_of(&group) + piece.m.rows() > cfg.block_rows) {
                flush(&mut group, &mut next, &mut engine)?;
            }
            group.push(piece);
        }
        flush(&mut group, &mut next, &mut engine)?;
        level_pieces = next;
    }
    engine.buffers = vec![level_pieces];
    engine.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::block_iter;
    use crate::rng::{gaussian, seeded};

    fn random(n: usize, d: usize, seed: u64) -> MatrixF {
        let mut r = seeded(seed);
        MatrixF::new(n, d, (0..n * d).map(|_| gaussian(&mut r)).collect()).unwrap()
    }

    fn sandwich_violations(a: &MatrixF, t: &MatrixF, p: PNorm, dist: f64, seed: u64) -> usize {
        let mut r = seeded(seed);
        let mut bad = 0;
        for k in 0..(1000 + a.cols()) {
            let x: Vec<f64> = if k < a.cols() {
                (0..a.cols()).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
            } else {
                (0..a.cols()).map(|_| gaussian(&mut r)).collect()
            };
            let ax = vector_pnorm(&a.mul_vec(&x).unwrap(), p);
            let tx = vector_pnorm(&t.mul_vec(&x).unwrap(), p);
            if tx > ax * (1.0 + 1e-8) || tx < ax / dist * (1.0 - 1e-12) {
                bad += 1;
            }
        }
        bad
    }

    #[test]
    fn identity_block_is_exact_for_orth() {
        let out = reduce_block(&MatrixF::identity(3), PNorm::two(), WcbMethod::Orth, 0).unwrap();
        assert!((out.distortion - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((out.summary.get(i, j).abs() - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduce_sandwich_p1_p3() {
        for (p, method) in [(1.0, WcbMethod::Rounding), (3.0, WcbMethod::Rounding), (1.0, WcbMethod::Orth)] {
            let b = random(100, 3, 7);
            let p = PNorm::Finite(p);
            let out = reduce_block(&b, p, method, 0).unwrap();
            assert_eq!(sandwich_violations(&b, &out.summary, p, out.distortion, 1), 0);
            assert!(out.sampled_distortion <= out.distortion * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rank_deficient_block_is_padded() {
        let mut b = random(20, 3, 2);
        for i in 0..20 {
            let v = b.get(i, 0) + b.get(i, 1);
            b.set(i, 2, v);
        }
        let out = reduce_block(&b, PNorm::one(), WcbMethod::Rounding, 0).unwrap();
        assert!(out.rank_deficient);
        assert_eq!(out.rank, 2);
        assert_eq!(out.summary.shape(), (3, 3));
        assert!(out.summary.row(2).iter().all(|&x| x == 0.0));
        assert_eq!(sandwich_violations(&b, &out.summary, PNorm::one(), out.distortion, 3), 0);
    }

    #[test]
    fn single_leaf_uses_one_level() {
        let a = random(12, 3, 1);
        let cfg = TreeConfig::for_rows(12, 3, 0.5, PNorm::one(), WcbMethod::Rounding).unwrap().with_block_rows(16);
        let res = subspace_embed(block_iter(&a, 4).unwrap(), &cfg).unwrap();
        assert_eq!(res.levels_used, 1);
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.t.rows(), 3);
        assert!((res.total_lower_factor - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn streaming_sandwich_and_size() {
        let a = random(256, 3, 11);
        for p in [1.0, 3.0] {
            let cfg = TreeConfig::for_rows(256, 3, 0.5, PNorm::Finite(p), WcbMethod::Rounding).unwrap();
            assert_eq!(cfg.block_rows, 16);
            let res = subspace_embed(block_iter(&a, 7).unwrap(), &cfg).unwrap();
            assert!(res.t.rows() <= cfg.block_rows);
            assert!(res.levels_used <= 3, "levels {}", res.levels_used);
            assert_eq!(sandwich_violations(&a, &res.t, cfg.p, res.certified_distortion, 5), 0);
            let bound = (res.levels_used + 1) * cfg.block_rows * 3;
            assert!(res.memory_high_water <= bound);
        }
    }

    #[test]
    fn deep_tree_matches_stream_and_balanced_tree_holds() {
        let a = random(256, 3, 4);
        let cfg = TreeConfig::for_rows(256, 3, 0.5, PNorm::one(), WcbMethod::Orth).unwrap();
        let s = subspace_embed(block_iter(&a, 10).unwrap(), &cfg).unwrap();
        let t = tree_simulate(&a, &cfg, 0).unwrap();
        assert_eq!(s.t.data(), t.t.data());
        let bal = tree_simulate(&a, &cfg, 4).unwrap();
        assert!(bal.levels_used <= (1.0 / cfg.gamma).ceil() as usize);
        let leaf_in: usize = bal.trace.iter().filter(|n| n.level == 1).map(|n| n.input_rows).sum();
        assert_eq!(leaf_in, 256);
        let l1_out: usize = bal.trace.iter().filter(|n| n.level == 1).map(|n| n.output_rows).sum();
        let l2_in: usize = bal.trace.iter().filter(|n| n.level == 2).map(|n| n.input_rows).sum();
        assert_eq!(l1_out, l2_in);
        assert_eq!(sandwich_violations(&a, &bal.t, cfg.p, bal.certified_distortion, 9), 0);
    }

    #[test]
    fn rejects_small_blocks_and_infinite_p() {
        let a = random(30, 3, 0);
        let cfg = TreeConfig::for_rows(30, 3, 0.5, PNorm::one(), WcbMethod::Orth).unwrap().with_block_rows(5);
        assert!(subspace_embed(block_iter(&a, 5).unwrap(), &cfg).is_err());
        let cfg = TreeConfig::for_rows(30, 3, 0.5, PNorm::Inf, WcbMethod::Orth).unwrap();
        assert!(subspace_embed(block_iter(&a, 5).unwrap(), &cfg).is_err());
        assert!(TreeConfig::for_rows(30, 3, 1.5, PNorm::one(), WcbMethod::Orth).is_err());
    }
}
