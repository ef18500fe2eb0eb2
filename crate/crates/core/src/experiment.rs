//! Synthetic datasets and experiment drivers that compare summaries against
//! exact offline solvers.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::amm::amm_rowwise;
use crate::conditioning::WcbMethod;
use crate::embedding::{reduce_block, subspace_embed, EmbeddingResult, TreeConfig};
use crate::error::{Error, Result};
use crate::leverage::{stream_summarize, stream_surrogate, uniform_sample_indexed, LocalThreshold};
use crate::lowrank::{l1_lowrank_tree, InnerCaps, InnerMode};
use crate::matcore::{block_iter, entrywise_pnorm, load_matrix_with, LoadOptions, MatrixF, MatrixFormat, PNorm};
use crate::regression::{solve_linf_exact, RegressionInstance};
use crate::rng::{cauchy, gaussian, permutation, seeded};

/// Largest row count the exact l-infinity baseline is run on.
pub const MAX_EXACT_ROWS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Gaussian,
    Heavytail,
    AugmentedIdentity,
    CensusLike,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DatasetKind::Gaussian),
            "heavytail" => Ok(DatasetKind::Heavytail),
            "augmented-identity" => Ok(DatasetKind::AugmentedIdentity),
            "census-like" => Ok(DatasetKind::CensusLike),
            _ => Err(Error::InvalidArgument(format!(
                "unknown dataset {s:?} (gaussian, heavytail, augmented-identity, census-like)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Total rows.
    pub n: usize,
    /// Feature columns (before any planted coordinates).
    pub d: usize,
    /// Planted rows / coordinates (augmented-identity and census-like).
    pub k: usize,
    /// Scale of the target noise.
    pub noise: f64,
    /// Magnitude of the bulk rows relative to planted ones (augmented-identity).
    pub scale: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { n: 1000, d: 4, k: 3, noise: 0.1, scale: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: MatrixF,
    pub b: Vec<f64>,
    /// Rows planted by the generator, ascending.
    pub planted: Vec<usize>,
}

impl Dataset {
    /// `[X | b]`.
    pub fn augmented(&self) -> Result<MatrixF> {
        self.x.append_column(&self.b)
    }

    pub fn permuted(&self, seed: u64) -> Result<Dataset> {
        let perm = permutation(&mut seeded(seed), self.x.rows());
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut planted: Vec<usize> = self.planted.iter().map(|&i| inverse[i]).collect();
        planted.sort_unstable();
        Ok(Dataset { x: self.x.select_rows(&perm), b: perm.iter().map(|&i| self.b[i]).collect(), planted })
    }
}

fn gaussian_matrix(n: usize, d: usize, rng: &mut impl Rng) -> MatrixF {
    MatrixF::new(n, d, (0..n * d).map(|_| gaussian(rng)).collect()).expect("shape")
}

fn targets(x: &MatrixF, noise: f64, heavy: bool, rng: &mut impl Rng) -> Vec<f64> {
    let coef: Vec<f64> = (0..x.cols()).map(|_| gaussian(rng)).collect();
    x.mul_vec(&coef)
        .expect("width")
        .into_iter()
        .map(|v| v + noise * if heavy { cauchy(rng) } else { gaussian(rng) })
        .collect()
}

/// Reproducible synthetic data.
///
/// * `gaussian`: i.i.d. normal `n x d`, linear targets plus Gaussian noise.
/// * `heavytail`: i.i.d. Cauchy entries and Cauchy noise.
/// * `augmented-identity`: `[scale * X, 0; 0, I_k]` with `X` normal
///   `(n - k) x d`, rows permuted; the `k` identity rows are the only support
///   of the last `k` coordinates.
/// * `census-like`: integer, skewed, sparse columns built from a small pool of
///   prototype rows (so rows repeat), plus `k` planted rows with one large
///   entry each.
pub fn gen_dataset(kind: DatasetKind, params: GenParams, seed: u64) -> Result<Dataset> {
    let GenParams { n, d, k, noise, scale } = params;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument("noise must be nonnegative and scale positive".into()));
    }
    let mut rng = seeded(seed);
    match kind {
        DatasetKind::Gaussian | DatasetKind::Heavytail => {
            let heavy = kind == DatasetKind::Heavytail;
            let x = if heavy {
                MatrixF::new(n, d, (0..n * d).map(|_| cauchy(&mut rng)).collect())?
            } else {
                gaussian_matrix(n, d, &mut rng)
            };
            let b = targets(&x, noise, heavy, &mut rng);
            Ok(Dataset { x, b, planted: Vec::new() })
        }
        DatasetKind::AugmentedIdentity => {
            if k == 0 || k >= n {
                return Err(Error::InvalidArgument(format!("need 0 < k < n, got k = {k}, n = {n}")));
            }
            let width = d + k;
            let bulk = gaussian_matrix(n - k, d, &mut rng).scale(scale);
            let mut data = Vec::with_capacity(n * width);
            for row in bulk.row_iter() {
                data.extend_from_slice(row);
                data.extend(std::iter::repeat(0.0).take(k));
            }
            for i in 0..k {
                let mut row = vec![0.0; width];
                row[d + i] = 1.0;
                data.extend(row);
            }
            let x = MatrixF::new(n, width, data)?;
            let b = targets(&x, noise, false, &mut rng);
            let ds = Dataset { x, b, planted: (n - k..n).collect() };
            ds.permuted(seed.wrapping_add(1))
        }
        DatasetKind::CensusLike => {
            let pool = (n / 8).max(1);
            let skew: Vec<f64> = (0..d).map(|j| 0.5 + j as f64 * 0.25).collect();
            let protos: Vec<Vec<f64>> = (0..pool)
                .map(|_| {
                    (0..d)
                        .map(|j| {
                            if rng.random::<f64>() < 0.45 {
                                0.0
                            } else {
                                (gaussian(&mut rng) * skew[j]).exp().floor()
                            }
                        })
                        .collect()
                })
                .collect();
            let mut data = Vec::with_capacity(n * d);
            let planted_k = k.min(n);
            for _ in 0..n - planted_k {
                // Zipf-like preference for low prototype indices
                let u: f64 = rng.random();
                let idx = ((pool as f64).powf(u) - 1.0).floor() as usize;
                data.extend_from_slice(&protos[idx.min(pool - 1)]);
            }
            for i in 0..planted_k {
                let mut row = vec![0.0; d];
                row[i % d] = 50.0 * (1.0 + i as f64);
                data.extend(row);
            }
            let x = MatrixF::new(n, d, data)?;
            let b: Vec<f64> = targets(&x, noise, false, &mut rng).into_iter().map(|v| v.round()).collect();
            let ds = Dataset { x, b, planted: (n - planted_k..n).collect() };
            ds.permuted(seed.wrapping_add(1))
        }
    }
}

/// Fraction of rows equal to some earlier row, and fraction of zero entries.
pub fn duplication_and_sparsity(x: &MatrixF) -> (f64, f64) {
    let mut seen = std::collections::HashSet::new();
    let mut dup = 0usize;
    for row in x.row_iter() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        if !seen.insert(key) {
            dup += 1;
        }
    }
    let zeros = x.data().iter().filter(|v| **v == 0.0).count();
    let n = x.rows().max(1) as f64;
    (dup as f64 / n, zeros as f64 / (x.data().len().max(1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    File { path: String, format: MatrixFormat, header: bool },
    Generator { name: DatasetKind, params: GenParams, seed: u64 },
}

impl DatasetSpec {
    /// Loads or generates the data; a file is read as `[X | b]`.
    pub fn materialize(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::File { path, format, header } => {
                let z = load_matrix_with(path, *format, LoadOptions { header: *header })?;
                if z.cols() < 2 {
                    return Err(Error::InvalidArgument("data file needs features and a target column".into()));
                }
                let inst = RegressionInstance::from_augmented(&z, PNorm::Inf)?;
                Ok(Dataset { x: inst.a, b: inst.b, planted: Vec::new() })
            }
            DatasetSpec::Generator { name, params, seed } => gen_dataset(*name, *params, *seed),
        }
    }
}

/// Summaries compared by the l-infinity experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryMethod {
    Orth,
    Spc3,
    Rounding,
    Identity,
    Sample,
}

impl SummaryMethod {
    pub fn name(self) -> &'static str {
        match self {
            SummaryMethod::Orth => "orth",
            SummaryMethod::Spc3 => "spc3",
            SummaryMethod::Rounding => "rounding",
            SummaryMethod::Identity => "identity",
            SummaryMethod::Sample => "sample",
        }
    }

    pub fn conditioning(self) -> Option<WcbMethod> {
        match self {
            SummaryMethod::Orth => Some(WcbMethod::Orth),
            SummaryMethod::Spc3 => Some(WcbMethod::Spc3),
            SummaryMethod::Rounding => Some(WcbMethod::Rounding),
            _ => None,
        }
    }
}

impl std::str::FromStr for SummaryMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orth" => Ok(SummaryMethod::Orth),
            "spc3" => Ok(SummaryMethod::Spc3),
            "rounding" => Ok(SummaryMethod::Rounding),
            "identity" => Ok(SummaryMethod::Identity),
            "sample" => Ok(SummaryMethod::Sample),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method {s:?} (orth, spc3, rounding, identity, sample)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub methods: Vec<SummaryMethod>,
    pub budgets: Vec<usize>,
    pub p: PNorm,
    pub eps: f64,
    /// Trial `t` permutes the rows with seed `seed + t`.
    pub seed: u64,
    pub trials: usize,
}

impl ExperimentSpec {
    fn validate(&self, d: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.methods.is_empty() || self.budgets.is_empty() {
            return Err(Error::InvalidArgument("need at least one method and one budget".into()));
        }
        if let Some(&m) = self.budgets.iter().find(|&&m| m < d) {
            return Err(Error::InvalidArgument(format!("budget {m} is below d = {d}")));
        }
        self.p.finite()?;
        Ok(())
    }
}

/// One (method, budget, trial) outcome of the l-infinity experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub budget_m: usize,
    pub trial: usize,
    /// `f_hat / f_star - 1`.
    pub error_ratio: f64,
    pub f_hat: f64,
    pub f_star: f64,
    pub max_summary_rows: usize,
    pub final_summary_rows: usize,
    pub update_time_s: f64,
    pub query_time_s: f64,
    pub total_time_s: f64,
}

pub const METRIC_HEADER: &str = "method,budget_m,trial,error_ratio,f_hat,f_star,max_summary_rows,final_summary_rows";
pub const TIMING_HEADER: &str = "method,budget_m,trial,update_time_s,query_time_s,total_time_s";

/// Deterministic part of the report, one row per line.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRIC_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e},{:e},{},{}",
            r.method, r.budget_m, r.trial, r.error_ratio, r.f_hat, r.f_star, r.max_summary_rows, r.final_summary_rows
        );
    }
    s
}

/// Wall-clock columns, kept apart so the metrics file is byte-reproducible.
pub fn timings_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(TIMING_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.method, r.budget_m, r.trial, r.update_time_s, r.query_time_s, r.total_time_s
        );
    }
    s
}

/// Median error ratio and largest summary per (method, budget), sorted.
pub fn medians(rows: &[MetricRow]) -> Vec<(String, usize, f64, usize)> {
    let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.method.clone(), r.budget_m)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(m, b)| {
            let mut e: Vec<f64> =
                rows.iter().filter(|r| r.method == m && r.budget_m == b).map(|r| r.error_ratio).collect();
            e.sort_by(f64::total_cmp);
            let med = if e.len() % 2 == 1 { e[e.len() / 2] } else { 0.5 * (e[e.len() / 2 - 1] + e[e.len() / 2]) };
            let mx = rows
                .iter()
                .filter(|r| r.method == m && r.budget_m == b)
                .map(|r| r.max_summary_rows)
                .max()
                .unwrap_or(0);
            (m, b, med, mx)
        })
        .collect()
}

/// Summarizes `[X | b]` in one pass with every method and budget, solves the
/// l-infinity problem on the retained rows and compares the full-data
/// objective of that solution with the exact optimum.
pub fn run_linf_experiment(spec: &ExperimentSpec) -> Result<Vec<MetricRow>> {
    let data = spec.dataset.materialize()?;
    let (n, d) = data.x.shape();
    if n > MAX_EXACT_ROWS {
        return Err(Error::InvalidArgument(format!(
            "{n} rows exceed the exact-baseline limit of {MAX_EXACT_ROWS}"
        )));
    }
    spec.validate(d)?;
    let mut rows = Vec::new();
    for trial in 0..spec.trials {
        let tseed = spec.seed.wrapping_add(trial as u64);
        let ds = data.permuted(tseed)?;
        let z = ds.augmented()?;
        let full = RegressionInstance::new(ds.x.clone(), ds.b.clone(), PNorm::Inf)?;
        let f_star = solve_linf_exact(&full)?.objective;
        for &method in &spec.methods {
            for &m in &spec.budgets {
                let start = Instant::now();
                let stream = block_iter(&z, m)?;
                let (kept, origin, max_rows) = match method.conditioning() {
                    Some(wm) => {
                        let st = stream_summarize(stream, spec.p, LocalThreshold::Budget(m), wm, tseed)?;
                        let mr = st.max_rows;
                        (st.b, st.origin, mr)
                    }
                    None if method == SummaryMethod::Identity => {
                        let st = stream_surrogate(stream, m)?;
                        let mr = st.max_rows;
                        (st.b, st.origin, mr)
                    }
                    None => {
                        let (b, o) = uniform_sample_indexed(stream, m, tseed)?;
                        let r = b.rows();
                        (b, o, r)
                    }
                };
                let update = start.elapsed().as_secs_f64();
                let q0 = Instant::now();
                let x = if kept.rows() == 0 {
                    vec![0.0; d]
                } else {
                    solve_linf_exact(&RegressionInstance::from_augmented(&kept, PNorm::Inf)?)?.x
                };
                let query = q0.elapsed().as_secs_f64();
                let f_hat = full.objective(&x)?;
                let scale = ds.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if f_hat < f_star - 1e-9 * scale.max(1.0) {
                    return Err(Error::Invariant(format!("summary objective {f_hat} below the optimum {f_star}")));
                }
                let error_ratio = if f_star > 0.0 { f_hat / f_star - 1.0 } else { f_hat };
                rows.push(MetricRow {
                    method: method.name().to_string(),
                    budget_m: m,
                    trial,
                    error_ratio,
                    f_hat,
                    f_star,
                    max_summary_rows: max_rows,
                    final_summary_rows: origin.len(),
                    update_time_s: update,
                    query_time_s: query,
                    total_time_s: update + query,
                });
            }
        }
    }
    rows.sort_by(|a, b| (a.method.as_str(), a.budget_m, a.trial).cmp(&(b.method.as_str(), b.budget_m, b.trial)));
    Ok(rows)
}

/// Writes `metrics.csv`, `timings.csv` and `manifest.json` into `out`.
pub fn write_linf_report(spec: &ExperimentSpec, rows: &[MetricRow], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("metrics.csv"), metrics_csv(rows))?;
    std::fs::write(out.join("timings.csv"), timings_csv(rows))?;
    let summary: Vec<_> = medians(rows)
        .into_iter()
        .map(|(m, b, e, r)| json!({"method": m, "budget_m": b, "median_error_ratio": e, "max_summary_rows": r}))
        .collect();
    let manifest = json!({
        "experiment": "linf",
        "spec": spec,
        "rows": rows.len(),
        "files": ["metrics.csv", "timings.csv"],
        "medians": summary,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Embedding run plus a sampled check of the end-to-end sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct EmbedReport {
    pub result_rows: usize,
    pub levels_used: usize,
    pub certified_distortion: f64,
    pub trace: Vec<crate::embedding::TraceNode>,
    /// Observed `max ||A x|| / ||T x||` over the sampled directions.
    pub sampled_distortion: f64,
    pub violations: usize,
}

pub fn run_embed_experiment(a: &MatrixF, cfg: &TreeConfig, samples: usize, seed: u64) -> Result<(EmbedReport, EmbeddingResult)> {
    let res = subspace_embed(block_iter(a, cfg.block_rows)?, cfg)?;
    let mut rng = seeded(seed);
    let mut worst: f64 = 1.0;
    let mut violations = 0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..a.cols()).map(|_| gaussian(&mut rng)).collect();
        let ax = crate::matcore::vector_pnorm(&a.mul_vec(&x)?, cfg.p);
        let tx = crate::matcore::vector_pnorm(&res.t.mul_vec(&x)?, cfg.p);
        if tx > ax * (1.0 + 1e-8) || tx < ax / res.certified_distortion * (1.0 - 1e-8) {
            violations += 1;
        }
        if tx > 0.0 {
            worst = worst.max(ax / tx);
        }
    }
    let report = EmbedReport {
        result_rows: res.t.rows(),
        levels_used: res.levels_used,
        certified_distortion: res.certified_distortion,
        trace: res.trace.clone(),
        sampled_distortion: worst,
        violations,
    };
    Ok((report, res))
}

/// One AMM measurement.
#[derive(Debug, Clone, Serialize)]
pub struct AmmRow {
    pub eps: f64,
    pub error: f64,
    pub bound: f64,
    pub nnz_a: usize,
    pub nnz_b: usize,
    pub holds: bool,
}

/// Row-wise AMM of `A B^T` over a grid of `eps`, evaluated densely.
pub fn run_amm_experiment(a: &MatrixF, b: &MatrixF, eps_grid: &[f64]) -> Result<Vec<AmmRow>> {
    let exact = a.matmul(&b.transpose())?;
    eps_grid
        .iter()
        .map(|&eps| {
            let r = amm_rowwise(a, b, eps)?;
            let error = entrywise_pnorm(&exact.sub(&r.product_dense())?, PNorm::one());
            Ok(AmmRow {
                eps,
                error,
                bound: r.error_bound,
                nnz_a: r.a_bar.nnz(),
                nnz_b: r.b_bar.nnz(),
                holds: error <= r.error_bound * (1.0 + 1e-12),
            })
        })
        .collect()
}

/// Rank-1 l1 optimum by alternating weighted medians from every row and
/// column as a start. Exact up to the local search; used as the reference
/// for desk-scale low-rank runs.
pub fn rank_one_reference(x: &MatrixF) -> f64 {
    fn wmedian(pairs: &mut [(f64, f64)]) -> f64 {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        for &(v, w) in pairs.iter() {
            acc += w;
            if acc >= total / 2.0 {
                return v;
            }
        }
        0.0
    }
    let (n, d) = x.shape();
    let err = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..d {
                s += (x.get(i, j) - u[i] * v[j]).abs();
            }
        }
        s
    };
    let fit = |v: &[f64], rows: bool| -> Vec<f64> {
        let (outer, inner) = if rows { (n, d) } else { (d, n) };
        (0..outer)
            .map(|o| {
                let mut pairs: Vec<(f64, f64)> = (0..inner)
                    .filter(|&t| v[t] != 0.0)
                    .map(|t| {
                        let xv = if rows { x.get(o, t) } else { x.get(t, o) };
                        (xv / v[t], v[t].abs())
                    })
                    .collect();
                if pairs.is_empty() {
                    0.0
                } else {
                    wmedian(&mut pairs)
                }
            })
            .collect()
    };
    let mut best = entrywise_pnorm(x, PNorm::one());
    let starts: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    for v0 in starts {
        let mut v = v0;
        for _ in 0..50 {
            let u = fit(&v, true);
            v = fit(&u, false);
            best = best.min(err(&u, &v));
        }
    }
    best
}

/// Low-rank measurement on one instance.
#[derive(Debug, Clone, Serialize)]
pub struct LowRankRow {
    pub l1_error: f64,
    pub reference: f64,
    pub ratio: f64,
}

/// Tree low-rank on rank-1-plus-spikes instances against [`rank_one_reference`].
pub fn run_lowrank_experiment(instances: &[MatrixF], gamma: f64, mode: InnerMode, seed: u64) -> Result<Vec<LowRankRow>> {
    instances
        .iter()
        .map(|x| {
            let cfg = TreeConfig::for_rows(x.rows(), x.cols(), gamma, PNorm::one(), WcbMethod::Rounding)?;
            let res = l1_lowrank_tree(x, 1, &cfg, mode, seed, InnerCaps::default())?;
            let reference = rank_one_reference(x);
            let ratio = if reference > 0.0 { res.l1_error / reference } else if res.l1_error == 0.0 { 1.0 } else { f64::INFINITY };
            Ok(LowRankRow { l1_error: res.l1_error, reference, ratio })
        })
        .collect()
}

/// Rank-1 matrix with `spikes` large entries added, for low-rank runs.
pub fn rank_one_with_spikes(n: usize, d: usize, spikes: usize, seed: u64) -> MatrixF {
    let mut rng = seeded(seed);
    let u: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
    let v: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let mut data: Vec<f64> = (0..n * d).map(|t| u[t / d] * v[t % d]).collect();
    for _ in 0..spikes {
        let t = rng.random_range(0..n * d);
        data[t] += 10.0 * (1.0 + rng.random::<f64>());
    }
    MatrixF::new(n, d, data).expect("shape")
}

/// Single reduce, exposed for the per-level table of the embed driver.
pub fn reduce_table(a: &MatrixF, p: PNorm, method: WcbMethod, seed: u64) -> Result<serde_json::Value> {
    let r = reduce_block(a, p, method, seed)?;
    Ok(json!({
        "input_rows": a.rows(),
        "output_rows": r.summary.rows(),
        "certified_distortion": r.distortion,
        "sampled_distortion": r.sampled_distortion,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmented_identity_plants_rows() {
        let ds = gen_dataset(DatasetKind::AugmentedIdentity, GenParams { n: 1000, d: 8, k: 3, ..Default::default() }, 1)
            .unwrap();
        let support_only_planted: Vec<usize> = (0..ds.x.rows())
            .filter(|&i| ds.x.row(i)[..8].iter().all(|v| *v == 0.0) && ds.x.row(i)[8..].iter().any(|v| *v != 0.0))
            .collect();
        assert_eq!(support_only_planted, ds.planted);
        assert_eq!(ds.planted.len(), 3);
    }

    #[test]
    fn generators_are_reproducible() {
        let p = GenParams { n: 100, d: 4, ..Default::default() };
        for kind in [DatasetKind::Gaussian, DatasetKind::Heavytail, DatasetKind::CensusLike] {
            let a = gen_dataset(kind, p, 7).unwrap();
            let b = gen_dataset(kind, p, 7).unwrap();
            assert_eq!(a.x.data(), b.x.data());
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn census_like_statistics() {
        let ds = gen_dataset(DatasetKind::CensusLike, GenParams { n: 5000, d: 8, k: 8, ..Default::default() }, 3).unwrap();
        let (dup, sparsity) = duplication_and_sparsity(&ds.x);
        assert!(dup >= 0.5, "duplication {dup}");
        assert!(sparsity >= 0.3, "sparsity {sparsity}");
        assert!(ds.x.data().iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn full_sample_has_zero_error() {
        let spec = ExperimentSpec {
            dataset: DatasetSpec::Generator {
                name: DatasetKind::Gaussian,
                params: GenParams { n: 60, d: 3, ..Default::default() },
                seed: 2,
            },
            methods: vec![SummaryMethod::Sample, SummaryMethod::Orth],
            budgets: vec![60],
            p: PNorm::two(),
            eps: 0.1,
            seed: 5,
            trials: 2,
        };
        let rows = run_linf_experiment(&spec).unwrap();
        let sample: Vec<_> = rows.iter().filter(|r| r.method == "sample").collect();
        assert!(sample.iter().all(|r| r.error_ratio.abs() < 1e-9 && r.max_summary_rows == 60));
        assert!(rows.iter().all(|r| r.error_ratio >= -1e-9));
        let again = run_linf_experiment(&spec).unwrap();
        assert_eq!(metrics_csv(&rows), metrics_csv(&again));
    }
}
