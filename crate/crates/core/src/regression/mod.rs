//! lp regression: exact solvers, regression on an embedding summary, and the
//! one-pass additive-error l-infinity pipeline.

mod simplex;

use serde::Serialize;
use serde_json::json;

use crate::conditioning::{WcbCertificate, WcbMethod};
use crate::embedding::{subspace_embed, TreeConfig};
use crate::error::{Error, Result};
use crate::leverage::{summarize_leading, LocalThreshold, SummaryState};
use crate::linalg::lstsq;
use crate::matcore::{block_iter, vector_pnorm, MatrixF, PNorm, RowBlockStream};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// `min_x ||A x - b||_p`.
#[derive(Debug, Clone)]
pub struct RegressionInstance {
    pub a: MatrixF,
    pub b: Vec<f64>,
    pub p: PNorm,
}

impl RegressionInstance {
    pub fn new(a: MatrixF, b: Vec<f64>, p: PNorm) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::DimensionMismatch(format!("{} rows vs {} targets", a.rows(), b.len())));
        }
        if let Some(i) = b.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: i, col: a.cols() });
        }
        Ok(RegressionInstance { a, b, p })
    }

    /// Splits `[A | b]` into the instance.
    pub fn from_augmented(z: &MatrixF, p: PNorm) -> Result<Self> {
        if z.cols() < 2 {
            return Err(Error::InvalidArgument("augmented matrix needs at least two columns".into()));
        }
        let d = z.cols() - 1;
        let a = z.select_cols(&(0..d).collect::<Vec<_>>());
        Self::new(a, z.column(d), p)
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mul_vec(x)?;
        Ok(ax.iter().zip(&self.b).map(|(u, v)| u - v).collect())
    }

    /// `||A x - b||_p`.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        Ok(vector_pnorm(&self.residual(x)?, self.p))
    }

    pub fn augmented(&self) -> Result<MatrixF> {
        self.a.append_column(&self.b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionSolution {
    pub x: Vec<f64>,
    /// `||A x - b||_p` on the instance the solution was computed for.
    pub objective: f64,
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    /// Multiplicative (embedding path) or additive (l-infinity stream) slack.
    pub certified_gap: Option<f64>,
    /// Smoothed objective after every accepted IRLS step.
    #[serde(skip)]
    pub smoothed_trace: Vec<f64>,
}

impl RegressionSolution {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "x": self.x,
            "objective": self.objective,
            "method": self.method,
            "certified_gap": self.certified_gap,
        })
    }

    fn exact(inst: &RegressionInstance, x: Vec<f64>, method: &str, iterations: usize) -> Result<Self> {
        let objective = inst.objective(&x)?;
        Ok(RegressionSolution {
            x,
            objective,
            method: method.to_string(),
            iterations,
            converged: true,
            certified_gap: None,
            smoothed_trace: Vec::new(),
        })
    }
}

/// Column scales (max abs, 1 for zero columns) and the target scale.
fn scales(inst: &RegressionInstance) -> (Vec<f64>, f64) {
    let d = inst.a.cols();
    let mut cs = vec![0.0f64; d];
    for row in inst.a.row_iter() {
        for (c, v) in cs.iter_mut().zip(row) {
            *c = c.max(v.abs());
        }
    }
    cs.iter_mut().filter(|c| **c == 0.0).for_each(|c| *c = 1.0);
    let bs = inst.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (cs, if bs > 0.0 { bs } else { 1.0 })
}

fn check_finite(inst: &RegressionInstance) -> Result<()> {
    if let Some(k) = inst.a.data().iter().position(|v| !v.is_finite()) {
        let d = inst.a.cols();
        return Err(Error::NonFinite { row: k / d, col: k % d });
    }
    Ok(())
}

/// l1 regression through its dual `max b^T y, A^T y = 0, |y| <= 1`, shifted to
/// `z = y + 1 in [0, 2]`. The regression coefficients are minus the equality
/// multipliers of the optimal basis.
fn solve_l1(inst: &RegressionInstance) -> Result<RegressionSolution> {
    check_finite(inst)?;
    let (n, d) = inst.a.shape();
    if n == 0 || d == 0 {
        return RegressionSolution::exact(inst, vec![0.0; d], "lp", 0);
    }
    let (cs, bs) = scales(inst);
    let mut at = vec![0.0; d * n];
    let mut rhs = vec![0.0; d];
    for (i, row) in inst.a.row_iter().enumerate() {
        for j in 0..d {
            let v = row[j] / cs[j];
            at[j * n + i] = v;
            rhs[j] += v;
        }
    }
    let c: Vec<f64> = inst.b.iter().map(|v| -v / bs).collect();
    let lp = simplex::solve_bounded(&at, d, n, &rhs, &c, &vec![2.0; n])?;
    let x = (0..d).map(|j| -lp.duals[j] / cs[j] * bs).collect();
    RegressionSolution::exact(inst, x, "lp", lp.iterations)
}

/// `min t, -t <= A x - b <= t` through its dual
/// `max b^T (u - v), A^T (u - v) = 0, sum(u + v) = 1, u, v >= 0`.
fn solve_linf(inst: &RegressionInstance) -> Result<RegressionSolution> {
    check_finite(inst)?;
    let (n, d) = inst.a.shape();
    if n == 0 {
        return RegressionSolution::exact(inst, vec![0.0; d], "lp-inf", 0);
    }
    let (cs, bs) = scales(inst);
    let m = d + 1;
    let nv = 2 * n;
    let mut a = vec![0.0; m * nv];
    for (i, row) in inst.a.row_iter().enumerate() {
        for j in 0..d {
            let v = row[j] / cs[j];
            a[j * nv + i] = v;
            a[j * nv + n + i] = -v;
        }
        a[d * nv + i] = 1.0;
        a[d * nv + n + i] = 1.0;
    }
    let mut rhs = vec![0.0; m];
    rhs[d] = 1.0;
    let c: Vec<f64> = inst.b.iter().map(|v| -v / bs).chain(inst.b.iter().map(|v| v / bs)).collect();
    let lp = simplex::solve_bounded(&a, m, nv, &rhs, &c, &vec![f64::INFINITY; nv])?;
    let x = (0..d).map(|j| -lp.duals[j] / cs[j] * bs).collect();
    RegressionSolution::exact(inst, x, "lp-inf", lp.iterations)
}

/// Chebyshev regression `min_x ||A x - b||_inf` by dense simplex.
pub fn solve_linf_exact(inst: &RegressionInstance) -> Result<RegressionSolution> {
    let mut inf = inst.clone();
    inf.p = PNorm::Inf;
    solve_linf(&inf)
}

fn smoothed(r: &[f64], delta: f64, p: f64) -> f64 {
    r.iter().map(|x| (x * x + delta * delta).powf(p / 2.0)).sum()
}

fn weighted_lstsq(a: &MatrixF, b: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let d = a.cols();
    let mut data = Vec::with_capacity(a.rows() * d);
    let mut rhs = Vec::with_capacity(b.len());
    for ((row, &bi), &wi) in a.row_iter().zip(b).zip(w) {
        let s = wi.sqrt();
        data.extend(row.iter().map(|v| v * s));
        rhs.push(bi * s);
    }
    lstsq(&MatrixF::new(a.rows(), d, data)?, &rhs)
}

/// IRLS on `sum (r_i^2 + delta^2)^{p/2}` with backtracking, so every accepted
/// step lowers the smoothed objective. `delta` starts at `1e-6 ||b||_p` and is
/// halved whenever no step makes progress.
fn irls(inst: &RegressionInstance, p: f64, tol: f64, max_iter: usize) -> Result<RegressionSolution> {
    let bnorm = vector_pnorm(&inst.b, inst.p);
    let d = inst.a.cols();
    if bnorm == 0.0 {
        return RegressionSolution::exact(inst, vec![0.0; d], "irls", 0);
    }
    let mut delta = 1e-6 * bnorm;
    let delta_floor = 1e-15 * bnorm;
    let mut x = lstsq(&inst.a, &inst.b)?;
    let mut r = inst.residual(&x)?;
    let mut s = smoothed(&r, delta, p);
    let mut f = vector_pnorm(&r, inst.p);
    let mut trace = vec![s];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let w: Vec<f64> = r.iter().map(|x| (x * x + delta * delta).powf((p - 2.0) / 2.0)).collect();
        let cand = weighted_lstsq(&inst.a, &inst.b, &w)?;
        let mut theta = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(&cand).map(|(a, c)| a + theta * (c - a)).collect();
            let rt = inst.residual(&xt)?;
            let st = smoothed(&rt, delta, p);
            if st <= s {
                accepted = Some((xt, rt, st));
                break;
            }
            theta *= 0.5;
        }
        let Some((xn, rn, sn)) = accepted else {
            if delta <= delta_floor {
                converged = true;
                break;
            }
            delta *= 0.5;
            s = smoothed(&r, delta, p);
            trace.push(s);
            continue;
        };
        if sn > s {
            return Err(Error::Invariant(format!("IRLS step raised the smoothed objective: {s} -> {sn}")));
        }
        let fn_ = vector_pnorm(&rn, inst.p);
        let change = (f - fn_).abs() / f.max(f64::MIN_POSITIVE);
        x = xn;
        r = rn;
        s = sn;
        f = fn_;
        trace.push(s);
        if change < tol || f <= 1e-14 * bnorm {
            converged = true;
            break;
        }
    }
    let mut sol = RegressionSolution::exact(inst, x, "irls", iterations)?;
    sol.converged = converged;
    sol.smoothed_trace = trace;
    Ok(sol)
}

/// `argmin_x ||A x - b||_p`: least squares for `p = 2`, the l1 linear program
/// for `p = 1`, smoothed IRLS otherwise. IRLS that runs out of iterations
/// returns its last iterate with `converged = false`.
pub fn solve_lp_regression(inst: &RegressionInstance, tol: f64, max_iter: usize) -> Result<RegressionSolution> {
    check_finite(inst)?;
    let p = inst.p.finite()?;
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    if p == 2.0 {
        let x = lstsq(&inst.a, &inst.b)?;
        return RegressionSolution::exact(inst, x, "lstsq", 1);
    }
    if p == 1.0 {
        return solve_l1(inst);
    }
    irls(inst, p, tol, max_iter)
}

/// Embeds `[A, b]` with merge-and-reduce and solves the reduced problem.
/// The returned objective is measured on the full instance and
/// `certified_gap` is the certified distortion of the embedding, so
/// `objective <= certified_gap * optimum`.
pub fn regress_via_embedding(inst: &RegressionInstance, cfg: &TreeConfig) -> Result<RegressionSolution> {
    if cfg.p != inst.p {
        return Err(Error::InvalidArgument(format!(
            "tree configured for p = {} but the instance uses p = {}",
            cfg.p.value(),
            inst.p.value()
        )));
    }
    let z = inst.augmented()?;
    let d = inst.a.cols();
    let emb = subspace_embed(block_iter(&z, cfg.block_rows)?, cfg)?;
    let reduced = RegressionInstance::from_augmented(&emb.t, inst.p)?;
    debug_assert_eq!(reduced.a.cols(), d);
    let small = solve_lp_regression(&reduced, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let objective = inst.objective(&small.x)?;
    Ok(RegressionSolution {
        objective,
        method: format!("embed-{}", small.method),
        certified_gap: Some(emb.certified_distortion),
        ..small
    })
}

/// Output of the one-pass l-infinity pipeline.
#[derive(Debug, Clone)]
pub struct LinfStreamResult {
    /// Solution of the reduced problem; `objective` is its value on the
    /// retained rows and `certified_gap` is `eps * ||b||_p`.
    pub solution: RegressionSolution,
    /// High-leverage rows of `A`, carried together with their targets.
    pub summary: SummaryState,
    /// Rows kept because of a large target.
    pub target_rows: Vec<usize>,
    /// Union of both, ascending; the rows the reduced problem was solved on.
    pub kept: Vec<usize>,
    /// `||b||_p` of the whole stream.
    pub b_norm: f64,
    /// `d beta alpha^{2p} / (eps / (d alpha^p beta))` from the last certificate.
    pub space_bound: f64,
}

impl LinfStreamResult {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.solution.to_json();
        v["kept_indices"] = json!(self.kept);
        v["target_rows"] = json!(self.target_rows);
        v["leverage_rows"] = json!(self.summary.origin);
        v["b_norm"] = json!(self.b_norm);
        v["space_bound"] = json!(self.space_bound);
        v
    }
}

fn space_bound(cert: &WcbCertificate, d: usize, eps: f64) -> f64 {
    let ap = cert.alpha_pow();
    let dd = d as f64;
    dd * cert.beta * ap * ap / (eps / (dd * ap * cert.beta))
}

/// One pass over rows `[a_i, b_i]`: keeps rows of `A` whose leverage may exceed
/// `eps` and rows whose target exceeds `eps` times the running `||b||_p` of
/// the prefix, then solves Chebyshev regression on the kept rows.
pub fn linf_additive_stream(
    stream: RowBlockStream<'_>,
    p: PNorm,
    eps: f64,
    method: WcbMethod,
    seed: u64,
) -> Result<LinfStreamResult> {
    let pv = p.finite()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    let width = stream.width();
    if width < 2 {
        return Err(Error::InvalidArgument("stream rows must hold at least one feature and a target".into()));
    }
    let d = width - 1;
    let mut acc = 0.0f64;
    let mut target_rows = Vec::new();
    let mut target_data: Vec<f64> = Vec::new();
    let mut observe = |block: &MatrixF, start: usize| -> Result<()> {
        for (k, row) in block.row_iter().enumerate() {
            let bi = row[d].abs();
            acc += bi.powf(pv);
            if bi > eps * acc.powf(1.0 / pv) {
                target_rows.push(start + k);
                target_data.extend_from_slice(row);
            }
        }
        Ok(())
    };
    let summary = summarize_leading(stream, d, p, LocalThreshold::Global(eps), method, seed, &mut observe)?;
    let b_norm = acc.powf(1.0 / pv);

    // merge the two ascending index lists
    let targets = MatrixF::new(target_rows.len(), width, target_data)?;
    let (mut i, mut j) = (0, 0);
    let mut kept = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    while i < summary.origin.len() || j < target_rows.len() {
        let take_summary = j >= target_rows.len() || (i < summary.origin.len() && summary.origin[i] <= target_rows[j]);
        if take_summary {
            if j < target_rows.len() && summary.origin[i] == target_rows[j] {
                j += 1;
            }
            kept.push(summary.origin[i]);
            rows.extend_from_slice(summary.b.row(i));
            i += 1;
        } else {
            kept.push(target_rows[j]);
            rows.extend_from_slice(targets.row(j));
            j += 1;
        }
    }
    let z = MatrixF::new(kept.len(), width, rows)?;
    let inst = RegressionInstance::from_augmented(&z, PNorm::Inf)?;
    let mut solution = solve_linf_exact(&inst)?;
    solution.method = format!("linf-stream-{}", method.name());
    solution.certified_gap = Some(eps * b_norm);
    let space_bound = summary.last_cert.as_ref().map_or(f64::INFINITY, |c| space_bound(c, d, eps));
    Ok(LinfStreamResult { solution, summary, target_rows, kept, b_norm, space_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, seeded};

    fn random(n: usize, d: usize, seed: u64) -> (MatrixF, Vec<f64>) {
        let mut r = seeded(seed);
        let a = MatrixF::new(n, d, (0..n * d).map(|_| gaussian(&mut r)).collect()).unwrap();
        let b = (0..n).map(|_| gaussian(&mut r)).collect();
        (a, b)
    }

    #[test]
    fn linf_midpoint() {
        let a = MatrixF::from_rows(&[[1.0], [1.0]]).unwrap();
        let inst = RegressionInstance::new(a, vec![0.0, 1.0], PNorm::Inf).unwrap();
        let s = solve_linf_exact(&inst).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12);
        assert!((s.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn l1_two_points() {
        let a = MatrixF::from_rows(&[[1.0], [1.0]]).unwrap();
        let inst = RegressionInstance::new(a, vec![0.0, 10.0], PNorm::one()).unwrap();
        let s = solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((s.objective - 10.0).abs() < 1e-9);
        assert!((-1e-9..=10.0 + 1e-9).contains(&s.x[0]));
    }

    #[test]
    fn consistent_systems_for_every_p() {
        let (a, _) = random(40, 3, 1);
        let x0 = [0.5, -2.0, 1.25];
        let b = a.mul_vec(&x0).unwrap();
        for p in [PNorm::one(), PNorm::new(1.5).unwrap(), PNorm::two(), PNorm::new(3.0).unwrap()] {
            let inst = RegressionInstance::new(a.clone(), b.clone(), p).unwrap();
            let s = solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for (x, y) in s.x.iter().zip(&x0) {
                assert!((x - y).abs() < 1e-8, "p={} x={:?}", p.value(), s.x);
            }
            assert!(s.objective <= 1e-8 * vector_pnorm(&b, p));
        }
        let inst = RegressionInstance::new(a, b, PNorm::Inf).unwrap();
        assert!(solve_linf_exact(&inst).unwrap().objective < 1e-10);
    }

    #[test]
    fn irls_is_monotone_and_beats_least_squares() {
        for (seed, p) in [(2, 1.5), (3, 3.0), (4, 4.0), (5, 1.2)] {
            let (a, b) = random(80, 3, seed);
            let inst = RegressionInstance::new(a.clone(), b.clone(), PNorm::new(p).unwrap()).unwrap();
            let s = solve_lp_regression(&inst, 1e-12, 2000).unwrap();
            assert!(s.converged, "p={p}");
            for w in s.smoothed_trace.windows(2) {
                assert!(w[1] <= w[0], "p={p}: {} -> {}", w[0], w[1]);
            }
            let ls = inst.objective(&lstsq(&a, &b).unwrap()).unwrap();
            assert!(s.objective <= ls * (1.0 + 1e-12));
            // first-order optimality: the gradient of ||r||_p^p is A^T (|r|^{p-1} sign r)
            let r = inst.residual(&s.x).unwrap();
            let g: Vec<f64> = r.iter().map(|x| x.abs().powf(p - 1.0) * x.signum()).collect();
            let grad = a.transpose().mul_vec(&g).unwrap();
            let scale: f64 = r.iter().map(|x| x.abs().powf(p - 1.0)).sum();
            assert!(grad.iter().all(|v| v.abs() < 1e-4 * scale), "p={p} grad={grad:?}");
        }
    }

    #[test]
    fn l1_beats_random_perturbations() {
        let (a, b) = random(60, 3, 7);
        let inst = RegressionInstance::new(a, b, PNorm::one()).unwrap();
        let s = solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let mut r = seeded(9);
        for _ in 0..200 {
            let x: Vec<f64> = s.x.iter().map(|v| v + 1e-3 * gaussian(&mut r)).collect();
            assert!(inst.objective(&x).unwrap() >= s.objective - 1e-12);
        }
    }

    #[test]
    fn json_shape() {
        let a = MatrixF::from_rows(&[[1.0], [1.0]]).unwrap();
        let inst = RegressionInstance::new(a, vec![0.0, 1.0], PNorm::Inf).unwrap();
        let v = solve_linf_exact(&inst).unwrap().to_json();
        for k in ["x", "objective", "method", "certified_gap"] {
            assert!(v.get(k).is_some());
        }
    }

    #[test]
    fn embedding_regression_ratio_and_consistency() {
        let (a, b) = random(512, 3, 11);
        let inst = RegressionInstance::new(a.clone(), b, PNorm::one()).unwrap();
        let cfg = TreeConfig::for_rows(512, 4, 0.5, PNorm::one(), WcbMethod::Rounding).unwrap();
        let s = regress_via_embedding(&inst, &cfg).unwrap();
        let opt = solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let gap = s.certified_gap.unwrap();
        assert!(s.objective >= opt.objective * (1.0 - 1e-9));
        assert!(s.objective <= gap * opt.objective, "{} vs {} * {}", s.objective, gap, opt.objective);

        let x0 = [1.0, -1.0, 2.0];
        let consistent = RegressionInstance::new(a.clone(), a.mul_vec(&x0).unwrap(), PNorm::one()).unwrap();
        let s = regress_via_embedding(&consistent, &cfg).unwrap();
        for (x, y) in s.x.iter().zip(&x0) {
            assert!((x - y).abs() < 1e-6, "{:?}", s.x);
        }
    }

    #[test]
    fn linf_stream_additive_bound() {
        let (a, b) = random(400, 3, 21);
        let z = a.append_column(&b).unwrap();
        let full = RegressionInstance::new(a.clone(), b.clone(), PNorm::Inf).unwrap();
        let opt = solve_linf_exact(&full).unwrap().objective;
        for p in [PNorm::one(), PNorm::two(), PNorm::new(4.0).unwrap()] {
            let method = if p == PNorm::two() { WcbMethod::Orth } else { WcbMethod::Rounding };
            let res = linf_additive_stream(block_iter(&z, 40).unwrap(), p, 0.1, method, 3).unwrap();
            let fhat = full.objective(&res.solution.x).unwrap();
            assert!(fhat >= opt - 1e-9);
            assert!(fhat - opt <= 0.1 * res.b_norm, "p={} {fhat} {opt}", p.value());
            assert!(res.kept.windows(2).all(|w| w[0] < w[1]));
            assert!((res.summary.rows() as f64) <= res.space_bound);
        }
    }
}
