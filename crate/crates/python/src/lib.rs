//! Python bindings. Matrices cross the boundary as lists of rows; structured
//! results come back as dicts with the same keys as the command line JSON.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use lpsumm::amm::amm_rowwise;
use lpsumm::conditioning::{wcb, WcbMethod};
use lpsumm::embedding::{subspace_embed, TreeConfig};
use lpsumm::experiment::{gen_dataset, DatasetKind, GenParams};
use lpsumm::leverage::{stream_high_leverage, LeverageReport};
use lpsumm::lowrank::{l1_lowrank_tree, InnerCaps, InnerMode};
use lpsumm::matcore::block_iter;
use lpsumm::regression::{linf_additive_stream, solve_linf_exact, solve_lp_regression, RegressionInstance};
use lpsumm::regression::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use lpsumm::{MatrixF, PNorm};

create_exception!(lpsumm_py, LpsummError, PyException);

fn err(e: lpsumm::Error) -> PyErr {
    LpsummError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<MatrixF> {
    if rows.is_empty() {
        return Err(LpsummError::new_err("matrix needs at least one row"));
    }
    MatrixF::from_rows(&rows).map_err(err)
}

fn rows(m: &MatrixF) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn pnorm(p: &str) -> PyResult<PNorm> {
    p.parse().map_err(err)
}

fn method(name: &str) -> PyResult<WcbMethod> {
    name.parse().map_err(err)
}

/// JSON value to the equivalent Python object.
fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| LpsummError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Well-conditioned basis `U = A R`; returns `u`, `r`, `s` and the certificate.
#[pyfunction]
#[pyo3(signature = (a, p = "2", basis = "orth", seed = 0))]
fn well_conditioned_basis(py: Python<'_>, a: Vec<Vec<f64>>, p: &str, basis: &str, seed: u64) -> PyResult<Py<PyAny>> {
    let f = wcb(&matrix(a)?, pnorm(p)?, method(basis)?, seed).map_err(err)?;
    let v = serde_json::json!({
        "u": rows(&f.u),
        "r": rows(&f.r),
        "s": rows(&f.s),
        "alpha": f.cert.alpha,
        "beta": f.cert.beta,
        "p": f.cert.p,
        "method": f.cert.method,
    });
    to_py(py, &v)
}

/// Offline leverage scores, with the rows above `tau`.
#[pyfunction]
#[pyo3(signature = (a, p = "2", basis = "orth", tau = 0.0, seed = 0))]
fn leverage_scores(py: Python<'_>, a: Vec<Vec<f64>>, p: &str, basis: &str, tau: f64, seed: u64) -> PyResult<Py<PyAny>> {
    let rep = LeverageReport::global(&matrix(a)?, pnorm(p)?, method(basis)?, seed, tau).map_err(err)?;
    let mut v = rep.to_json();
    v["scores"] = serde_json::json!(rep.scores);
    to_py(py, &v)
}

/// One pass over row blocks keeping every row whose global leverage may exceed `tau`.
#[pyfunction]
#[pyo3(signature = (a, tau, block, p = "2", basis = "orth", seed = 0))]
fn high_leverage_rows(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    tau: f64,
    block: usize,
    p: &str,
    basis: &str,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let a = matrix(a)?;
    let st = stream_high_leverage(block_iter(&a, block).map_err(err)?, pnorm(p)?, tau, method(basis)?, seed)
        .map_err(err)?;
    to_py(py, &st.to_json())
}

/// Merge-and-reduce subspace embedding; returns `(t, trace, certified_distortion)`.
#[pyfunction]
#[pyo3(signature = (a, p = "1", gamma = 0.5, basis = "rounding", seed = 0))]
fn subspace_embedding(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    p: &str,
    gamma: f64,
    basis: &str,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Py<PyAny>, f64)> {
    let a = matrix(a)?;
    let cfg = TreeConfig::for_rows(a.rows(), a.cols(), gamma, pnorm(p)?, method(basis)?).map_err(err)?.with_seed(seed);
    let res = subspace_embed(block_iter(&a, cfg.block_rows).map_err(err)?, &cfg).map_err(err)?;
    Ok((rows(&res.t), to_py(py, &res.trace_json())?, res.certified_distortion))
}

/// `argmin_x ||A x - b||_p` for any `p` in `[1, inf]`.
#[pyfunction]
#[pyo3(signature = (a, b, p = "2"))]
fn regress(py: Python<'_>, a: Vec<Vec<f64>>, b: Vec<f64>, p: &str) -> PyResult<Py<PyAny>> {
    let p = pnorm(p)?;
    let inst = RegressionInstance::new(matrix(a)?, b, p).map_err(err)?;
    let sol = if p.is_inf() {
        solve_linf_exact(&inst)
    } else {
        solve_lp_regression(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }
    .map_err(err)?;
    to_py(py, &sol.to_json())
}

/// One-pass l-infinity regression with additive error `eps * ||b||_p`.
#[pyfunction]
#[pyo3(signature = (a, b, eps, block, p = "2", basis = "orth", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn linf_stream(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    eps: f64,
    block: usize,
    p: &str,
    basis: &str,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let z = matrix(a)?.append_column(&b).map_err(err)?;
    let res = linf_additive_stream(block_iter(&z, block).map_err(err)?, pnorm(p)?, eps, method(basis)?, seed)
        .map_err(err)?;
    to_py(py, &res.to_json())
}

/// Entrywise l1 rank-`k` approximation; returns `(left, right, metadata)`.
#[pyfunction]
#[pyo3(signature = (a, k = 1, gamma = 0.5, mode = "enumerated", seed = 0))]
fn l1_lowrank(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    k: usize,
    gamma: f64,
    mode: &str,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Py<PyAny>)> {
    let a = matrix(a)?;
    let mode: InnerMode = mode.parse().map_err(err)?;
    let cfg =
        TreeConfig::for_rows(a.rows(), a.cols(), gamma, PNorm::one(), WcbMethod::Rounding).map_err(err)?.with_seed(seed);
    let res = l1_lowrank_tree(&a, k, &cfg, mode, seed, InnerCaps::default()).map_err(err)?;
    Ok((rows(&res.left), rows(&res.right), to_py(py, &res.metadata_json())?))
}

/// Thresholded `A B^T` as `(i, j, value)` triples, plus the error bound.
#[pyfunction]
fn amm(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, eps: f64) -> PyResult<(Vec<(usize, usize, f64)>, f64)> {
    let res = amm_rowwise(&matrix(a)?, &matrix(b)?, eps).map_err(err)?;
    Ok((res.product_triples(), res.error_bound))
}

/// Synthetic data; returns `(x, b, planted_rows)`.
#[pyfunction]
#[pyo3(signature = (name, n = 1000, d = 4, k = 3, noise = 0.1, scale = 10.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    name: &str,
    n: usize,
    d: usize,
    k: usize,
    noise: f64,
    scale: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<usize>)> {
    let kind: DatasetKind = name.parse().map_err(err)?;
    let ds = gen_dataset(kind, GenParams { n, d, k, noise, scale }, seed).map_err(err)?;
    Ok((rows(&ds.x), ds.b, ds.planted))
}

#[pymodule]
fn lpsumm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LpsummError", m.py().get_type::<LpsummError>())?;
    m.add_function(wrap_pyfunction!(well_conditioned_basis, m)?)?;
    m.add_function(wrap_pyfunction!(leverage_scores, m)?)?;
    m.add_function(wrap_pyfunction!(high_leverage_rows, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(regress, m)?)?;
    m.add_function(wrap_pyfunction!(linf_stream, m)?)?;
    m.add_function(wrap_pyfunction!(l1_lowrank, m)?)?;
    m.add_function(wrap_pyfunction!(amm, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
