use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lpsumm::amm::{amm_rowwise, amm_streaming_columns};
use lpsumm::conditioning::WcbMethod;
use lpsumm::embedding::{subspace_embed, TreeConfig};
use lpsumm::experiment::{
    gen_dataset, rank_one_with_spikes, run_amm_experiment, run_embed_experiment, run_linf_experiment,
    run_lowrank_experiment, write_linf_report, DatasetKind, DatasetSpec, ExperimentSpec, GenParams, SummaryMethod,
};
use lpsumm::leverage::{stream_summarize, LeverageReport, LocalThreshold};
use lpsumm::lowrank::{l1_lowrank_tree, InnerCaps, InnerMode};
use lpsumm::matcore::{block_iter, load_matrix_with, to_csv_string, write_csv, write_triples, LoadOptions, MatrixFormat};
use lpsumm::regression::{
    linf_additive_stream, regress_via_embedding, solve_linf_exact, solve_lp_regression, RegressionInstance,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use lpsumm::{Error, MatrixF, PNorm, Result};

/// Streaming and merge-and-reduce summaries for lp-norm matrix problems.
#[derive(Parser, Debug)]
#[command(name = "lpsumm", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset `[X | b]` (dataset name via --method).
    Gen,
    /// Leverage scores: offline, or streamed with --tau / --budget.
    Leverage,
    /// Merge-and-reduce subspace embedding; prints the per-level trace.
    Embed,
    /// lp regression on `[A | b]` (last column is the target).
    Regress,
    /// One-pass additive-error l-infinity regression on `[A | b]`.
    Linf,
    /// Entrywise l1 rank-k approximation through the merge-and-reduce tree.
    Lowrank,
    /// Thresholded approximate matrix product.
    Amm,
    /// Experiment drivers (linf, embed, amm, lowrank) writing reports into --out.
    Experiment,
}

#[derive(Args, Debug)]
struct Opts {
    /// Input matrix file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Second input (the B factor of `amm`).
    #[arg(long, global = true)]
    second: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    /// CSV input starts with a header line.
    #[arg(long, global = true)]
    header: bool,
    /// Norm exponent, a real >= 1 or `inf`.
    #[arg(long, global = true)]
    p: Option<String>,
    /// Block size exponent: blocks hold `n^gamma` rows.
    #[arg(long, global = true, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 5)]
    trials: usize,
    /// Output directory; JSON goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Target rank of `lowrank`.
    #[arg(long, global = true, default_value_t = 1)]
    rank: usize,
    /// Rows of a generated dataset.
    #[arg(long, global = true, default_value_t = 1000)]
    rows: usize,
    /// Feature columns of a generated dataset.
    #[arg(long, global = true, default_value_t = 4)]
    cols: usize,
    /// Planted rows of a generated dataset.
    #[arg(long, global = true, default_value_t = 3)]
    planted: usize,
    #[arg(long, global = true, default_value_t = 0.1)]
    noise: f64,
    /// Magnitude of the bulk rows of a generated dataset.
    #[arg(long, global = true, default_value_t = 10.0)]
    scale: f64,
    /// Generated dataset for `experiment` when no --input is given.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Experiment kind: linf, embed, amm or lowrank.
    #[arg(long, global = true, default_value = "linf")]
    kind: String,
    /// Comma-separated budgets for the linf experiment.
    #[arg(long, global = true, value_delimiter = ',')]
    budgets: Vec<usize>,
}

impl Opts {
    fn input(&self) -> Result<MatrixF> {
        let path = self.input.as_ref().ok_or_else(|| invalid("--input is required"))?;
        self.load(path)
    }

    fn load(&self, path: &Path) -> Result<MatrixF> {
        load_matrix_with(path, self.matrix_format()?, LoadOptions { header: self.header })
    }

    fn matrix_format(&self) -> Result<MatrixFormat> {
        self.format.parse()
    }

    fn p_or(&self, default: PNorm) -> Result<PNorm> {
        self.p.as_deref().map_or(Ok(default), str::parse)
    }

    fn basis_method(&self) -> Result<WcbMethod> {
        self.method.as_deref().map_or(Ok(WcbMethod::Orth), str::parse)
    }

    fn gen_params(&self) -> GenParams {
        GenParams { n: self.rows, d: self.cols, k: self.planted, noise: self.noise, scale: self.scale }
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = self.out.as_deref().ok_or_else(|| invalid("--out is required"))?;
        fs::create_dir_all(out)?;
        Ok(out)
    }
}

fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Writes `value` to `out/name` when --out is set, otherwise prints it.
fn emit(opts: &Opts, name: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match &opts.out {
        Some(_) => fs::write(opts.out_dir()?.join(name), text + "\n")?,
        None => write_stdout(&(text + "\n"))?,
    }
    Ok(())
}

fn default_block(n: usize, d: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(((n.max(1) as f64).powf(gamma).ceil() as usize).max(2 * d).max(1))
}

fn gen(opts: &Opts) -> Result<()> {
    let name: DatasetKind = opts.method.as_deref().unwrap_or("gaussian").parse()?;
    let ds = gen_dataset(name, opts.gen_params(), opts.seed)?;
    let z = ds.augmented()?;
    match &opts.out {
        Some(_) => {
            let out = opts.out_dir()?;
            write_csv(out.join("data.csv"), &z)?;
            let meta = json!({
                "dataset": name,
                "params": opts.gen_params(),
                "seed": opts.seed,
                "rows": z.rows(),
                "features": ds.x.cols(),
                "planted": ds.planted,
            });
            fs::write(out.join("dataset.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => write_stdout(&to_csv_string(&z))?,
    }
    Ok(())
}

fn leverage(opts: &Opts) -> Result<()> {
    let a = opts.input()?;
    let method = opts.basis_method()?;
    let p = opts.p_or(method.native_p().unwrap_or(PNorm::two()))?;
    let report = if let Some(m) = opts.budget {
        stream_summarize(block_iter(&a, m.max(1))?, p, LocalThreshold::Budget(m), method, opts.seed)?.to_json()
    } else if let Some(tau) = opts.tau {
        let block = default_block(a.rows(), a.cols(), opts.gamma)?;
        stream_summarize(block_iter(&a, block)?, p, LocalThreshold::Global(tau), method, opts.seed)?.to_json()
    } else {
        LeverageReport::global(&a, p, method, opts.seed, 0.0)?.to_json()
    };
    emit(opts, "leverage.json", &report)
}

fn embed(opts: &Opts) -> Result<()> {
    let a = opts.input()?;
    let method = opts.basis_method()?;
    let p = opts.p_or(PNorm::one())?;
    let cfg = TreeConfig::for_rows(a.rows(), a.cols(), opts.gamma, p, method)?.with_seed(opts.seed);
    let res = subspace_embed(block_iter(&a, cfg.block_rows)?, &cfg)?;
    if opts.out.is_some() {
        write_csv(opts.out_dir()?.join("embedding.csv"), &res.t)?;
    }
    emit(opts, "trace.json", &res.trace_json())
}

fn regress(opts: &Opts) -> Result<()> {
    let z = opts.input()?;
    let p = opts.p_or(PNorm::two())?;
    let inst = RegressionInstance::from_augmented(&z, p)?;
    let sol = match opts.method.as_deref().unwrap_or("exact") {
        "exact" if p.is_inf() => solve_linf_exact(&inst)?,
        "exact" => solve_lp_regression(&inst, opts.eps.unwrap_or(DEFAULT_TOL), DEFAULT_MAX_ITER)?,
        name => {
            let method: WcbMethod = name.parse()?;
            let cfg = TreeConfig::for_rows(inst.a.rows(), inst.a.cols(), opts.gamma, p, method)?.with_seed(opts.seed);
            regress_via_embedding(&inst, &cfg)?
        }
    };
    emit(opts, "regression.json", &sol.to_json())?;
    if !sol.converged {
        // the last iterate is still reported
        return Err(Error::NotConverged { what: format!("{} regression", sol.method), iterations: sol.iterations });
    }
    Ok(())
}

fn linf(opts: &Opts) -> Result<()> {
    let z = opts.input()?;
    let method = opts.basis_method()?;
    let p = opts.p_or(method.native_p().unwrap_or(PNorm::two()))?;
    let eps = opts.eps.unwrap_or(0.1);
    let block = match opts.budget {
        Some(b) => b,
        None => default_block(z.rows(), z.cols(), opts.gamma)?,
    };
    let res = linf_additive_stream(block_iter(&z, block)?, p, eps, method, opts.seed)?;
    emit(opts, "regression.json", &res.to_json())
}

fn lowrank(opts: &Opts) -> Result<()> {
    let a = opts.input()?;
    let mode: InnerMode = opts.method.as_deref().unwrap_or("enumerated").parse()?;
    let cfg = TreeConfig::for_rows(a.rows(), a.cols(), opts.gamma, PNorm::one(), WcbMethod::Rounding)?
        .with_seed(opts.seed);
    let res = l1_lowrank_tree(&a, opts.rank, &cfg, mode, opts.seed, InnerCaps::default())?;
    let out = opts.out_dir()?;
    write_csv(out.join("left.csv"), &res.left)?;
    write_csv(out.join("right.csv"), &res.right)?;
    fs::write(out.join("lowrank.json"), serde_json::to_string_pretty(&res.metadata_json())? + "\n")?;
    Ok(())
}

fn amm(opts: &Opts) -> Result<()> {
    let a = opts.input()?;
    let b = match &opts.second {
        Some(path) => opts.load(path)?,
        None => a.clone(),
    };
    let eps = opts.eps.unwrap_or(0.1);
    let res = match opts.method.as_deref().unwrap_or("rows") {
        // A B^T from row-wise thresholding
        "rows" => amm_rowwise(&a, &b, eps)?,
        // A^T B in one synchronized pass over the rows of both
        "columns" => {
            let block = opts.budget.unwrap_or(1).max(1);
            amm_streaming_columns(block_iter(&a, block)?, block_iter(&b, block)?, eps)?
        }
        other => return Err(Error::InvalidArgument(format!("unknown amm method {other:?} (rows, columns)"))),
    };
    let triples = res.product_triples();
    match &opts.out {
        Some(_) => {
            let out = opts.out_dir()?;
            write_triples(out.join("product.csv"), &triples)?;
            let meta = json!({
                "eps": eps,
                "error_bound": res.error_bound,
                "nnz_a": res.a_bar.nnz(),
                "nnz_b": res.b_bar.nnz(),
                "product_entries": triples.len(),
            });
            fs::write(out.join("amm.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => {
            let mut text = String::from("i,j,value\n");
            for (i, j, v) in triples {
                text += &format!("{i},{j},{v:.16e}\n");
            }
            write_stdout(&text)?;
        }
    }
    Ok(())
}

fn experiment(opts: &Opts) -> Result<()> {
    let out = opts.out_dir()?;
    match opts.kind.as_str() {
        "linf" => {
            let dataset = match &opts.input {
                Some(path) => DatasetSpec::File {
                    path: path.display().to_string(),
                    format: opts.matrix_format()?,
                    header: opts.header,
                },
                None => DatasetSpec::Generator {
                    name: opts.dataset.as_deref().unwrap_or("census-like").parse()?,
                    params: opts.gen_params(),
                    seed: opts.seed,
                },
            };
            let methods = match &opts.method {
                Some(list) => list.split(',').map(str::parse).collect::<Result<Vec<SummaryMethod>>>()?,
                None => vec![SummaryMethod::Orth, SummaryMethod::Spc3, SummaryMethod::Identity, SummaryMethod::Sample],
            };
            let d = dataset.materialize()?.x.cols();
            let budgets = if !opts.budgets.is_empty() {
                opts.budgets.clone()
            } else if let Some(m) = opts.budget {
                vec![m]
            } else {
                [1, 2, 8, 32, 128].iter().map(|f| f * d).collect()
            };
            let spec = ExperimentSpec {
                dataset,
                methods,
                budgets,
                p: opts.p_or(PNorm::one())?,
                eps: opts.eps.unwrap_or(0.1),
                seed: opts.seed,
                trials: opts.trials,
            };
            let rows = run_linf_experiment(&spec)?;
            write_linf_report(&spec, &rows, out)
        }
        "embed" => {
            let a = experiment_matrix(opts)?;
            let method = opts.basis_method()?;
            let p = opts.p_or(PNorm::one())?;
            let cfg = TreeConfig::for_rows(a.rows(), a.cols(), opts.gamma, p, method)?.with_seed(opts.seed);
            let (report, _) = run_embed_experiment(&a, &cfg, 1000, opts.seed)?;
            let manifest = json!({"experiment": "embed", "config": cfg, "report": report});
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
            Ok(())
        }
        "amm" => {
            let a = experiment_matrix(opts)?;
            let b = match &opts.second {
                Some(path) => opts.load(path)?,
                None => a.clone(),
            };
            let grid = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
            let rows = run_amm_experiment(&a, &b, &grid)?;
            let mut csv = String::from("eps,error,bound,nnz_a,nnz_b,holds\n");
            for r in &rows {
                csv += &format!("{},{:.16e},{:.16e},{},{},{}\n", r.eps, r.error, r.bound, r.nnz_a, r.nnz_b, r.holds);
            }
            fs::write(out.join("metrics.csv"), csv)?;
            let manifest = json!({"experiment": "amm", "eps_grid": grid, "files": ["metrics.csv"]});
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
            Ok(())
        }
        "lowrank" => {
            let mode: InnerMode = opts.method.as_deref().unwrap_or("enumerated").parse()?;
            let instances: Vec<MatrixF> = (0..opts.trials as u64)
                .map(|t| rank_one_with_spikes(opts.rows.min(64), opts.cols.min(8), opts.planted, opts.seed + t))
                .collect();
            let rows = run_lowrank_experiment(&instances, opts.gamma, mode, opts.seed)?;
            let mut csv = String::from("instance,l1_error,reference,ratio\n");
            for (i, r) in rows.iter().enumerate() {
                csv += &format!("{i},{:.16e},{:.16e},{:.16e}\n", r.l1_error, r.reference, r.ratio);
            }
            fs::write(out.join("metrics.csv"), csv)?;
            let manifest = json!({
                "experiment": "lowrank",
                "mode": mode,
                "rows": opts.rows.min(64),
                "cols": opts.cols.min(8),
                "spikes": opts.planted,
                "seed": opts.seed,
                "trials": opts.trials,
                "files": ["metrics.csv"],
            });
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
            Ok(())
        }
        other => Err(Error::InvalidArgument(format!("unknown experiment kind {other:?} (linf, embed, amm, lowrank)"))),
    }
}

/// --input if given, else the generated dataset's feature matrix.
fn experiment_matrix(opts: &Opts) -> Result<MatrixF> {
    if opts.input.is_some() {
        return opts.input();
    }
    let name: DatasetKind = opts.dataset.as_deref().unwrap_or("gaussian").parse()?;
    Ok(gen_dataset(name, opts.gen_params(), opts.seed)?.x)
}

fn run(cli: &Cli) -> Result<()> {
    let opts = &cli.opts;
    match cli.cmd {
        Cmd::Gen => gen(opts),
        Cmd::Leverage => leverage(opts),
        Cmd::Embed => embed(opts),
        Cmd::Regress => regress(opts),
        Cmd::Linf => linf(opts),
        Cmd::Lowrank => lowrank(opts),
        Cmd::Amm => amm(opts),
        Cmd::Experiment => experiment(opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (e.g. `| head`) is not a failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
