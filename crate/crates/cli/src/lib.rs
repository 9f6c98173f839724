//! Command implementations behind the `lpfix` binary. Each command returns the
//! process exit code; `Err` maps to [`EXIT_ERROR`].

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lpfix::bench::{run_sweep, SweepSpec};
use lpfix::grid::min_grid_resolution;
use lpfix::grid_solver::{
    solve_grid_l1, verify_violation_certificate, GridOutcome, GridReport, GridSolveParams, ViolationCertificate,
};
use lpfix::oracles::{make_affine_clamped, make_constant, make_non_contraction, random_affine_instance, ContractionInstance, NonContraction};
use lpfix::solver::{solve_continuous, IterationRecord, Method, Outcome, SolveParams, SolveReport};
use lpfix::{Exec, PNorm};

pub const EXIT_FIXPOINT: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_CERTIFICATE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "lpfix", version, about = "Approximate fixpoints of lp contraction maps on the unit cube")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Continuous solve; exit 0 on a fixpoint, 3 when the query budget runs out.
    Solve(RunConfig),
    /// l1 grid solve; exit 0 on a fixpoint, 2 on a verified violation certificate.
    GridSolve(GridArgs),
    /// Parameter sweep over random affine instances, one CSV row per cell.
    Bench(BenchArgs),
    /// Check a violation certificate; exit 0 if it is valid.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Instance JSON. Without it a random affine instance is built from --d, --p, --lambda and --seed.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// 1, 2, inf, or any real >= 1.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Cloud size.
    #[arg(long)]
    pub cloud: Option<usize>,
    /// Direction-sample size (default 64 d).
    #[arg(long)]
    pub dirs: Option<usize>,
    #[arg(long)]
    pub rho_min: Option<f64>,
    #[arg(long, env = "LPFIX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_queries: Option<usize>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Run without the thread pool.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunConfig,
    /// Grid resolution; defaults to the instance's `b` or the minimum sound resolution.
    #[arg(long)]
    pub bits: Option<u32>,
    /// Also write the bare certificate here when one is produced.
    #[arg(long)]
    pub out_certificate: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    pub ds: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,inf")]
    pub ps: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.001")]
    pub epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, env = "LPFIX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1 << 17)]
    pub cloud: usize,
    #[arg(long)]
    pub dirs: Option<usize>,
    /// Defaults to stdout.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Certificate JSON: an array of `{x, b, fx}` entries.
    #[arg(long)]
    pub certificate: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub d: usize,
    pub p: PNorm,
    pub lambda: f64,
    pub epsilon: f64,
    pub map: MapSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MapSpec {
    Affine {
        #[serde(rename = "A")]
        a: Matrix,
        t: Vec<f64>,
    },
    Constant {
        c: Vec<f64>,
    },
    NonContractionDemo {
        b: u32,
    },
}

/// Row-major matrix, either flat or as nested rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Matrix {
    fn to_dmatrix(&self, d: usize) -> Result<lpfix::oracles::DMatrix<f64>> {
        let flat: Vec<f64> = match self {
            Matrix::Flat(v) => v.clone(),
            Matrix::Rows(rows) => {
                ensure!(rows.iter().all(|r| r.len() == d), "every row of A must have {d} entries");
                rows.concat()
            }
        };
        ensure!(flat.len() == d * d, "A must have {} entries, found {}", d * d, flat.len());
        Ok(lpfix::oracles::DMatrix::from_row_slice(d, d, &flat))
    }
}

pub enum Instance {
    Contraction(ContractionInstance),
    Demo(NonContraction),
}

/// A resolved problem: the map plus the parameters it is solved with.
pub struct Problem {
    pub instance: Instance,
    pub d: usize,
    pub p: PNorm,
    pub epsilon: f64,
    pub lambda: f64,
    pub demo_bits: Option<u32>,
}

pub fn parse_p(s: &str) -> Result<PNorm> {
    s.parse::<PNorm>().map_err(|e| anyhow!("bad p {s:?}: {e}"))
}

pub fn read_instance(path: &Path) -> Result<InstanceSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing instance {}", path.display()))
}

/// Loads the instance (or builds the inline one) and applies flag overrides.
pub fn resolve_problem(cfg: &RunConfig) -> Result<Problem> {
    let p_flag = cfg.p.as_deref().map(parse_p).transpose()?;
    let Some(path) = &cfg.instance else {
        let d = cfg.d.context("--d is required without --instance")?;
        let p = p_flag.context("--p is required without --instance")?;
        let lambda = cfg.lambda.context("--lambda is required without --instance")?;
        let epsilon = cfg.epsilon.unwrap_or(1e-3);
        let inst = random_affine_instance(d, p, lambda, cfg.seed)?;
        let lambda = inst.lambda();
        return Ok(Problem { instance: Instance::Contraction(inst), d, p, epsilon, lambda, demo_bits: None });
    };
    let spec = read_instance(path)?;
    if let Some(d) = cfg.d {
        ensure!(d == spec.d, "--d {d} disagrees with the instance dimension {}", spec.d);
    }
    let p = p_flag.unwrap_or(spec.p);
    let epsilon = cfg.epsilon.unwrap_or(spec.epsilon);
    let lambda = cfg.lambda.unwrap_or(spec.lambda);
    let (instance, demo_bits) = match &spec.map {
        MapSpec::Affine { a, t } => {
            ensure!(t.len() == spec.d, "t must have {} entries, found {}", spec.d, t.len());
            let inst = make_affine_clamped(a.to_dmatrix(spec.d)?, t.clone(), p)?;
            (Instance::Contraction(declare(inst, lambda)?), None)
        }
        MapSpec::Constant { c } => {
            ensure!(c.len() == spec.d, "c must have {} entries, found {}", spec.d, c.len());
            (Instance::Contraction(declare(make_constant(c.clone(), p)?, lambda)?), None)
        }
        MapSpec::NonContractionDemo { b } => (Instance::Demo(make_non_contraction(spec.d, *b)?), Some(*b)),
    };
    Ok(Problem { instance, d: spec.d, p, epsilon, lambda, demo_bits })
}

fn declare(inst: ContractionInstance, lambda: f64) -> Result<ContractionInstance> {
    let verified = inst.lambda();
    inst.with_declared_lambda(lambda)
        .map_err(|_| anyhow!("declared lambda {lambda} is below the verified contraction bound {verified} or not < 1"))
}

fn exec_of(serial: bool) -> Exec {
    if serial {
        Exec::Serial
    } else {
        Exec::Parallel
    }
}

/// JSON summary of a continuous solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub d: usize,
    pub p: PNorm,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
    pub method: Method,
    pub outcome: Outcome,
    pub queries_used: usize,
    pub banach_queries: usize,
    pub min_rho: Option<f64>,
    pub theoretical_bound: u64,
}

/// CSV row of a solve trace; query coordinates are spread into `x1..xd`.
pub struct TraceRow {
    pub iter: usize,
    pub query: Vec<f64>,
    pub residual: f64,
    pub alive_fraction: f64,
    pub achieved_rho: f64,
    pub discard_fraction: f64,
    pub cum_queries: usize,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        TraceRow {
            iter: r.iter,
            query: r.query.clone(),
            residual: r.residual,
            alive_fraction: r.alive_fraction_after,
            achieved_rho: r.achieved_rho,
            discard_fraction: r.discard_fraction,
            cum_queries: r.cum_queries,
        }
    }
}

pub fn write_trace_csv(path: &Path, d: usize, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["iter".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["residual", "alive_fraction", "achieved_rho", "discard_fraction", "cum_queries"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.iter.to_string()];
        rec.extend(r.query.iter().map(f64::to_string));
        rec.extend([r.residual, r.alive_fraction, r.achieved_rho, r.discard_fraction].map(|v| v.to_string()));
        rec.push(r.cum_queries.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn solve_params(cfg: &RunConfig, problem: &Problem) -> SolveParams {
    let mut params = SolveParams::new(problem.d, problem.p, problem.epsilon, problem.lambda);
    params.cloud = cfg.cloud.unwrap_or(params.cloud);
    params.dirs = cfg.dirs.unwrap_or(params.dirs);
    params.rho_min = cfg.rho_min.unwrap_or(params.rho_min);
    params.max_queries = cfg.max_queries;
    params.seed = cfg.seed;
    params.exec = exec_of(cfg.serial);
    params
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    let problem = resolve_problem(cfg)?;
    let Instance::Contraction(inst) = &problem.instance else {
        bail!("non_contraction_demo instances only run under grid-solve");
    };
    let params = solve_params(cfg, &problem);
    let report: SolveReport = solve_continuous(inst, &params)?;
    if let Some(path) = &cfg.out_csv {
        let rows: Vec<TraceRow> = report.trace.iter().map(TraceRow::from).collect();
        write_trace_csv(path, problem.d, &rows)?;
    }
    let summary = SolveSummary {
        d: problem.d,
        p: problem.p,
        epsilon: problem.epsilon,
        lambda: problem.lambda,
        seed: cfg.seed,
        method: report.method,
        outcome: report.outcome.clone(),
        queries_used: report.queries_used,
        banach_queries: report.banach_queries,
        min_rho: report.min_rho,
        theoretical_bound: report.theoretical_bound,
    };
    emit_summary(cfg.out_json.as_deref(), &summary)?;
    Ok(match report.outcome {
        Outcome::FoundFixpoint { .. } => EXIT_FIXPOINT,
        Outcome::QueryBudgetExhausted => EXIT_BUDGET,
    })
}

fn emit_summary<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// JSON summary of a grid solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub d: usize,
    pub bits: u32,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
    pub outcome: GridOutcome,
    /// Fixpoint coordinates as reals, when one was found.
    pub x: Option<Vec<f64>>,
    pub queries_used: usize,
    pub certificate_verified: Option<bool>,
}

pub fn cmd_grid_solve(args: &GridArgs) -> Result<u8> {
    let cfg = &args.run;
    let problem = resolve_problem(cfg)?;
    ensure!(problem.p == PNorm::One, "grid-solve works in the l1 norm only (got p = {})", problem.p);
    let mut params = GridSolveParams::new(problem.d);
    params.dirs = cfg.dirs.unwrap_or(params.dirs);
    params.rho_min = cfg.rho_min.unwrap_or(params.rho_min);
    params.max_queries = cfg.max_queries;
    params.seed = cfg.seed;
    params.exec = exec_of(cfg.serial);
    let (bits, report): (u32, GridReport) = match &problem.instance {
        Instance::Contraction(inst) => {
            let bits = args.bits.unwrap_or_else(|| min_grid_resolution(problem.d, problem.epsilon, problem.lambda));
            (bits, solve_grid_l1(inst, problem.d, bits, problem.epsilon, problem.lambda, &params)?)
        }
        Instance::Demo(demo) => {
            let bits = args.bits.or(problem.demo_bits).expect("demo instances carry b");
            ensure!(bits == demo.grid().bits(), "--bits {bits} disagrees with the demo's b = {}", demo.grid().bits());
            params.enforce_resolution = false;
            (bits, solve_grid_l1(demo, problem.d, bits, problem.epsilon, demo.declared_lambda(), &params)?)
        }
    };
    if let Some(path) = &cfg.out_csv {
        let side = (1u64 << bits) as f64;
        let total = (side + 1.0).powi(problem.d as i32);
        let rows: Vec<TraceRow> = report
            .trace
            .iter()
            .map(|r| TraceRow {
                iter: r.iter,
                query: r.query.iter().map(|&k| k as f64 / side).collect(),
                residual: r.residual,
                alive_fraction: r.alive_after as f64 / total,
                achieved_rho: r.achieved_rho,
                discard_fraction: (r.alive_before - r.alive_after) as f64 / r.alive_before.max(1) as f64,
                cum_queries: r.iter + 1,
            })
            .collect();
        write_trace_csv(path, problem.d, &rows)?;
    }
    let (code, x, verified) = match &report.outcome {
        GridOutcome::FoundFixpoint { x, .. } => (EXIT_FIXPOINT, Some(x.to_coords()), None),
        GridOutcome::Certificate { certificate } => {
            let ok = verify_violation_certificate(certificate, problem.d, bits, params.exec)?;
            ensure!(ok, "solver produced a certificate that does not verify");
            if let Some(path) = &args.out_certificate {
                write_json(path, certificate)?;
            }
            (EXIT_CERTIFICATE, None, Some(true))
        }
    };
    let summary = GridSummary {
        d: problem.d,
        bits,
        epsilon: problem.epsilon,
        lambda: problem.lambda,
        seed: cfg.seed,
        outcome: report.outcome,
        x,
        queries_used: report.queries_used,
        certificate_verified: verified,
    };
    emit_summary(cfg.out_json.as_deref(), &summary)?;
    Ok(code)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let spec = SweepSpec {
        ds: args.ds.clone(),
        ps: args.ps.iter().map(|s| parse_p(s)).collect::<Result<_>>()?,
        epsilons: args.epsilons.clone(),
        lambdas: args.lambdas.clone(),
        instances: args.instances,
        seed: args.seed,
        cloud: args.cloud,
        dirs: args.dirs,
        exec: exec_of(args.serial),
    };
    let rows = run_sweep(&spec);
    let sink: Box<dyn Write> = match &args.out_csv {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(EXIT_FIXPOINT)
}

pub fn read_certificate(path: &Path) -> Result<ViolationCertificate> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing certificate {}", path.display()))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let cert = read_certificate(&args.certificate)?;
    let first = cert.0.first().context("empty certificate")?;
    let (d, b) = (first.x.len(), first.b);
    if verify_violation_certificate(&cert, d, b, Exec::Parallel)? {
        println!("valid certificate ({} entries, d = {d}, b = {b})", cert.0.len());
        Ok(EXIT_FIXPOINT)
    } else {
        println!("certificate does not show a violation");
        Ok(EXIT_ERROR)
    }
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Solve(cfg) => cmd_solve(cfg),
        Command::GridSolve(args) => cmd_grid_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
    }
}
