//! `krad`: synthetic benchmarks, sweeps, matrix-root checks and regret
//! probes on the command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use krad_core::bench::{
    lr_sweep, run_experiment, spd_with_condition, write_regret, write_regret_to, write_trace,
    ExperimentSpec, LossTrace, OptKind, OptimizerSpec, ProblemSpec,
};
use krad_core::roots::{int_power, matrix_power, RootConfig, RootMethod};
use krad_core::{DenseMatrix, Error, Precision};

#[derive(Parser)]
#[command(name = "krad", version, about = "Kronecker-factored optimizer benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run on the ill-conditioned quadratic, written as a trace CSV.
    Quad(QuadArgs),
    /// Learning-rate / epsilon sweeps described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Residual and cost of one matrix root.
    Roots(RootsArgs),
    /// Cumulative regret on stochastic least squares.
    Regret(RegretArgs),
}

#[derive(Parser)]
struct QuadArgs {
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, value_parser = parse_kind)]
    opt: OptKind,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Defaults to the optimizer's own epsilon.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value = "f64", value_parser = parse_precision)]
    precision: Precision,
    #[arg(long, default_value_t = 3)]
    precond_interval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Newton,
    Eig,
}

#[derive(Parser)]
struct RootsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: u32,
    /// Condition number, e.g. `1e6`.
    #[arg(long)]
    cond: f64,
    #[arg(long, default_value = "f64", value_parser = parse_precision)]
    precision: Precision,
    #[arg(long, value_enum, default_value_t = Method::Newton)]
    method: Method,
    /// Compute `A^{-1/p}` instead of `A^{1/p}`.
    #[arg(long)]
    inverse: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Parser)]
struct RegretArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 8000)]
    steps: usize,
    #[arg(long, value_parser = parse_kind)]
    opt: OptKind,
    #[arg(long, default_value_t = 0.2)]
    lr: f64,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value = "f64", value_parser = parse_precision)]
    precision: Precision,
    #[arg(long, default_value_t = 1)]
    precond_interval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<OptKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    problem: ProblemConfig,
    optimizers: Vec<OptimizerGrid>,
    seed: u64,
    out_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemConfig {
    #[serde(rename = "type")]
    kind: String,
    n: usize,
    steps: usize,
    #[serde(default = "default_batch")]
    batch: usize,
    #[serde(default = "default_noise")]
    noise: f64,
}

fn default_batch() -> usize {
    8
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerGrid {
    kind: OptKind,
    lrs: Vec<f64>,
    epss: Vec<f64>,
    precision: Precision,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric() { 3 } else { 2 };
        Failure { code, msg: e.to_string() }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn numeric_err(msg: impl Into<String>) -> Failure {
    Failure { code: 3, msg: msg.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Quad(a) => quad(a),
        Cmd::Sweep { config } => sweep(&config),
        Cmd::Roots(a) => roots(a),
        Cmd::Regret(a) => regret(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn optimizer(kind: OptKind, precision: Precision, lr: f64, eps: Option<f64>) -> OptimizerSpec {
    let spec = OptimizerSpec::new(kind, precision).with_lr(lr);
    match eps {
        Some(e) => spec.with_eps(e),
        None => spec,
    }
}

fn diverged(trace: &LossTrace) -> Result<(), Failure> {
    match &trace.diverged {
        Some((step, why)) => Err(numeric_err(format!("diverged at step {step}: {why}"))),
        None => Ok(()),
    }
}

fn quad(a: QuadArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::quad(a.n, a.steps, optimizer(a.opt, a.precision, a.lr, a.eps), a.seed);
    spec.optimizer = spec.optimizer.with_interval(a.precond_interval);
    let trace = run_experiment(&spec)?;
    write_trace(&trace, &a.out)?;
    println!("final_loss={:e} initial_loss={:e}", trace.final_loss(), trace.initial_loss);
    diverged(&trace)
}

fn file_name(grid: &OptimizerGrid, lr: f64, eps: f64) -> String {
    let eps = if eps.is_nan() { "none".to_string() } else { format!("{eps:e}") };
    format!("{}_{}_lr{lr:e}_eps{eps}.csv", grid.kind, grid.precision)
}

fn sweep(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let problem = match cfg.problem.kind.as_str() {
        "quad" => ProblemSpec::Quad { n: cfg.problem.n },
        "stochastic_lsq" => ProblemSpec::StochasticLsq {
            n: cfg.problem.n,
            batch: cfg.problem.batch,
            noise: cfg.problem.noise,
        },
        other => return Err(config_err(format!("unknown problem type `{other}`"))),
    };
    if cfg.optimizers.is_empty() {
        return Err(config_err("no optimizers listed"));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| config_err(format!("{}: {e}", cfg.out_dir.display())))?;

    let mut summary = String::from("kind,precision,lr,eps,final_loss,diverged_at,selected\n");
    let mut failed = Vec::new();
    for grid in &cfg.optimizers {
        let interval = if matches!(problem, ProblemSpec::Quad { .. }) { 3 } else { 1 };
        let template = ExperimentSpec {
            problem,
            optimizer: OptimizerSpec::new(grid.kind, grid.precision).with_interval(interval),
            steps: cfg.problem.steps,
            seed: cfg.seed,
            eval_every: 1,
        };
        let res = lr_sweep(&template, &grid.lrs, &grid.epss)?;
        for (i, cell) in res.cells.iter().enumerate() {
            write_trace(&cell.trace, &cfg.out_dir.join(file_name(grid, cell.lr, cell.eps)))?;
            let at = cell.trace.diverged.as_ref().map_or(String::new(), |d| d.0.to_string());
            let selected = i == res.best && !res.all_diverged;
            summary += &format!(
                "{},{},{:e},{:e},{:.16e},{at},{selected}\n",
                grid.kind,
                grid.precision,
                cell.lr,
                cell.eps,
                cell.trace.final_loss()
            );
        }
        let best = res.best_cell();
        if res.all_diverged {
            let list: Vec<String> = res
                .cells
                .iter()
                .map(|c| format!("lr {:e} eps {:e} at step {}", c.lr, c.eps, c.trace.diverged.as_ref().map_or(0, |d| d.0)))
                .collect();
            failed.push(format!("{} {}: every cell diverged ({})", grid.kind, grid.precision, list.join("; ")));
        } else {
            println!(
                "{} {}: lr={:e} eps={:e} final_loss={:e}",
                grid.kind,
                grid.precision,
                best.lr,
                best.eps,
                best.trace.final_loss()
            );
        }
    }
    let summary_path = cfg.out_dir.join("summary.csv");
    fs::write(&summary_path, summary).map_err(|e| Failure::from(Error::Io { path: summary_path, source: e }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(numeric_err(failed.join("\n")))
    }
}

fn roots(a: RootsArgs) -> Result<(), Failure> {
    if a.p == 0 {
        return Err(config_err("p must be at least 1"));
    }
    let a64 = spd_with_condition(a.n, a.cond, a.seed).map_err(|e| config_err(e.to_string()))?;
    let method = match a.method {
        Method::Newton => RootMethod::CoupledNewton,
        Method::Eig => RootMethod::Eig,
    };
    let cfg = RootConfig::for_precision(a.precision).with_method(method);
    let out = matrix_power(&a64.with_precision(a.precision), a.p, a.inverse, &cfg, None)?;
    let x = out.matrix.with_precision(Precision::F64);
    let xp = int_power(&x, a.p)?;
    let residual = if a.inverse {
        let eye = DenseMatrix::identity(a.n, Precision::F64);
        xp.matmul(&a64)?.sub(&eye)?.frob_norm() / (a.n as f64).sqrt()
    } else {
        xp.sub(&a64)?.frob_norm() / a64.frob_norm()
    };
    println!("residual={residual:e}");
    println!("iterations={}", out.iters);
    println!("wall_ms={:.3}", out.wall_ms);
    Ok(())
}

fn regret(a: RegretArgs) -> Result<(), Failure> {
    let spec = ExperimentSpec {
        problem: ProblemSpec::StochasticLsq { n: a.n, batch: a.batch, noise: a.noise },
        optimizer: optimizer(a.opt, a.precision, a.lr, a.eps).with_interval(a.precond_interval),
        steps: a.steps,
        seed: a.seed,
        eval_every: 1,
    };
    let trace = run_experiment(&spec)?;
    match &a.out {
        Some(p) => write_regret(&trace, p)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_regret_to(&trace, &mut lock).map_err(|e| config_err(e.to_string()))?;
            lock.flush().map_err(|e| config_err(e.to_string()))?;
        }
    }
    diverged(&trace)
}
