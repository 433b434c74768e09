use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use permlab_core::char_exponent::CharExponent;
use permlab_core::diffusion::{PQPotential, PQSpec, ScalePotential, ScaleSpec};
use permlab_core::excessive::{make_flat_pair, Excessive, ExcessiveSpec};
use permlab_core::kernel::{a_bound, grid_condition, rowsum_check, AugmentedKernel, GridSpec};
use permlab_core::levy::LevyPotential;
use permlab_core::potential::{PotentialSpec, SymmetricPotential};
use permlab_core::rebirth::{ek_identity_check, local_time_means, simulate_local_times, RebirthModel, SimOptions, TestFunction};
use permlab_core::sampling::{run_lil, LilConfig};
use permlab_core::{PsiSpec, QuadratureConfig};

#[derive(Parser)]
#[command(name = "permlab", version, about = "Permanental-process numerics: potentials, kernels, LIL statistics, rebirth")]
struct Cli {
    /// Worker threads for parallel sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplies every default quadrature tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate Lévy or diffusion potentials.
    Potential {
        #[command(subcommand)]
        action: PotentialCmd,
    },
    /// Analyze augmented kernels on LIL grids.
    Kernel {
        #[command(subcommand)]
        action: KernelCmd,
    },
    /// Monte Carlo LIL ratio harness.
    Lil {
        #[command(subcommand)]
        action: LilCmd,
    },
    /// Finite chains with rebirth.
    Rebirth {
        #[command(subcommand)]
        action: RebirthCmd,
    },
    /// Run an invariant battery.
    Verify {
        #[arg(long, default_value = "core")]
        suite: String,
        #[arg(long, value_enum, default_value_t = Emit::Text)]
        emit: Emit,
    },
}

#[derive(Subcommand)]
enum PotentialCmd {
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Pq,
    Vpq,
    Scale,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// `u^β(x − y)`, or the family kernel.
    U,
    Sigma2,
    Phi,
    /// Kernel killed at the first hit of 0.
    U0,
    /// Exponential killing and killing at 0.
    V,
}

#[derive(Args)]
struct EvalArgs {
    /// Characteristic exponent JSON (file or inline).
    #[arg(long, conflicts_with = "family")]
    psi: Option<String>,
    #[arg(long, requires = "spec")]
    family: Option<Family>,
    /// Family spec JSON (file or inline).
    #[arg(long)]
    spec: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Kind::U)]
    kind: Kind,
    /// Comma-separated evaluation points.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    x: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    y: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KernelCmd {
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Text,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Base potential JSON (file or inline).
    #[arg(long)]
    base: String,
    /// Excessive function JSON for the first row; omit both f and g for a flat pair at d.
    #[arg(long, requires = "g")]
    f: Option<String>,
    #[arg(long, requires = "f")]
    g: Option<String>,
    /// `d,θ,n,q`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, value_enum, default_value_t = Emit::Json)]
    emit: Emit,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LilCmd {
    Run {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RebirthCmd {
    Sim {
        #[arg(long)]
        model: String,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        /// Start state: an index, or `*` for the rebirth point.
        #[arg(long, default_value = "0")]
        start: String,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    CheckEk {
        #[arg(long)]
        model: String,
        /// Reference state.
        #[arg(long)]
        y: usize,
        /// Test function JSON (file or inline); default `{"kind":"one"}`.
        #[arg(long = "fn")]
        func: Option<String>,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Usage and configuration problems exit with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn read_json_arg(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(arg).with_context(|| format!("reading {}", arg))
}

fn parse<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T> {
    let text = read_json_arg(arg)?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid {} ({}): {}", what, arg, e)).into())
}

fn core_err(e: permlab_core::Error) -> anyhow::Error {
    match e {
        permlab_core::Error::Config { .. } | permlab_core::Error::Parse { .. } => UsageError(e.to_string()).into(),
        e => e.into(),
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("csv: {}", e))?)
}

fn json_bytes<R: Serialize>(value: &R) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Serialize)]
struct EvalRow {
    x: f64,
    y: f64,
    kind: &'static str,
    value: f64,
}

fn potential_eval(a: &EvalArgs, tol_scale: f64) -> Result<()> {
    let kind_name = match a.kind {
        Kind::U => "u",
        Kind::Sigma2 => "sigma2",
        Kind::Phi => "phi",
        Kind::U0 => "u0",
        Kind::V => "v",
    };
    let eval: Box<dyn Fn(f64) -> permlab_core::Result<f64>> = match (&a.psi, a.family) {
        (Some(psi), None) => {
            let spec: PsiSpec = parse(psi, "characteristic exponent")?;
            let cfg = QuadratureConfig::default().scaled(tol_scale);
            let p = LevyPotential::with_config(CharExponent::from_spec(&spec).map_err(core_err)?, a.beta, cfg).map_err(core_err)?;
            let y = a.y;
            match a.kind {
                Kind::U => Box::new(move |x| p.eval_u_beta(x - y)),
                Kind::Sigma2 => Box::new(move |x| p.eval_sigma2(x - y)),
                Kind::Phi => Box::new(move |x| p.eval_phi(x - y)),
                Kind::U0 => Box::new(move |x| p.eval_u0_kernel(x, y)),
                Kind::V => Box::new(move |x| p.eval_v_beta(x, y)),
            }
        }
        (None, Some(family)) => {
            let spec = a.spec.as_deref().unwrap();
            let base = match family {
                Family::Pq | Family::Vpq => {
                    let s: PQSpec = parse(spec, "pq spec")?;
                    let p = PQPotential::from_spec(&s).map_err(core_err)?;
                    if family == Family::Pq {
                        SymmetricPotential::PQ(p)
                    } else {
                        SymmetricPotential::PQKilled(p)
                    }
                }
                Family::Scale => {
                    let s: ScaleSpec = parse(spec, "scale spec")?;
                    SymmetricPotential::Scale(ScalePotential::from_spec(&s).map_err(core_err)?)
                }
            };
            let y = a.y;
            match a.kind {
                Kind::U => Box::new(move |x| base.eval(x, y)),
                Kind::Sigma2 => Box::new(move |x| base.sigma2(x, y)),
                _ => bail!(UsageError("--kind for a diffusion family must be u or sigma2".into())),
            }
        }
        _ => bail!(UsageError("give exactly one of --psi and --family".into())),
    };
    let rows = a
        .x
        .iter()
        .map(|&x| Ok(EvalRow { x, y: a.y, kind: kind_name, value: eval(x).map_err(core_err)? }))
        .collect::<Result<Vec<_>>>()?;
    write_output(a.out.as_deref(), &csv_bytes(&rows)?)
}

#[derive(Serialize)]
struct KernelReport {
    nu: f64,
    rho: f64,
    rowsums: permlab_core::kernel::RowsumReport,
    mmatrix_ok: bool,
    det_ratio: f64,
    m: usize,
    condition: f64,
    method: permlab_core::kernel::InverseMethod,
    mmatrix: permlab_core::kernel::MMatrixReport,
    a_bound: permlab_core::kernel::ABound,
    grid_condition: f64,
    degenerate: bool,
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        bail!(UsageError(format!("--grid expects d,θ,n,q; got {:?}", s)));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        parts[i].parse::<f64>().map_err(|_| UsageError(format!("--grid: {} = {:?} is not a number", name, parts[i])).into())
    };
    let n = parts[2].parse::<usize>().map_err(|_| UsageError(format!("--grid: n = {:?} is not a positive integer", parts[2])))?;
    Ok(GridSpec::new(num(0, "d")?, num(1, "θ")?, n, num(3, "q")?))
}

fn kernel_analyze(a: &AnalyzeArgs, tol_scale: f64) -> Result<()> {
    let spec: PotentialSpec = parse(&a.base, "base potential")?;
    let u = SymmetricPotential::<f64>::from_spec(&spec, tol_scale).map_err(core_err)?;
    let grid = parse_grid(&a.grid)?;
    let (f, g) = match (&a.f, &a.g) {
        (Some(f), Some(g)) => {
            let fs: ExcessiveSpec = parse(f, "excessive function f")?;
            let gs: ExcessiveSpec = parse(g, "excessive function g")?;
            (Excessive::from_spec(&fs, u.clone()).map_err(core_err)?, Excessive::from_spec(&gs, u.clone()).map_err(core_err)?)
        }
        _ => make_flat_pair(grid.d, &u).map_err(core_err)?,
    };
    let pts = grid.build_grid::<f64>().map_err(core_err)?;
    let k = AugmentedKernel::assemble(&u, &f, &g, &pts).map_err(core_err)?;
    let d = k.decompose().map_err(core_err)?;
    let mm = d.mmatrix_report(&k);
    let report = KernelReport {
        nu: d.nu,
        rho: d.rho,
        rowsums: rowsum_check(&k, &d),
        mmatrix_ok: mm.ok,
        det_ratio: k.det_ratio().map_err(core_err)?,
        m: grid.m(),
        condition: k.condition,
        method: k.method,
        mmatrix: mm,
        a_bound: a_bound(&k, &d),
        grid_condition: grid_condition(&u, &pts).map_err(core_err)?,
        degenerate: k.degenerate,
    };
    let bytes = match a.emit {
        Emit::Json => json_bytes(&report)?,
        Emit::Text => format!(
            "m = {}\nnu = {:.12e}\nrho = {:.12e}\ndet_ratio = {:.12e}\nmmatrix_ok = {}\ncondition = {:.3e}\n",
            report.m, report.nu, report.rho, report.det_ratio, report.mmatrix_ok, report.condition
        )
        .into_bytes(),
    };
    write_output(a.out.as_deref(), &bytes)
}

fn lil_run(config: &str, out: Option<&Path>, tol_scale: f64) -> Result<()> {
    let cfg: LilConfig = parse(config, "LIL config")?;
    let report = run_lil(&cfg, tol_scale).map_err(core_err)?;
    if report.degenerate() {
        eprintln!("warning: degenerate kernel (some ψ_d(t_j) vanish); statistics use the remaining points");
    }
    write_output(out, &csv_bytes(&report.rows())?)
}

#[derive(Serialize)]
struct LocalTimeRow {
    start: String,
    y: String,
    mean: f64,
    std_err: f64,
    potential: f64,
    z: f64,
}

fn rebirth_sim(model: &str, paths: usize, seed: u64, start: &str, horizon: Option<f64>, out: Option<&Path>) -> Result<()> {
    let text = read_json_arg(model)?;
    let m = RebirthModel::<f64>::from_json(&text).map_err(core_err)?;
    let jc = m.jump_chain().map_err(core_err)?;
    let offset = usize::from(m.mu.is_some());
    let label = |i: usize| if offset == 1 && i == 0 { "*".to_string() } else { (i - offset).to_string() };
    let start_idx = if start == "*" {
        if offset == 0 {
            bail!(UsageError("start state * needs a rebirth measure mu".into()));
        }
        0
    } else {
        start.parse::<usize>().map_err(|_| UsageError(format!("--start {:?} is not a state", start)))? + offset
    };
    let fields = simulate_local_times(&jc, start_idx, paths, seed, SimOptions { horizon, ..Default::default() }).map_err(core_err)?;
    let occ = fields.iter().map(|f| f.occupation_residual(&jc.m)).fold(0.0, f64::max);
    if occ > 1e-12 {
        bail!("occupation identity violated: relative residual {:e}", occ);
    }
    let pot = m.simulated_potential().map_err(core_err)?;
    let rows: Vec<LocalTimeRow> = local_time_means(&fields)
        .iter()
        .enumerate()
        .map(|(y, est)| {
            let potential = if horizon.is_some() { f64::NAN } else { pot[(start_idx, y)] };
            LocalTimeRow { start: label(start_idx), y: label(y), mean: est.mean, std_err: est.std_err, potential, z: est.z(potential) }
        })
        .collect();
    write_output(out, &csv_bytes(&rows)?)
}

fn rebirth_check_ek(model: &str, y: usize, func: Option<&str>, paths: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let text = read_json_arg(model)?;
    let m = RebirthModel::<f64>::from_json(&text).map_err(core_err)?;
    let f: TestFunction = match func {
        Some(s) => parse(s, "test function")?,
        None => TestFunction::One,
    };
    let report = ek_identity_check(&m.chain, y, &f, paths, seed).map_err(core_err)?;
    write_output(out, &json_bytes(&report)?)
}

fn verify(suite: &str, emit: Emit) -> Result<bool> {
    if suite != "core" {
        bail!(UsageError(format!("unknown suite {:?}; available: core", suite)));
    }
    let report = permlab_core::verify::run_core();
    match emit {
        Emit::Json => std::io::stdout().write_all(&json_bytes(&report)?)?,
        Emit::Text => {
            for c in &report.checks {
                println!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.module, c.name, c.detail);
            }
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {} failed", report.checks.len(), failed);
        }
    }
    Ok(report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    if !(cli.tol_scale > 0.0) {
        bail!(UsageError("--tol-scale must be > 0".into()));
    }
    let ts = cli.tol_scale;
    match cli.command {
        Command::Potential { action: PotentialCmd::Eval(a) } => potential_eval(&a, ts)?,
        Command::Kernel { action: KernelCmd::Analyze(a) } => kernel_analyze(&a, ts)?,
        Command::Lil { action: LilCmd::Run { config, out } } => lil_run(&config, out.as_deref(), ts)?,
        Command::Rebirth { action: RebirthCmd::Sim { model, paths, seed, start, horizon, out } } => {
            rebirth_sim(&model, paths, seed, &start, horizon, out.as_deref())?
        }
        Command::Rebirth { action: RebirthCmd::CheckEk { model, y, func, paths, seed, out } } => {
            rebirth_check_ek(&model, y, func.as_deref(), paths, seed, out.as_deref())?
        }
        Command::Verify { suite, emit } => return verify(&suite, emit),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {:#}", e);
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
