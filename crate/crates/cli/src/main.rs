//! `lbmpk`: run, scan and inspect level-blocked matrix power kernels.

mod report;
mod source;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lbmpk::cheb::{cheb_coeffs_heat, gershgorin_bounds, ChebPropagator, DEFAULT_TOL};
use lbmpk::exec::{run_baseline, DEFAULT_CACHE_BYTES};
use lbmpk::levels::DEFAULT_SAFETY;
use lbmpk::traffic::{simulate_traffic, CacheModel, Trace, DEFAULT_LINE_BYTES};
use lbmpk::{CrsMatrix, GroupBudget, MpkConfig, MpkEngine, Variant};

use report::{open_output, Format, Table};
use source::{parse_size, GenSpec, Source};

/// Environment variable overriding the worker count.
const WORKERS_ENV: &str = "LBMPK_WORKERS";

#[derive(Parser)]
#[command(name = "lbmpk", version, about = "Level-blocked sparse matrix power kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time MPK variants on one matrix.
    Run(RunArgs),
    /// Time a variant over lists of p_m, C and s_m.
    Scan(ScanArgs),
    /// Dump the level structure (and optionally the schedule) as JSON.
    Inspect(InspectArgs),
    /// Simulate main-memory traffic with an LRU cache model.
    Traffic(TrafficArgs),
    /// Chebyshev time propagation of the heat equation.
    Cheb(ChebArgs),
}

#[derive(Args, Clone)]
struct MatrixArgs {
    /// Matrix Market file.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    matrix: Option<PathBuf>,
    /// Generator: 2d7pt:NXxNY, 3d:N:ORDER or random:N:DEGREE:SEED.
    #[arg(long)]
    gen: Option<GenSpec>,
}

impl MatrixArgs {
    fn source(&self) -> Source {
        match (&self.matrix, &self.gen) {
            (Some(p), _) => Source::File(p.clone()),
            (None, Some(g)) => Source::Gen(g.clone()),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Highest power p_m.
    #[arg(long, default_value_t = 4)]
    pm: usize,
    /// Cache size C, e.g. 35MB or 2MiB.
    #[arg(long, value_parser = parse_size, default_value_t = DEFAULT_CACHE_BYTES)]
    cache: f64,
    /// Cache safety factor f.
    #[arg(long, default_value_t = DEFAULT_SAFETY)]
    f: f64,
    /// Maximum recursion stage s_m.
    #[arg(long, default_value_t = 0)]
    sm: usize,
    /// BFS root vertex.
    #[arg(long, default_value_t = 0)]
    root: usize,
    /// Worker threads; defaults to the available cores.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl KernelArgs {
    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn config(&self, variant: Variant) -> MpkConfig {
        MpkConfig {
            variant,
            p_max: self.pm,
            budget: GroupBudget::CacheFit { cache_bytes: self.cache, safety: self.f },
            s_max: self.sm,
            workers: self.workers(),
            root: self.root,
        }
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct TimingArgs {
    /// Minimum repetitions per measurement.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Minimum total seconds per measurement.
    #[arg(long, default_value_t = 1.0)]
    min_time: f64,
    /// Check bitwise equality with the baseline before reporting.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    /// Variant name or `all`.
    #[arg(long, default_value = "all")]
    variant: String,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    timing: TimingArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[arg(long, default_value = "lb_lg_p2p_rec")]
    variant: Variant,
    /// Comma-separated p_m values.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pm_list: Vec<usize>,
    /// Comma-separated cache sizes.
    #[arg(long, value_delimiter = ',', value_parser = parse_size, default_value = "35MB")]
    cache_list: Vec<f64>,
    /// Comma-separated recursion stages.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    sm_list: Vec<usize>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    timing: TimingArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[arg(long, default_value = "lb_lg_p2p_rec")]
    variant: Variant,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Include the execution schedule.
    #[arg(long)]
    schedule: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrafficArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    /// Variant name or `all`.
    #[arg(long, default_value = "all")]
    variant: String,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Simulated cache capacity; defaults to the grouping cache size.
    #[arg(long, value_parser = parse_size)]
    model_cache: Option<f64>,
    /// Cache line size in bytes.
    #[arg(long, default_value_t = DEFAULT_LINE_BYTES)]
    line: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ChebArgs {
    /// Grid points per dimension of the 3d heat problem.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    /// Stencil order.
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Coefficient cutoff.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value = "lb_lg_p2p")]
    variant: Variant,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

type CliResult<T = ()> = Result<T, String>;

fn variants(spec: &str) -> CliResult<Vec<Variant>> {
    if spec == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    spec.split(',').map(|s| s.trim().parse::<Variant>().map_err(|e| e.to_string())).collect()
}

fn validate(k: &KernelArgs) -> CliResult {
    if k.pm < 1 {
        return Err("--pm must be at least 1".into());
    }
    if !(k.f > 0.0 && k.f <= 1.0) {
        return Err("--f must be in (0, 1]".into());
    }
    if k.workers() < 1 {
        return Err("--workers must be at least 1".into());
    }
    Ok(())
}

fn load(m: &MatrixArgs) -> CliResult<CrsMatrix> {
    m.source().load().map_err(|e| format!("{}: {e}", m.source().name()))
}

fn input_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + ((i * 7919) % 1000) as f64 * 1e-3).collect()
}

const RUN_COLUMNS: [&str; 10] =
    ["matrix", "variant", "p_m", "C", "s_m", "W", "gflops", "seconds", "pre_seconds", "pre_spmvs"];

fn measure(a: &CrsMatrix, name: &str, config: MpkConfig, timing: &TimingArgs, table: &mut Table) -> CliResult<bool> {
    let engine = MpkEngine::new(a, config).map_err(|e| e.to_string())?;
    let x = input_vector(a.n_rows());
    let xp = engine.permutation().apply(&x);
    let mut ok = true;
    if timing.verify {
        let (pv, _) = engine.run_permuted(&xp).map_err(|e| e.to_string())?;
        let base = run_baseline(engine.matrix(), &xp, config.p_max, config.workers).map_err(|e| e.to_string())?;
        if !pv.bits_eq(&base) {
            eprintln!("verification failed: {} differs from baseline", config.variant);
            ok = false;
        }
    }
    let (seconds, _) = engine.bench(&xp, timing.reps, timing.min_time).map_err(|e| e.to_string())?;
    let gflops = engine.flops() / seconds / 1e9;
    let spmv = seconds / config.p_max as f64;
    let cache = match config.budget {
        GroupBudget::CacheFit { cache_bytes, .. } => cache_bytes,
        GroupBudget::MaxRows(_) => f64::NAN,
    };
    table.push(vec![
        json!(name),
        json!(config.variant.name()),
        json!(config.p_max),
        json!(cache),
        json!(config.s_max),
        json!(config.workers),
        json!(gflops),
        json!(seconds),
        json!(engine.preprocess_seconds()),
        json!(engine.preprocess_seconds() / spmv),
    ]);
    Ok(ok)
}

fn cmd_run(args: &RunArgs) -> CliResult<bool> {
    validate(&args.kernel)?;
    let list = variants(&args.variant)?;
    let a = load(&args.matrix)?;
    let name = args.matrix.source().name();
    let mut table = Table::new(&RUN_COLUMNS);
    let mut ok = true;
    for v in list {
        ok &= measure(&a, &name, args.kernel.config(v), &args.timing, &mut table)?;
    }
    write_table(&table, &args.output)?;
    Ok(ok)
}

fn cmd_scan(args: &ScanArgs) -> CliResult<bool> {
    validate(&args.kernel)?;
    if args.pm_list.contains(&0) {
        return Err("p_m values must be at least 1".into());
    }
    let a = load(&args.matrix)?;
    let name = args.matrix.source().name();
    let mut table = Table::new(&RUN_COLUMNS);
    let mut ok = true;
    for &pm in &args.pm_list {
        for &cache in &args.cache_list {
            for &sm in &args.sm_list {
                let mut config = args.kernel.config(args.variant);
                config.p_max = pm;
                config.s_max = sm;
                config.budget = GroupBudget::CacheFit { cache_bytes: cache, safety: args.kernel.f };
                ok &= measure(&a, &name, config, &args.timing, &mut table)?;
            }
        }
    }
    write_table(&table, &args.output)?;
    Ok(ok)
}

fn cmd_inspect(args: &InspectArgs) -> CliResult<bool> {
    validate(&args.kernel)?;
    let a = load(&args.matrix)?;
    let engine = MpkEngine::new(&a, args.kernel.config(args.variant)).map_err(|e| e.to_string())?;
    let mut doc = json!({
        "matrix": args.matrix.source().name(),
        "n_rows": a.n_rows(),
        "nnz": a.nnz(),
        "config": engine.config(),
        "tree": engine.tree(),
        "units": engine.schedule().units.len(),
    });
    if args.schedule {
        doc["schedule"] = serde_json::to_value(engine.schedule()).map_err(|e| e.to_string())?;
    }
    let mut out = open_output(args.out.as_deref()).map_err(|e| e.to_string())?;
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| e.to_string())?;
    writeln!(out).map_err(|e| e.to_string())?;
    Ok(true)
}

fn cmd_traffic(args: &TrafficArgs) -> CliResult<bool> {
    validate(&args.kernel)?;
    let list = variants(&args.variant)?;
    let a = load(&args.matrix)?;
    let capacity = args.model_cache.unwrap_or(args.kernel.cache) as usize;
    let mut table = Table::new(&lbmpk::traffic::CSV_HEADER.split(',').collect::<Vec<_>>());
    for v in list {
        let engine = MpkEngine::new(&a, args.kernel.config(v).with_workers(1)).map_err(|e| e.to_string())?;
        let mut cache = CacheModel::new(capacity, args.line).map_err(|e| e.to_string())?;
        let trace = if v == Variant::Baseline { Trace::Baseline } else { Trace::Schedule(engine.schedule()) };
        let r = simulate_traffic(engine.matrix(), trace, args.kernel.pm, &mut cache).map_err(|e| e.to_string())?;
        table.push(vec![
            json!(v.name()),
            json!(r.p_max),
            json!(r.cache_bytes),
            json!(r.matrix_bytes),
            json!(r.vector_bytes),
            json!(r.code_balance),
        ]);
    }
    write_table(&table, &args.output)?;
    Ok(true)
}

fn cmd_cheb(args: &ChebArgs) -> CliResult<bool> {
    validate(&args.kernel)?;
    if args.steps == 0 {
        return Err("--steps must be at least 1".into());
    }
    let a = GenSpec::Stencil3d { n: args.grid, order: args.order }.build().map_err(|e| e.to_string())?;
    let coeffs = cheb_coeffs_heat(args.dt, gershgorin_bounds(&a), args.tol).map_err(|e| e.to_string())?;
    let prop = ChebPropagator::new(&a, coeffs, args.kernel.config(args.variant)).map_err(|e| e.to_string())?;
    let run = prop.propagate(&input_vector(a.n_rows()), args.steps).map_err(|e| e.to_string())?;
    let terms = prop.coeffs().m() + 1;
    let mut table = Table::new(&["step", "t", "terms", "norm", "seconds", "gflops"]);
    for s in &run.steps {
        let t = (s.step + 1) as f64 * args.dt;
        table.push(vec![json!(s.step), json!(t), json!(terms), json!(s.norm), json!(s.seconds), json!(s.gflops)]);
    }
    write_table(&table, &args.output)?;
    Ok(true)
}

fn write_table(table: &Table, out: &OutputArgs) -> CliResult {
    let mut w = open_output(out.out.as_deref()).map_err(|e| e.to_string())?;
    table.write(out.format, &mut w).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Traffic(a) => cmd_traffic(a),
        Command::Cheb(a) => cmd_cheb(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
