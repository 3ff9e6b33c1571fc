//! Command-line front end: tree generation, distance computation, the
//! exact-vs-entropic benchmark and regularized plan export.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on usage errors.
//! `RAYON_NUM_THREADS` bounds the worker pool used for large stages.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nested_distance::bench::{run_bench, write_pairs_csv, write_rows_csv, BenchConfig};
use nested_distance::ot::entropic::DEFAULT_GAMMA_DIVISOR;
use nested_distance::plan::{
    read_point_cloud, threshold_edges, write_edges_csv, write_plan_csv, PlanInstance,
};
use nested_distance::{
    generate, nested_distance_with, parse_tree, serialize_tree, Error, GenSpec, RegOtConfig,
    ScenarioTree, SinkhornConfig, Solver,
};

#[derive(Parser)]
#[command(
    name = "nested-distance",
    version,
    about = "Nested distance between scenario trees"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario tree as canonical JSON.
    Gen(GenArgs),
    /// Nested distance (or its entropic regularization) between two trees.
    Nd(NdArgs),
    /// Compare exact and entropic nested distances on random tree pairs.
    Bench(BenchArgs),
    /// Export a regularized transport plan and its thresholded edges.
    Plan(PlanArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    max_children: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    value_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SinkhornArgs {
    #[arg(long, default_value_t = DEFAULT_GAMMA_DIVISOR)]
    gamma_divisor: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = RegOtConfig::default().max_iter)]
    max_iter: usize,
    /// Scaling domain; `nd` defaults to log, `bench` to plain.
    #[arg(long, value_enum)]
    domain: Option<Domain>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Domain {
    /// Log-sum-exp updates of `ln u`, `ln v`; robust for small `gamma`.
    Log,
    /// Multiplicative updates of `u`, `v`; faster, safe with the default
    /// `gamma` rule since kernel entries stay above `exp(-divisor)`.
    Plain,
}

impl SinkhornArgs {
    fn config(&self, default: Domain) -> RegOtConfig {
        RegOtConfig {
            gamma_divisor: self.gamma_divisor,
            tol: self.tol,
            max_iter: self.max_iter,
            log_domain: self.domain.unwrap_or(default) == Domain::Log,
        }
    }
}

#[derive(Args)]
struct NdArgs {
    x: PathBuf,
    y: PathBuf,
    #[arg(short, long, default_value_t = 2.0)]
    r: f64,
    #[arg(long)]
    entropic: bool,
    #[command(flatten)]
    sinkhorn: SinkhornArgs,
    /// Write stage cost tables and timing as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    depths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 3)]
    max_children: usize,
    #[arg(short, long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    value_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[command(flatten)]
    sinkhorn: SinkhornArgs,
    /// Each timing repeats its computation until this many ms have elapsed.
    #[arg(long, default_value_t = 5.0)]
    min_time_ms: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Per-pair raw rows; defaults to `<output stem>.pairs.csv`.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "input", required = true, multiple = false)]
struct PlanInput {
    /// Two scenario-tree JSON files; the plan couples their path laws.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    trees: Option<Vec<PathBuf>>,
    /// Two point-cloud CSVs; the plan couples their uniform empirical laws.
    #[arg(long, num_args = 2, value_names = ["SOURCE", "TARGET"])]
    clouds: Option<Vec<PathBuf>>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    input: PlanInput,
    #[arg(long)]
    gamma: f64,
    #[arg(short, long, default_value_t = 2.0)]
    r: f64,
    #[arg(long = "threshold", default_values_t = [0.3, 0.2])]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    edges: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_tree(path: &Path) -> Result<ScenarioTree, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_tree(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

/// `v` with 12 significant digits.
fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (11 - v.abs().log10().floor() as i64).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cmd_gen(args: GenArgs) -> Result<(), String> {
    let spec = GenSpec {
        depth: args.depth,
        max_children: args.max_children,
        value_dim: args.value_dim,
        seed: args.seed,
        increment_scale: args.scale,
    };
    let tree = generate(&spec).map_err(|e| e.to_string())?;
    std::fs::write(&args.output, serialize_tree(&tree))
        .map_err(io_err(&args.output))
        .map_err(|e| e.to_string())?;
    println!("nodes={} leaves={}", tree.nodes().len(), tree.leaf_count());
    Ok(())
}

fn cmd_nd(args: NdArgs) -> Result<(), String> {
    let x = read_tree(&args.x)?;
    let y = read_tree(&args.y)?;
    let solver = if args.entropic {
        Solver::Entropic(args.sinkhorn.config(Domain::Log))
    } else {
        Solver::Exact
    };
    let res = nested_distance_with(&x, &y, args.r, &solver).map_err(|e| e.to_string())?;
    println!("{}", sig12(res.value));
    if let Some(path) = args.report {
        let stages: Vec<_> = (0..x.depth())
            .map(|k| {
                let table = &res.stage_costs.costs[k];
                json!({
                    "stage": k + 1,
                    "x_nodes": res.stage_costs.x_nodes[k],
                    "y_nodes": res.stage_costs.y_nodes[k],
                    "costs": table.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let report = json!({
            "value": res.value,
            "r": args.r,
            "entropic": args.entropic,
            "subproblem_count": res.subproblem_count,
            "wall_time_ms": res.wall_time.as_secs_f64() * 1e3,
            "stages": stages,
        });
        let text = serde_json::to_string_pretty(&report).expect("report is serializable");
        std::fs::write(&path, text + "\n")
            .map_err(io_err(&path))
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    let cfg = BenchConfig {
        depths: args.depths,
        runs: args.runs,
        max_children: args.max_children,
        r: args.r,
        seed: args.seed,
        value_dim: args.value_dim,
        increment_scale: args.scale,
        entropic: args.sinkhorn.config(Domain::Plain),
        min_time_ms: args.min_time_ms,
    };
    let report = run_bench(&cfg).map_err(|e| e.to_string())?;
    for failed in report.failures() {
        eprintln!(
            "warning: depth {} run {} excluded: {}",
            failed.depth, failed.run, failed.status
        );
    }
    write_rows_csv(&args.output, &report.rows).map_err(|e| e.to_string())?;
    let pairs = args
        .pairs
        .unwrap_or_else(|| args.output.with_extension("pairs.csv"));
    write_pairs_csv(&pairs, &report.pairs).map_err(|e| e.to_string())?;
    for row in &report.rows {
        println!(
            "T={:<3} nd={:>10.4} ms  end={:>10.4} ms  speedup={:>7.2}  rel.err={:.3}%",
            row.depth,
            row.mean_time_nd_ms,
            row.mean_time_end_ms,
            row.speedup,
            row.relative_error_pct
        );
    }
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<(), String> {
    let inst = if let Some(paths) = &args.input.trees {
        let x = read_tree(&paths[0])?;
        let y = read_tree(&paths[1])?;
        PlanInstance::from_trees(&x, &y, args.r)
    } else {
        let paths = args.input.clouds.as_ref().expect("clap enforces one input");
        let a = read_point_cloud(&paths[0]).map_err(|e| e.to_string())?;
        let b = read_point_cloud(&paths[1]).map_err(|e| e.to_string())?;
        PlanInstance::from_clouds(&a, &b, args.r)
    }
    .map_err(|e| e.to_string())?;
    let cfg = SinkhornConfig {
        gamma: args.gamma,
        tol: args.tol,
        max_iter: args.max_iter,
        log_domain: true,
    };
    let res = inst.solve(&cfg).map_err(|e| e.to_string())?;
    write_plan_csv(&args.output, &res.plan.entries).map_err(|e| e.to_string())?;
    let edges = threshold_edges(&res.plan.entries, inst.p.weights(), &args.thresholds);
    write_edges_csv(&args.edges, &edges).map_err(|e| e.to_string())?;
    for &t in &args.thresholds {
        let count = edges.iter().filter(|e| e.threshold == t).count();
        println!("threshold={t} edges={count}");
    }
    println!(
        "reg_cost={} iterations={}",
        sig12(res.reg_cost),
        res.iterations
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Nd(a) => cmd_nd(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Plan(a) => cmd_plan(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
