//! `batchmesh`: quality triangulation of `.poly` inputs, plus a benchmark
//! mode that measures the cost of switching each engine rule off.

mod bench;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use batchmesh::cdt::build_cdt;
use batchmesh::exec::{Execution, Executor};
use batchmesh::io::{read_poly, write_metrics, write_node_ele, write_svg, SvgStyle};
use batchmesh::mesh::Mesh;
use batchmesh::predicates::EncroachMode;
use batchmesh::pslg::Pslg;
use batchmesh::refine::{refine, EngineConfig, RefineError};
use batchmesh::rules::RunReport;
use batchmesh::verify::verify_all;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "batchmesh", version, about = "Batch-parallel constrained Delaunay refinement")]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Input `.poly` file.
    #[arg(required = true)]
    input: Option<PathBuf>,
    /// Output prefix for `.node` and `.ele`; defaults to the input path
    /// without its extension.
    #[arg(short, long, env = "BATCHMESH_OUTPUT")]
    output: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write an SVG rendering here.
    #[arg(long, env = "BATCHMESH_SVG")]
    svg: Option<PathBuf>,
    /// Write per-batch metrics (one JSON record per line) here.
    #[arg(long, env = "BATCHMESH_METRICS")]
    metrics: Option<PathBuf>,
    /// Skip the constrained Delaunay and conformity scan on exit.
    #[arg(long, env = "BATCHMESH_SKIP_VERIFY")]
    skip_verify: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every `.poly` file in a directory with all rules and with each
    /// rule switched off, and print a slowdown table.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Ruppert,
    Chew,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExecutionArg {
    Sequential,
    Parallel,
}

#[derive(Args, Debug, Clone)]
struct EngineArgs {
    /// Minimum angle in degrees.
    #[arg(long, default_value_t = 20.0, env = "BATCHMESH_THETA")]
    theta: f64,
    /// Maximum edge length.
    #[arg(long, default_value_t = f64::INFINITY, env = "BATCHMESH_ELL")]
    ell: f64,
    /// Subsegment encroachment test.
    #[arg(long, value_enum, default_value_t = Mode::Ruppert, env = "BATCHMESH_MODE")]
    mode: Mode,
    /// Run phases on one thread or on a worker pool.
    #[arg(long, value_enum, default_value_t = ExecutionArg::Sequential, env = "BATCHMESH_EXECUTION")]
    execution: ExecutionArg,
    /// Worker threads in parallel mode; defaults to the available cores.
    #[arg(long, env = "BATCHMESH_THREADS")]
    threads: Option<usize>,
    /// Triangles per approximate cavity.
    #[arg(long, default_value_t = batchmesh::refine::DEFAULT_CAVITY_N, env = "BATCHMESH_CAVITY_N")]
    cavity_n: usize,
    /// Completed fraction after which a slowing phase may stop early.
    #[arg(long, default_value_t = batchmesh::rules::DEFAULT_GAMMA, env = "BATCHMESH_GAMMA")]
    gamma: f64,
    /// Worklist windows below this size are not compacted.
    #[arg(long, default_value_t = batchmesh::expandlist::DEFAULT_COMPACTION_THRESHOLD, env = "BATCHMESH_COMPACTION_THRESHOLD")]
    compaction_threshold: usize,
    /// Never compact worklists.
    #[arg(long, env = "BATCHMESH_NO_RULE1")]
    no_rule1: bool,
    /// Insert without claim and cavity filtering.
    #[arg(long, env = "BATCHMESH_NO_RULE2")]
    no_rule2: bool,
    /// Grow cavities fully and never stop phases early.
    #[arg(long, env = "BATCHMESH_NO_RULE3")]
    no_rule3: bool,
    /// Collect subsegments and triangles in separate passes.
    #[arg(long, env = "BATCHMESH_NO_RULE4")]
    no_rule4: bool,
    /// Never split lengthy work.
    #[arg(long, env = "BATCHMESH_NO_RULE5")]
    no_rule5: bool,
    /// Batches before giving up.
    #[arg(long, default_value_t = batchmesh::refine::DEFAULT_ITERATION_CAP, env = "BATCHMESH_ITERATION_CAP")]
    iteration_cap: usize,
    /// Visit phase items in an order drawn from this seed (sequential mode).
    #[arg(long, env = "BATCHMESH_SEED")]
    seed: Option<u64>,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        let mode = match self.mode {
            Mode::Ruppert => EncroachMode::Ruppert,
            Mode::Chew => EncroachMode::Chew,
        };
        let mut cfg = EngineConfig::with_criteria(self.theta, self.ell, mode);
        cfg.cavity_n = self.cavity_n;
        cfg.iteration_cap = self.iteration_cap;
        cfg.rules.rule3_gamma = self.gamma;
        cfg.rules.rule1_compaction_threshold = self.compaction_threshold;
        for (k, off) in [self.no_rule1, self.no_rule2, self.no_rule3, self.no_rule4, self.no_rule5].into_iter().enumerate() {
            if off {
                cfg.rules = cfg.rules.clone().without(k as u8 + 1);
            }
        }
        cfg
    }

    fn execution(&self) -> Execution {
        match self.execution {
            ExecutionArg::Sequential => Execution::Sequential,
            ExecutionArg::Parallel => Execution::Parallel,
        }
    }

    fn executor(&self) -> anyhow::Result<Executor> {
        Ok(match (self.execution(), self.seed) {
            (Execution::Parallel, _) => {
                let n = self.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
                Executor::parallel(n).context("building the thread pool")?
            }
            (Execution::Sequential, Some(seed)) => Executor::shuffled(seed),
            (Execution::Sequential, None) => Executor::sequential(),
        })
    }

    fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.theta > 0.0 && self.theta < 60.0, "--theta must lie in (0, 60), got {}", self.theta);
        anyhow::ensure!(self.ell > 0.0, "--ell must be positive, got {}", self.ell);
        anyhow::ensure!((0.0..=1.0).contains(&self.gamma), "--gamma must lie in [0, 1], got {}", self.gamma);
        anyhow::ensure!(self.threads != Some(0), "--threads must be at least 1");
        Ok(())
    }
}

/// How a run ended, mapped to the exit code.
enum Failure {
    Input(anyhow::Error),
    Cap(anyhow::Error),
    Verify(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Cap(_) => 3,
            Failure::Verify(_) | Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Cap(e) | Failure::Verify(e) | Failure::Other(e) => e,
        }
    }
}

/// Reads, validates and triangulates an input file.
fn load(path: &Path) -> anyhow::Result<(Pslg, Mesh)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let pslg = read_poly(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mesh = build_cdt(&pslg).with_context(|| format!("triangulating {}", path.display()))?;
    Ok((pslg, mesh))
}

/// Refines, returning the report even when a cap stopped the run.
fn run_engine(mesh: &mut Mesh, cfg: &EngineConfig, exec: &Executor) -> (RunReport, Option<RefineError>) {
    match refine(mesh, cfg, exec) {
        Ok(r) => (r, None),
        Err(e) => (e.report().clone(), Some(e)),
    }
}

fn summary(report: &RunReport, input_points: usize) -> String {
    use std::fmt::Write as _;
    let q = &report.quality;
    let mut s = String::new();
    let _ = writeln!(s, "points        {} ({} input, {} Steiner)", q.points, input_points, q.steiner_points);
    let _ = writeln!(s, "triangles     {}", q.triangles);
    let _ = writeln!(s, "bad           {}", q.bad_triangles);
    let _ = writeln!(s, "bad area      {:.4}%", q.bad_area_percent);
    let _ = writeln!(s, "min angle     {:.3} deg", q.min_angle_deg);
    let _ = writeln!(s, "wall time     {:.3} s", report.wall_s);
    let _ = writeln!(s, "batches       {}", report.batches.len());
    let _ = writeln!(s, "{:>6} {:>9} {:>9} {:>8} {:>8} {:>10}", "batch", "attempted", "inserted", "removed", "waste", "ms");
    for b in &report.batches {
        let _ = writeln!(
            s,
            "{:>6} {:>9} {:>9} {:>8} {:>7.1}% {:>10.3}",
            b.batch,
            b.attempted,
            b.inserted,
            b.removed,
            100.0 * b.waste_fraction,
            b.latency_s * 1e3
        );
    }
    s
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let input = cli.input.as_deref().expect("clap requires an input");
    cli.engine.validate().map_err(Failure::Input)?;
    let (pslg, mut mesh) = load(input).map_err(Failure::Input)?;
    let cfg = cli.engine.config();
    let exec = cli.engine.executor().map_err(Failure::Other)?;
    let (report, capped) = run_engine(&mut mesh, &cfg, &exec);

    let prefix = cli.output.clone().unwrap_or_else(|| input.with_extension(""));
    let (node, ele) = write_node_ele(&mesh);
    let write = |path: PathBuf, text: &str| fs::write(&path, text).with_context(|| format!("writing {}", path.display()));
    write(prefix.with_extension("node"), &node).map_err(Failure::Other)?;
    write(prefix.with_extension("ele"), &ele).map_err(Failure::Other)?;
    if let Some(p) = &cli.svg {
        write(p.clone(), &write_svg(&mesh, &SvgStyle { criteria: Some(cfg.criteria.clone()), ..SvgStyle::default() }))
            .map_err(Failure::Other)?;
    }
    if let Some(p) = &cli.metrics {
        write(p.clone(), &write_metrics(&report)).map_err(Failure::Other)?;
    }
    print!("{}", summary(&report, pslg.points.len()));

    if let Some(e) = capped {
        return Err(Failure::Cap(e.into()));
    }
    if !cli.skip_verify {
        let t = Instant::now();
        verify_all(&mesh, &pslg).context("output check failed").map_err(Failure::Verify)?;
        log::info!("output verified in {:.3} s", t.elapsed().as_secs_f64());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Some(Command::Bench(args)) => bench::run(args),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
