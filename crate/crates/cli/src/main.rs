use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use dynsched::analysis::{self, AnalysisParams};
use dynsched::engine::write_trace_csv;
use dynsched::experiments::{self, BetaSpec, ExperimentSpec};
use dynsched::platform::{make_discrete_platform, make_uniform_platform};
use dynsched::{run_simulation, DriftPolicy, KernelKind, Platform, Problem, RandomStream, SimConfig, StrategyId};

#[derive(Parser)]
#[command(name = "dynsched", version, about = "Simulate and analyze data-aware dynamic schedulers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its communication volume.
    Simulate(SimulateArgs),
    /// Evaluate the analytic model at a given beta.
    Analyze(AnalyzeArgs),
    /// Find the switch parameter minimizing predicted communication.
    OptimizeBeta(ModelArgs),
    /// Run a replicated parameter sweep and write CSV (and SVG) output.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    kernel: KernelKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Worker speeds, one per line; homogeneous when omitted.
    #[arg(long)]
    speeds_file: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    beta: f64,
}

#[derive(Args)]
#[group(id = "speeds", multiple = false)]
struct SpeedArgs {
    /// Worker speeds, one per line.
    #[arg(long, group = "speeds")]
    speeds_file: Option<PathBuf>,
    /// Draw speeds uniformly from [lo, hi] (default 10,100).
    #[arg(long, value_delimiter = ',', value_name = "LO,HI", group = "speeds")]
    uniform: Option<Vec<f64>>,
    /// Draw speeds uniformly from a set of values.
    #[arg(long, value_delimiter = ',', value_name = "S1,S2,...", group = "speeds")]
    set: Option<Vec<f64>>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    kernel: KernelKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    strategy: StrategyId,
    /// Switch parameter of the two-phase strategies, or `auto`.
    #[arg(long)]
    beta: Option<String>,
    #[command(flatten)]
    speeds: SpeedArgs,
    /// Per-task relative speed change, in [0, 1).
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Write the knowledge-growth trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// One of the named figure sweeps.
    #[arg(long, group = "source")]
    recipe: Option<String>,
    /// An experiment spec file.
    #[arg(long, group = "source")]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: PathBuf,
    /// Concurrent simulations (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write an SVG plot.
    #[arg(long)]
    plot: bool,
    /// Plot x axis column (default depends on the sweep).
    #[arg(long)]
    x_axis: Option<String>,
    /// Plot series column.
    #[arg(long, default_value = "strategy")]
    series: String,
}

/// Usage errors exit with 1, runtime faults with 2.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
        Command::OptimizeBeta(args) => optimize(args),
        Command::Experiment(args) => experiment(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_speeds(path: &Path, p: usize) -> anyhow::Result<Platform> {
    let platform = Platform::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    if platform.len() != p {
        bail!("{} lists {} speeds but --p is {p}", path.display(), platform.len());
    }
    Ok(platform)
}

fn model_params(args: &ModelArgs) -> anyhow::Result<AnalysisParams> {
    let params = match &args.speeds_file {
        Some(path) => AnalysisParams::from_platform(&load_speeds(path, args.p)?, args.n, args.kernel)?,
        None => AnalysisParams::homogeneous(args.p, args.n, args.kernel)?,
    };
    Ok(params)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let problem = Problem::new(args.kernel, args.n).map_err(usage)?;
    if args.strategy.kernel() != args.kernel {
        return Err(usage(anyhow!("strategy {} does not apply to the {} kernel", args.strategy, args.kernel)));
    }
    let mut rng = RandomStream::new(args.seed).split("platform");
    let platform = match (&args.speeds.speeds_file, &args.speeds.uniform, &args.speeds.set) {
        (Some(path), _, _) => load_speeds(path, args.p).map_err(usage)?,
        (_, _, Some(set)) => make_discrete_platform(args.p, set, &mut rng).map_err(usage)?,
        (_, uniform, _) => {
            let (lo, hi) = match uniform.as_deref() {
                None => (10.0, 100.0),
                Some(&[lo, hi]) => (lo, hi),
                Some(_) => return Err(usage(anyhow!("--uniform takes exactly two values, lo,hi"))),
            };
            make_uniform_platform(args.p, lo, hi, &mut rng).map_err(usage)?
        }
    };
    let platform = match args.jitter {
        Some(j) => platform.with_drift(DriftPolicy::jitter(j).map_err(usage)?),
        None => platform,
    };
    let mut config = SimConfig::new(problem, platform, args.strategy, args.seed);
    match args.beta.as_deref() {
        None | Some("auto") => {}
        Some(text) => {
            let beta =
                text.parse::<f64>().map_err(|_| usage(anyhow!("--beta must be a number or `auto`, got {text:?}")))?;
            config = config.with_beta(beta);
        }
    }
    if args.trace.is_some() {
        config = config.with_trace();
    }
    config.resolve().map_err(usage)?;

    let result = run_simulation(&config).map_err(runtime)?;
    let beta = result.beta.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "kernel={} n={} p={} strategy={} beta={beta} seed={} comm_blocks={} lower_bound={:.6} normalized_comm={:.6} makespan={:.6}",
        args.kernel,
        args.n,
        args.p,
        args.strategy,
        args.seed,
        result.total_comm_blocks,
        result.lower_bound,
        result.normalized_comm,
        result.makespan
    );
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(runtime)?;
        write_trace_csv(&result, BufWriter::new(file)).map_err(runtime)?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let params = model_params(&args.model).map_err(usage)?;
    let (v1, v2) = analysis::exact_volumes(args.beta, &params).map_err(usage)?;
    let objective = analysis::objective(args.beta, &params).map_err(usage)?;
    println!("beta={}", args.beta);
    println!("lower_bound={:.6}", params.lower_bound());
    println!("phase1_volume={v1:.6}");
    println!("phase2_volume={v2:.6}");
    println!("objective={objective:.6}");
    println!("first_order_objective={:.6}", analysis::first_order_objective(args.beta, &params));
    Ok(())
}

fn optimize(args: ModelArgs) -> Result<(), Failure> {
    let params = model_params(&args).map_err(usage)?;
    let best = analysis::optimize_beta(&params);
    println!("beta={:.4} objective={:.6} phase1_fraction={:.4}", best.beta, best.objective_value, best.phase1_fraction);
    Ok(())
}

/// The column that varies in a sweep, for the x axis of its plot.
fn default_x_axis(spec: &ExperimentSpec) -> &'static str {
    if matches!(spec.beta, BetaSpec::Sweep { .. }) {
        "beta"
    } else if spec.scenarios.len() > 1 {
        "scenario"
    } else if spec.ns.len() > 1 && spec.ps.len() == 1 {
        "n"
    } else {
        "p"
    }
}

fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let (name, spec, x_axis) = match (&args.source.recipe, &args.source.spec) {
        (Some(name), _) => {
            let (spec, x, _) = experiments::recipe(name).map_err(usage)?;
            (name.clone(), spec, x)
        }
        (_, Some(path)) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
            let spec = experiments::parse_spec(&text).map_err(usage)?;
            let x = default_x_axis(&spec);
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment").to_string();
            (stem, spec, x)
        }
        _ => unreachable!("clap requires one source"),
    };
    let x_axis = args.x_axis.clone().unwrap_or_else(|| x_axis.to_string());
    if args.plot {
        for column in [&x_axis, &args.series] {
            if !experiments::PLOT_COLUMNS.contains(&column.as_str()) {
                return Err(usage(anyhow!(
                    "unknown plot column {column:?}; expected one of {}",
                    experiments::PLOT_COLUMNS.join(", ")
                )));
            }
        }
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(usage(anyhow!("--jobs must be at least 1")));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(runtime)?;
    info!("running {name} on {} threads", pool.current_num_threads());
    let rows = pool.install(|| experiments::run_sweep(&spec)).map_err(runtime)?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())).map_err(runtime)?;
    let csv_path = args.out.join(format!("{name}.csv"));
    experiments::emit_csv(&rows, &csv_path).map_err(runtime)?;
    println!("wrote {}", csv_path.display());
    if args.plot {
        let svg_path = args.out.join(format!("{name}.svg"));
        experiments::emit_svg_plot(&rows, &x_axis, &args.series, &svg_path).map_err(runtime)?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}
