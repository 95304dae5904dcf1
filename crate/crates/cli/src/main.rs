use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coreset_forge::bench::{generate_points, rows_to_csv, run_scaling, BenchPlan, Generator};
use coreset_forge::config::{RunConfig, DEFAULT_MAX_REJECTION_ROUNDS, DEFAULT_THRESHOLD_CONSTANT};
use coreset_forge::coreset::build_coreset;
use coreset_forge::discrepancy::{
    build_query_space, exact_min_discrepancy, kde_error, point_discrepancy, sup_discrepancy,
    DiscrepancyReport, SearchMethod,
};
use coreset_forge::report::{read_report, report_to_string, ReportDocument, ReportKind};
use coreset_forge::{
    gram_schmidt_walk, load_dataset, write_binary, write_csv, DataSet, Domain, Error, GramOracle,
    KernelFamily, KernelSpec, PreparedPoints, Result,
};

const SEED_ENV: &str = "CORESET_FORGE_SEED";

#[derive(Parser)]
#[command(name = "coreset-forge", version, about = "Kernel density coresets by discrepancy halving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Build a coreset and print its report.
    Build(BuildArgs),
    /// Measure the KDE error of a coreset report against its dataset.
    Eval(EvalArgs),
    /// Color a dataset with the walk and estimate its sup discrepancy.
    Disc(DiscArgs),
    /// Exact minimum discrepancy over all colorings (n <= 16).
    Brute(BruteArgs),
    /// Run a benchmark plan (JSON) and print CSV rows.
    Bench(BenchArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// CSV or KDC1 binary dataset.
    #[arg(long)]
    input: PathBuf,
    /// Dataset domain; defaults to the kernel's domain.
    #[arg(long)]
    domain: Option<Domain>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    kernel: KernelFamily,
    #[arg(long)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    UniformBall,
    UniformCube,
    GaussianMixture,
    SphereUniform,
    SimplexDirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    generator: GeneratorKind,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("goal").required(true).args(["size", "epsilon"]))]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Target coreset size.
    #[arg(long)]
    size: Option<usize>,
    /// Error budget in (0, 1).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    partitioned: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sup-search budget per level; defaults to the dataset size.
    #[arg(long)]
    query_budget: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_CONSTANT)]
    threshold_constant: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_REJECTION_ROUNDS)]
    max_rejection_rounds: usize,
    /// Report wall_ms as 0 so output depends only on the inputs.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Coreset report produced by `build`.
    #[arg(long)]
    coreset: PathBuf,
    /// Number of search climbs.
    #[arg(long, default_value_t = 2000)]
    query_budget: usize,
    /// Search seed; defaults to the coreset's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct DiscArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    query_budget: Option<usize>,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BruteArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark plan as JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Replaces the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerics() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Build(a) => build(a),
        Command::Eval(a) => eval(a),
        Command::Disc(a) => disc(a),
        Command::Brute(a) => brute(a),
        Command::Bench(a) => bench(a),
    }
}

/// The environment variable, when set, wins over the flag.
fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Param(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))),
        Err(_) => Ok(flag),
    }
}

fn emit(out: &OutArgs, bytes: &[u8]) -> Result<()> {
    match &out.out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn elapsed_ms(start: Instant, no_timing: bool) -> u64 {
    if no_timing {
        0
    } else {
        start.elapsed().as_millis() as u64
    }
}

fn load(data: &DataArgs, kernel_domain: Domain) -> Result<DataSet> {
    load_dataset(&data.input, data.domain.unwrap_or(kernel_domain))
}

fn kernel(args: &KernelArgs) -> Result<KernelSpec> {
    KernelSpec::new(args.kernel, args.alpha)
}

fn gen(a: GenArgs) -> Result<()> {
    let generator = match a.generator {
        GeneratorKind::UniformBall => Generator::UniformBall { radius: a.radius },
        GeneratorKind::UniformCube => Generator::UniformCube { lo: a.lo, hi: a.hi },
        GeneratorKind::GaussianMixture => Generator::GaussianMixture { components: a.components },
        GeneratorKind::SphereUniform => Generator::SphereUniform,
        GeneratorKind::SimplexDirichlet => Generator::SimplexDirichlet { concentration: a.concentration },
    };
    let ds = generate_points(&generator, a.dim, a.n, resolve_seed(a.seed)?)?;
    let mut buf = Vec::new();
    match a.format {
        Format::Csv => write_csv(&ds, &mut buf)?,
        Format::Binary => write_binary(&ds, &mut buf)?,
    }
    emit(&a.out, &buf)
}

fn build(a: BuildArgs) -> Result<()> {
    let spec = kernel(&a.kernel)?;
    let ds = load(&a.data, spec.domain())?;
    let config = RunConfig {
        kernel_family: spec.family,
        alpha: spec.alpha,
        epsilon: a.epsilon,
        target_size: a.size,
        seed: resolve_seed(a.seed)?,
        query_budget: a.query_budget.unwrap_or(ds.len()),
        partitioned: a.partitioned,
        threshold_constant: a.threshold_constant,
        max_rejection_rounds: a.max_rejection_rounds,
    };
    let start = Instant::now();
    let result = build_coreset(&ds, &config)?;
    let doc = ReportDocument::from_coreset(ds.id(), &result, elapsed_ms(start, a.no_timing))?;
    emit(&a.out, report_to_string(&doc)?.as_bytes())
}

fn eval(a: EvalArgs) -> Result<()> {
    let coreset = read_report(&a.coreset)?;
    if coreset.kind != ReportKind::Coreset {
        return Err(Error::Param(format!("{} is not a coreset report", a.coreset.display())));
    }
    let spec = coreset.kernel;
    let ds = load(&a.data, spec.domain())?;
    let seed = resolve_seed(a.seed.unwrap_or(coreset.seed))?;
    let start = Instant::now();
    let rep = kde_error(&spec, &ds, &coreset.indices, a.query_budget, seed)?;
    let mut doc = single_level_doc(&ds, spec, seed, &rep, elapsed_ms(start, a.no_timing));
    doc.indices = coreset.indices;
    doc.error_estimate = coreset.error_estimate;
    emit(&a.out, report_to_string(&doc)?.as_bytes())
}

/// Discrepancy-kind document around one search result.
fn single_level_doc(ds: &DataSet, spec: KernelSpec, seed: u64, rep: &DiscrepancyReport, wall_ms: u64) -> ReportDocument {
    let all = coreset_forge::Coloring::new(vec![1; ds.len()], seed, coreset_forge::ColoringAlgorithm::Random)
        .expect("valid signs");
    let mut doc = ReportDocument::from_discrepancy(ds.id(), spec, seed, &all, rep, wall_ms);
    doc.signs = None;
    doc.levels[0].error_term = rep.sup_discrepancy;
    doc
}

fn disc(a: DiscArgs) -> Result<()> {
    let spec = kernel(&a.kernel)?;
    let ds = load(&a.data, spec.domain())?;
    let seed = resolve_seed(a.seed)?;
    let start = Instant::now();
    let points = PreparedPoints::new(spec, &ds)?;
    let coloring = gram_schmidt_walk(&GramOracle::from_all(&points)?, seed)?;
    let rep = if ds.len() >= 2 {
        let qs = build_query_space(&spec, &ds)?;
        sup_discrepancy(&spec, &ds, &coloring, &qs, a.query_budget.unwrap_or(ds.len()), seed)?
    } else {
        at_data_points(&spec, &ds, &coloring)?
    };
    let doc = ReportDocument::from_discrepancy(ds.id(), spec, seed, &coloring, &rep, elapsed_ms(start, a.no_timing));
    emit(&a.out, report_to_string(&doc)?.as_bytes())
}

/// Max discrepancy over the data points with its witness.
fn at_data_points(spec: &KernelSpec, ds: &DataSet, coloring: &coreset_forge::Coloring) -> Result<DiscrepancyReport> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, p) in ds.points().enumerate() {
        let v = point_discrepancy(spec, ds, coloring, p)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(DiscrepancyReport {
        sup_discrepancy: best.0,
        witness: ds.point(best.1).to_vec(),
        evaluations: ds.len() as u64,
        method: SearchMethod::ExactCandidates,
    })
}

fn brute(a: BruteArgs) -> Result<()> {
    let spec = kernel(&a.kernel)?;
    let ds = load(&a.data, spec.domain())?;
    let start = Instant::now();
    let queries: Vec<Vec<f64>> = ds.points().map(|p| p.to_vec()).collect();
    let (coloring, _) = exact_min_discrepancy(&spec, &ds, &queries)?;
    let rep = at_data_points(&spec, &ds, &coloring)?;
    let doc = ReportDocument::from_discrepancy(ds.id(), spec, 0, &coloring, &rep, elapsed_ms(start, a.no_timing));
    emit(&a.out, report_to_string(&doc)?.as_bytes())
}

fn read_plan(path: &Path) -> Result<BenchPlan> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut plan = read_plan(&a.plan)?;
    plan.seed = resolve_seed(a.seed.unwrap_or(plan.seed))?;
    let rows = run_scaling(&plan, !a.no_timing)?;
    emit(&a.out, rows_to_csv(&rows)?.as_bytes())
}
