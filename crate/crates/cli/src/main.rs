//! `ringsched`: fit speed and convergence models, allocate GPUs, and
//! simulate scheduling strategies on a shared cluster.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ringsched::allocator::{doubling_allocate, greedy_allocate, optimal_allocate_dp, place_tasks, ClusterConfig};
use ringsched::experiment::{
    render_table, run_experiment, standard_config, standard_scenarios, standard_workload, summarize, summary_csv,
    RunResult, Scenario,
};
use ringsched::fitting::{fit_loss_curve, fit_resource_model, loss_curve_sse, resource_model_sse, FitError};
use ringsched::formats::{
    load_trace, parse_jobs_file, parse_loss_points, parse_report, parse_speed_samples, read_file, save_trace,
    to_json_document, write_file, FitDiagnostics, FittedModel, ModelFile, PlanFile, RunReport,
};
use ringsched::simulator::{run_simulation, SimConfig, Strategy};
use ringsched::workload::{generate_workload, Workload, WorkloadSpec, RESNET110_GRADIENT_BYTES, RESNET_BATCH_PER_GPU};

#[derive(Parser)]
#[command(name = "ringsched", version, about = "GPU scheduling for ring all-reduce training jobs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a loss curve or a resource model to measurements.
    Fit(FitArgs),
    /// Split a cluster's GPUs among a set of jobs.
    Allocate(AllocateArgs),
    /// Simulate a scheduling strategy, or the full strategy comparison.
    Simulate(SimulateArgs),
    /// Summarize one or more simulation reports.
    Report(ReportArgs),
    /// Write a synthetic job trace.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    /// `step,loss` CSV.
    Loss,
    /// `workers,epochs_per_second` CSV.
    Speed,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    kind: FitKind,
    #[arg(long)]
    input: PathBuf,
    /// Model file to write; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-GPU batch size of the measured job (speed fits).
    #[arg(long, default_value_t = RESNET_BATCH_PER_GPU as f64)]
    m: f64,
    /// Gradient size in bytes of the measured job (speed fits).
    #[arg(long, default_value_t = RESNET110_GRADIENT_BYTES as f64)]
    n: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Doubling,
    Greedy,
    Optimal,
}

#[derive(Args)]
struct AllocateArgs {
    /// Jobs file.
    #[arg(long)]
    jobs: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    capacity: u32,
    #[arg(long, value_enum, default_value = "doubling")]
    algorithm: Algorithm,
    /// Restrict the exact solver to power-of-two allocations.
    #[arg(long)]
    power_of_two: bool,
    /// Also place the plan on nodes of this size.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    gpus_per_node: Option<u32>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    nodes: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    gpus_per_node: u32,
    /// Per-job worker cap; 0 removes the cap.
    #[arg(long, default_value_t = 8)]
    max_workers: u32,
    /// Recompute every allocation from scratch each tick, shrinking jobs if needed.
    #[arg(long)]
    allow_shrink: bool,
    /// Never shrink a running job to admit a queued one.
    #[arg(long)]
    no_reclaim: bool,
}

impl ClusterArgs {
    fn config(&self, strategy: Strategy, seed: u64) -> Result<SimConfig> {
        let mut config = standard_config(strategy, seed);
        config.cluster = ClusterConfig::new(self.nodes, self.gpus_per_node)?;
        config.max_workers = (self.max_workers > 0).then_some(self.max_workers);
        config.allow_shrink = self.allow_shrink;
        config.reclaim_for_admission = !self.no_reclaim;
        Ok(config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Strategy: precompute, exploratory, fixed-<k>, one, two, four or eight.
    #[arg(long, required_unless_present = "table3")]
    strategy: Option<Strategy>,
    /// Job trace to replay instead of generating jobs.
    #[arg(long, conflicts_with_all = ["scenario", "jobs", "mean_interarrival", "table3"])]
    workload: Option<PathBuf>,
    /// Named contention level: extreme, moderate or none.
    #[arg(long, default_value = "moderate")]
    scenario: String,
    /// Number of generated jobs; overrides the scenario.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Mean seconds between generated arrivals; overrides the scenario.
    #[arg(long)]
    mean_interarrival: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run every strategy at every contention level.
    #[arg(long)]
    table3: bool,
    /// Seeds for `--table3`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0", requires = "table3")]
    seeds: Vec<u64>,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Report file to write.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Also write the summary as CSV; `-` for standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[arg(long)]
    mean_interarrival: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Allocate(args) => cmd_allocate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Writes to `path`, or to standard output when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => write_file(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn fit_guidance(err: FitError) -> anyhow::Error {
    match err {
        FitError::InsufficientData { what, needed, .. } => anyhow::Error::new(err)
            .context(format!("collect at least {needed} {what} before fitting")),
        other => other.into(),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let text = read_file(&args.input)?;
    let context = || format!("reading {}", args.input.display());
    let (fit, diagnostics) = match args.kind {
        FitKind::Loss => {
            let points = parse_loss_points(&text).with_context(context)?;
            let model = fit_loss_curve(&points).map_err(fit_guidance)?;
            let sse = loss_curve_sse(&model, &points);
            (FittedModel::Loss { model }, FitDiagnostics { sse, samples: points.len() })
        }
        FitKind::Speed => {
            let samples = parse_speed_samples(&text).with_context(context)?;
            let model = fit_resource_model(&samples, args.m, args.n).map_err(fit_guidance)?;
            let sse = resource_model_sse(&model, &samples);
            (FittedModel::Resource { model }, FitDiagnostics { sse, samples: samples.len() })
        }
    };
    info!("fit {} samples, sse {:.3e}", diagnostics.samples, diagnostics.sse);
    emit(args.output.as_deref(), &to_json_document(&ModelFile::new(fit, diagnostics)))
}

fn cmd_allocate(args: AllocateArgs) -> Result<()> {
    let text = read_file(&args.jobs)?;
    let jobs = parse_jobs_file(&text).with_context(|| format!("reading {}", args.jobs.display()))?.jobs;
    let (name, plan) = match args.algorithm {
        Algorithm::Doubling => ("doubling", doubling_allocate(&jobs, args.capacity)?),
        Algorithm::Greedy => ("greedy", greedy_allocate(&jobs, args.capacity)?),
        Algorithm::Optimal => ("optimal", optimal_allocate_dp(&jobs, args.capacity, args.power_of_two)?),
    };
    let mut file = PlanFile::new(name, args.capacity, plan);
    if let Some(gpn) = args.gpus_per_node {
        if !args.capacity.is_multiple_of(gpn) {
            bail!("capacity {} is not a whole number of {gpn}-GPU nodes", args.capacity);
        }
        let cluster = ClusterConfig::new(args.capacity / gpn, gpn)?;
        file.placement = Some(place_tasks(&file.plan, &cluster)?);
        file.cluster = Some(cluster);
    }
    info!("{name}: objective {:.1} s over {} GPUs", file.plan.objective, file.plan.total_workers());
    emit(args.output.as_deref(), &to_json_document(&file))
}

fn scenario(args: &SimulateArgs) -> Result<Scenario> {
    let mut scenario = standard_scenarios()
        .into_iter()
        .find(|s| s.name == args.scenario)
        .with_context(|| format!("unknown scenario {:?}; valid scenarios: extreme, moderate, none", args.scenario))?;
    if args.jobs.is_some() || args.mean_interarrival.is_some() {
        scenario.name = "custom".into();
    }
    if let Some(jobs) = args.jobs {
        scenario.total_jobs = jobs as usize;
    }
    if let Some(mean) = args.mean_interarrival {
        scenario.mean_interarrival = mean;
    }
    Ok(scenario)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let runs = if args.table3 {
        let cluster = &args.cluster;
        // Surface cluster errors before spawning the runs.
        cluster.config(Strategy::Precompute, 0)?;
        run_experiment(&standard_scenarios(), &Strategy::COMPARISON, &args.seeds, standard_workload, |s, seed| {
            cluster.config(s, seed).expect("validated above")
        })?
    } else {
        let strategy = args.strategy.expect("clap requires a strategy without --table3");
        let mut config = args.cluster.config(strategy, args.seed)?;
        let (name, workload) = match &args.workload {
            Some(path) => ("trace".to_string(), load_trace(path)?),
            None => {
                let scenario = scenario(&args)?;
                let spec = WorkloadSpec::calibrated(scenario.total_jobs, scenario.mean_interarrival, args.seed);
                (scenario.name, generate_workload(&spec)?)
            }
        };
        config.total_jobs = workload.jobs.len();
        config.mean_interarrival = mean_interarrival(&workload).unwrap_or(config.mean_interarrival);
        let report = run_simulation(&config, &workload)?;
        vec![RunResult::new(&name, config, &workload, report)]
    };
    if let Some(path) = &args.output {
        write_file(path, &to_json_document(&RunReport::new(runs.clone())))?;
    }
    print!("{}", render_table(&summarize(&runs)));
    Ok(())
}

fn mean_interarrival(workload: &Workload) -> Option<f64> {
    if let Some(spec) = &workload.spec {
        return Some(spec.mean_interarrival);
    }
    let last = workload.jobs.iter().map(|j| j.arrival).fold(0.0, f64::max);
    let mean = last / workload.jobs.len() as f64;
    (mean > 0.0).then_some(mean)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    for path in &args.reports {
        let report = parse_report(&read_file(path)?).with_context(|| format!("reading {}", path.display()))?;
        runs.extend(report.runs);
    }
    let rows = summarize(&runs);
    print!("{}", render_table(&rows));
    match args.csv.as_deref() {
        Some(path) if path == Path::new("-") => emit(None, &summary_csv(&rows)),
        Some(path) => emit(Some(path), &summary_csv(&rows)),
        None => Ok(()),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec = WorkloadSpec::calibrated(args.jobs as usize, args.mean_interarrival, args.seed);
    let workload = generate_workload(&spec)?;
    save_trace(&args.output, &workload)?;
    info!("wrote {} jobs to {}", workload.jobs.len(), args.output.display());
    Ok(())
}
