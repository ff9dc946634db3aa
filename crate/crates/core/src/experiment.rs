//! Strategy comparison across arrival-rate scenarios and seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::ClusterConfig;
use crate::simulator::{run_simulation, SimConfig, SimError, SimReport, Strategy};
use crate::workload::{generate_workload, Workload, WorkloadError, WorkloadJob, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub mean_interarrival: f64,
    pub total_jobs: usize,
}

impl Scenario {
    pub fn new(name: &str, mean_interarrival: f64, total_jobs: usize) -> Self {
        Self { name: name.into(), mean_interarrival, total_jobs }
    }
}

/// Extreme, moderate and no contention, as `(name, mean arrival gap, jobs)`.
pub fn standard_scenarios() -> Vec<Scenario> {
    vec![
        Scenario::new("extreme", 250.0, 206),
        Scenario::new("moderate", 500.0, 114),
        Scenario::new("none", 1000.0, 44),
    ]
}

/// Eight nodes of eight GPUs.
pub fn standard_cluster() -> ClusterConfig {
    ClusterConfig::new(8, 8).expect("valid cluster")
}

/// Simulation settings used for the strategy comparison: jobs never get
/// more than eight workers, and running jobs only shrink when that is
/// needed to admit the next queued job.
pub fn standard_config(strategy: Strategy, seed: u64) -> SimConfig {
    let mut config = SimConfig::new(standard_cluster(), strategy, seed);
    config.max_workers = Some(8);
    config.reclaim_for_admission = true;
    config
}

/// The calibrated workload for a scenario.
pub fn standard_workload(scenario: &Scenario, seed: u64) -> WorkloadSpec {
    WorkloadSpec::calibrated(scenario.total_jobs, scenario.mean_interarrival, seed)
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("{scenario}/{strategy}/seed {seed}: {source}")]
    Simulation { scenario: String, strategy: Strategy, seed: u64, source: SimError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub config: SimConfig,
    /// Generator settings when the workload is synthetic.
    pub workload: Option<WorkloadSpec>,
    /// The jobs themselves when no generator settings exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<WorkloadJob>>,
    pub report: SimReport,
}

/// Runs every strategy on every `(scenario, seed)` workload. All strategies
/// for a given pair see the same jobs. Runs execute in parallel; results
/// come back in scenario, seed, strategy order regardless of scheduling.
pub fn run_experiment<W, F>(
    scenarios: &[Scenario],
    strategies: &[Strategy],
    seeds: &[u64],
    workload: W,
    configure: F,
) -> Result<Vec<RunResult>, ExperimentError>
where
    W: Fn(&Scenario, u64) -> WorkloadSpec,
    F: Fn(Strategy, u64) -> SimConfig + Sync,
{
    let mut cells = Vec::new();
    for scenario in scenarios {
        for &seed in seeds {
            let spec = workload(scenario, seed);
            let workload = generate_workload(&spec)?;
            for &strategy in strategies {
                cells.push((scenario, seed, spec.clone(), workload.clone(), strategy));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(scenario, seed, spec, workload, strategy)| {
            let mut config = configure(strategy, seed);
            config.mean_interarrival = scenario.mean_interarrival;
            config.total_jobs = scenario.total_jobs;
            let report = run_simulation(&config, &workload).map_err(|source| ExperimentError::Simulation {
                scenario: scenario.name.clone(),
                strategy,
                seed,
                source,
            })?;
            Ok(RunResult { scenario: scenario.name.clone(), seed, config, workload: Some(spec), trace: None, report })
        })
        .collect()
}

impl RunResult {
    /// Records a run so that it can be repeated: synthetic workloads keep
    /// their generator settings, anything else keeps the full job list.
    pub fn new(scenario: &str, config: SimConfig, workload: &Workload, report: SimReport) -> Self {
        let (spec, trace) = match &workload.spec {
            Some(spec) => (Some(spec.clone()), None),
            None => (None, Some(workload.jobs.clone())),
        };
        Self { scenario: scenario.into(), seed: config.rng_seed, config, workload: spec, trace, report }
    }

    /// Rebuilds the workload this run simulated.
    pub fn workload(&self) -> Result<Workload, WorkloadError> {
        match (&self.workload, &self.trace) {
            (_, Some(jobs)) => Ok(Workload { spec: self.workload.clone(), jobs: jobs.clone() }),
            (Some(spec), None) => generate_workload(spec),
            (None, None) => Err(WorkloadError::InvalidSpec("run records neither a spec nor a trace".into())),
        }
    }
}

/// The full comparison: standard scenarios, all six strategies.
pub fn run_comparison(seeds: &[u64]) -> Result<Vec<RunResult>, ExperimentError> {
    run_experiment(&standard_scenarios(), &Strategy::COMPARISON, seeds, standard_workload, standard_config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub strategy: Strategy,
    pub seeds: usize,
    pub mean_completion_hours: f64,
    /// Sample standard deviation across seeds; zero for one seed.
    pub std_completion_hours: f64,
    pub mean_peak_concurrent: f64,
    pub mean_restarts: f64,
}

/// Averages runs over seeds, keeping first-seen scenario and strategy order.
pub fn summarize(runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Strategy)> = Vec::new();
    for r in runs {
        let key = (r.scenario.clone(), r.report.strategy);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, strategy)| {
            let group: Vec<&SimReport> = runs
                .iter()
                .filter(|r| r.scenario == scenario && r.report.strategy == strategy)
                .map(|r| &r.report)
                .collect();
            let n = group.len() as f64;
            let mean = group.iter().map(|r| r.mean_completion_hours).sum::<f64>() / n;
            let var = if group.len() > 1 {
                group.iter().map(|r| (r.mean_completion_hours - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                scenario,
                strategy,
                seeds: group.len(),
                mean_completion_hours: mean,
                std_completion_hours: var.sqrt(),
                mean_peak_concurrent: group.iter().map(|r| r.peak_concurrent_jobs as f64).sum::<f64>() / n,
                mean_restarts: group.iter().map(|r| r.total_restarts as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Strategies as rows, scenarios as columns of mean completion hours.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    let mut strategies: Vec<Strategy> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let mut out = format!("{:<12}", "strategy");
    for s in &scenarios {
        out.push_str(&format!(" {s:>16}"));
    }
    out.push('\n');
    for strategy in strategies {
        out.push_str(&format!("{:<12}", strategy.label()));
        for s in &scenarios {
            let cell = rows
                .iter()
                .find(|r| r.strategy == strategy && r.scenario == *s)
                .map(|r| {
                    if r.seeds > 1 {
                        format!("{:.2} ± {:.2}", r.mean_completion_hours, r.std_completion_hours)
                    } else {
                        format!("{:.2}", r.mean_completion_hours)
                    }
                })
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {cell:>16}"));
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "strategy", "seeds", "mean_completion_hours", "std_completion_hours", "mean_peak_concurrent", "mean_restarts"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.strategy.to_string(),
            r.seeds.to_string(),
            r.mean_completion_hours.to_string(),
            r.std_completion_hours.to_string(),
            r.mean_peak_concurrent.to_string(),
            r.mean_restarts.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
