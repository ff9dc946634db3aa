use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ringsched::costmodel::predict_speed;
use ringsched::fitting::{LossCurveModel, LossPoint};
use ringsched::formats::{parse_model_file, parse_plan_file, parse_report, to_json_document, write_loss_points, FittedModel, JobsFile};
use ringsched::{JobId, JobState, ResourceModel};

fn ringsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringsched")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn speed_fit_matches_profiled_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let input = data("resnet110_profiled_speed.csv");
    let out = ringsched(&["fit", "--kind", "speed", "--input", path(&input), "--output", path(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let file = parse_model_file(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let FittedModel::Resource { model } = file.fit else { panic!("expected a resource model") };
    assert_eq!(file.diagnostics.samples, 4);
    for (w, images_per_second) in [(1, 318.0), (2, 576.2), (4, 1152.4), (8, 2177.8)] {
        let predicted = predict_speed(&model, w).unwrap() * 50_000.0;
        assert!((predicted / images_per_second - 1.0).abs() < 0.05, "w={w}: {predicted} vs {images_per_second}");
    }
}

#[test]
fn loss_fit_recovers_generator() {
    let truth = LossCurveModel { beta0: 2e-4, beta1: 1.5, beta2: 0.25 };
    let points: Vec<_> = (0..200u64).map(|i| LossPoint { k: i * 100, l: truth.predict(i as f64 * 100.0) }).collect();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("loss.csv");
    std::fs::write(&input, write_loss_points(&points)).unwrap();
    let out = ringsched(&["fit", "--kind", "loss", "--input", path(&input)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let file = parse_model_file(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let FittedModel::Loss { model } = file.fit else { panic!("expected a loss model") };
    for (got, want) in [(model.beta0, truth.beta0), (model.beta1, truth.beta1), (model.beta2, truth.beta2)] {
        assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
    }
}

#[test]
fn empty_input_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "step,loss\n").unwrap();
    let out = ringsched(&["fit", "--kind", "loss", "--input", path(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("insufficient data"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_samples_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "workers,epochs_per_second\n1,0.1\n2,fast\n").unwrap();
    let out = ringsched(&["fit", "--kind", "speed", "--input", path(&input)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

fn jobs_file(dir: &Path, jobs: Vec<JobState>) -> PathBuf {
    let p = dir.join("jobs.json");
    std::fs::write(&p, to_json_document(&JobsFile::new(jobs))).unwrap();
    p
}

fn model(theta0: f64, theta2: f64, theta3: f64) -> ResourceModel {
    ResourceModel { theta0, theta1: 0.0, theta2, theta3, m: 128.0, n: 6.8e6 }
}

#[test]
fn single_job_gets_whole_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = jobs_file(dir.path(), vec![JobState::new(JobId(1), 100.0, model(100.0, 1e-7, 0.01))]);
    let out = ringsched(&["allocate", "--jobs", path(&jobs), "--capacity", "8", "--algorithm", "doubling"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plan = parse_plan_file(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(plan.plan.workers(JobId(1)), Some(8));
    assert_eq!(plan.algorithm, "doubling");
}

#[test]
fn optimal_never_worse_than_doubling() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = jobs_file(
        dir.path(),
        vec![
            JobState::new(JobId(1), 120.0, model(80.0, 2e-7, 0.02)),
            JobState::new(JobId(2), 40.0, model(150.0, 1e-7, 0.05)),
            JobState::new(JobId(3), 200.0, model(60.0, 4e-7, 0.01)),
        ],
    );
    let objective = |algorithm: &str| {
        let out = ringsched(&["allocate", "--jobs", path(&jobs), "--capacity", "16", "--algorithm", algorithm]);
        assert!(out.status.success(), "{}", stderr(&out));
        parse_plan_file(&String::from_utf8(out.stdout).unwrap()).unwrap().plan.objective
    };
    let doubling = objective("doubling");
    assert!(objective("optimal") <= doubling * (1.0 + 1e-12));
    assert!(objective("greedy").is_finite());
}

#[test]
fn placement_spans_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = jobs_file(dir.path(), vec![JobState::new(JobId(4), 100.0, model(100.0, 1e-7, 0.01))]);
    let plan_path = dir.path().join("plan.json");
    let out = ringsched(&[
        "allocate", "--jobs", path(&jobs), "--capacity", "16", "--gpus-per-node", "4", "--output", path(&plan_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plan = parse_plan_file(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    let placement = plan.placement.unwrap();
    assert_eq!(placement.job(JobId(4)).unwrap().gpus(), 16);
    assert_eq!(placement.job(JobId(4)).unwrap().slots.len(), 4);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = jobs_file(dir.path(), vec![JobState::new(JobId(1), 1.0, model(1.0, 0.0, 0.0))]);
    let out = ringsched(&["allocate", "--jobs", path(&jobs), "--capacity", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ringsched(&["simulate", "--strategy", "round-robin"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    for name in ["precompute", "exploratory", "fixed-<k>"] {
        assert!(msg.contains(name), "{msg}");
    }
    assert!(out.stdout.is_empty());
}

#[test]
fn simulate_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let run = ringsched(&[
            "simulate", "--strategy", "exploratory", "--jobs", "12", "--mean-interarrival", "400", "--seed", "9",
            "--output", path(out),
        ]);
        assert!(run.status.success(), "{}", stderr(&run));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let report = parse_report(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(report.runs.len(), 1);
    let run = &report.runs[0];
    assert_eq!(run.seed, 9);
    assert_eq!(run.report.total_jobs, 12);
    // The embedded settings reproduce the run.
    let again = ringsched::run_simulation(&run.config, &run.workload().unwrap()).unwrap();
    assert_eq!(again, run.report);

    let csv = dir.path().join("summary.csv");
    let out = ringsched(&["report", path(&a), "--csv", path(&csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8(out.stdout).unwrap().contains("Exploratory"));
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("scenario,strategy,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn trace_replay_matches_generated_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("jobs.jsonl");
    let out = ringsched(&["generate", "--jobs", "8", "--mean-interarrival", "300", "--seed", "2", "--output", path(&trace)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let replay = dir.path().join("replay.json");
    let direct = dir.path().join("direct.json");
    let out = ringsched(&["simulate", "--strategy", "fixed-2", "--workload", path(&trace), "--seed", "2", "--output", path(&replay)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = ringsched(&[
        "simulate", "--strategy", "two", "--jobs", "8", "--mean-interarrival", "300", "--seed", "2", "--output", path(&direct),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let replay = parse_report(&std::fs::read_to_string(replay).unwrap()).unwrap();
    let direct = parse_report(&std::fs::read_to_string(direct).unwrap()).unwrap();
    assert_eq!(replay.runs[0].report, direct.runs[0].report);
}

#[test]
fn report_rejects_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("old.json");
    std::fs::write(&file, r#"{"format":"ringsched-report","version":2,"tool_version":"0","runs":[]}"#).unwrap();
    let out = ringsched(&["report", path(&file)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("version 2"), "{}", stderr(&out));

    std::fs::write(&file, r#"{"format":"ringsched-plan","version":1}"#).unwrap();
    assert!(!ringsched(&["report", path(&file)]).status.success());
}

#[test]
fn comparison_grid_has_six_rows_and_three_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("grid.json");
    let out = ringsched(&["simulate", "--table3", "--seeds", "1", "--output", path(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 7, "{table}");
    for col in ["extreme", "moderate", "none"] {
        assert!(lines[0].contains(col));
    }
    for (line, label) in lines[1..].iter().zip(["Precompute", "Exploratory", "Eight", "Four", "Two", "One"]) {
        assert!(line.starts_with(label), "{line}");
        assert_eq!(line.split_whitespace().count(), 4, "{line}");
    }
    let report = parse_report(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(report.runs.len(), 18);
}
