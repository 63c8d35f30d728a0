use std::path::Path;
use std::process::Command;

use lilo_bench::report::{markdown_table, read_summary_csv, summary_rows, Cell};
use lilo_bench::run::{trace_path, traces_dir};
use lilo_bench::{emit_tables, run_benchmark, run_job, AggregateReport, BenchmarkConfig, Job, Stats, TableFormat};
use lilo_core::optimizer::{LoopConfig, Method, RunManifest};

fn small_loop() -> LoopConfig {
    let mut cfg = LoopConfig { trials: 2, batch_size: Some(2), n_pairs: 4, n_llm_samples: 2, seed: 3, ..LoopConfig::default() };
    cfg.acq.restarts = 2;
    cfg.acq.raw_samples = 32;
    cfg
}

fn config(out: &Path, methods: &[Method], reps: usize) -> BenchmarkConfig {
    BenchmarkConfig {
        environments: vec!["dtlz2-l1".into()],
        methods: methods.to_vec(),
        replications: reps,
        loop_config: small_loop(),
        backend: Default::default(),
        dm: Default::default(),
        oracle_votes: 1,
        output_dir: out.to_path_buf(),
        workers: Some(1),
    }
}

const TOML_LOOP: &str = "[loop]\ntrials = 2\nbatch_size = 2\nn_pairs = 4\nn_llm_samples = 2\n\n[loop.acq]\nrestarts = 2\nraw_samples = 32\n";

#[test]
fn two_replicates_give_two_traces_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[Method::TrueUtilityBo], 2);
    let out = run_benchmark(&cfg).unwrap();
    assert_eq!((out.total, out.reused), (2, 0));
    assert!(out.failures.is_empty());
    let traces = traces_dir(dir.path());
    let mut seeds = Vec::new();
    for r in 0..2 {
        let job = Job { environment: "dtlz2-l1".into(), method: Method::TrueUtilityBo, replicate: r };
        let path = trace_path(&traces, &job);
        assert!(path.exists());
        let manifest: RunManifest = serde_json::from_slice(&std::fs::read(path.with_extension("manifest.json")).unwrap()).unwrap();
        seeds.push(manifest.seed);
    }
    assert_eq!(seeds, [3, 4]);
    let written = emit_tables(&out.report, &dir.path().join("report"), &[TableFormat::Csv, TableFormat::Markdown]).unwrap();
    assert!(written.iter().any(|p| p.ends_with("report.json")));
    for t in 1..=2 {
        let c = out.report.cell("dtlz2-l1", Method::TrueUtilityBo, t).unwrap();
        assert_eq!(c.max_so_far.n, 2);
        assert!((c.max_so_far.ci95_hi - c.max_so_far.mean - 1.96 * c.max_so_far.se).abs() < 1e-12);
    }
}

#[test]
fn resume_reuses_traces_and_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[Method::TrueUtilityBo, Method::PreferentialBo], 1);
    let first = run_benchmark(&cfg).unwrap();
    let a = dir.path().join("a");
    emit_tables(&first.report, &a, &[TableFormat::Csv, TableFormat::Markdown]).unwrap();
    let second = run_benchmark(&cfg).unwrap();
    assert_eq!(second.reused, 2);
    assert_eq!(first.report, second.report);
    let b = dir.path().join("b");
    emit_tables(&second.report, &b, &[TableFormat::Csv, TableFormat::Markdown]).unwrap();
    for f in ["summary.csv", "standardized.csv", "dtlz2-l1.md", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(AggregateReport::from_dir(&traces_dir(dir.path())).unwrap(), first.report);
}

#[test]
fn a_changed_config_is_not_reused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), &[Method::TrueUtilityBo], 1);
    run_benchmark(&cfg).unwrap();
    cfg.loop_config.seed = 9;
    assert_eq!(run_benchmark(&cfg).unwrap().reused, 0);
}

#[test]
fn a_single_cell_reruns_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[Method::Lilo], 1);
    let job = Job { environment: "dtlz2-l1".into(), method: Method::Lilo, replicate: 0 };
    let a = run_job(&cfg, &job, None).unwrap();
    let b = run_job(&cfg, &job, None).unwrap();
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
}

#[test]
fn summary_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&config(dir.path(), &[Method::TrueUtilityBo], 2)).unwrap();
    emit_tables(&out.report, dir.path(), &[TableFormat::Csv]).unwrap();
    assert_eq!(read_summary_csv(&dir.path().join("summary.csv")).unwrap(), summary_rows(&out.report));
}

fn cell(method: Method, trial: usize, mean: f64, se: f64) -> Cell {
    let stats = Stats { n: 30, mean, sd: se * 30f64.sqrt(), se, ci95_lo: mean - 1.96 * se, ci95_hi: mean + 1.96 * se };
    Cell { environment: "dtlz2-l1".into(), method, trial, max_so_far: stats, best_point: None }
}

#[test]
fn markdown_cells_and_columns() {
    let report = AggregateReport {
        cells: vec![
            cell(Method::TrueUtilityBo, 1, 0.41, 0.02),
            cell(Method::TrueUtilityBo, 2, 0.54, 0.03),
            cell(Method::Lilo, 1, 0.5, 0.011),
        ],
        ..AggregateReport::default()
    };
    let md = markdown_table(&report, "dtlz2-l1");
    assert!(md.contains("| 1 | 0.50 ± 0.01 | 0.41 ± 0.02 |"), "{md}");
    assert!(md.contains("| 2 | missing | 0.54 ± 0.03 |"), "{md}");
    assert!(!md.contains("preferential-bo"), "{md}");
    let header = md.lines().find(|l| l.starts_with("| trial")).unwrap();
    assert_eq!(header.matches('|').count(), 4);
}

fn bench_cmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).env("RUST_LOG", "error").output().unwrap()
}

#[test]
fn cli_env_list() {
    let out = bench_cmd(&["env", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("thermal-b"));
}

#[test]
fn cli_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "environments = [\"nope\"]\nmethods = [\"lilo\"]\nreplications = 0\noutput_dir = \"out\"\n").unwrap();
    assert_eq!(bench_cmd(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&path, "environments = [\"dtlz2-l1\"]\nmethods = [\"lilo\"]\nunknown_key = 1\noutput_dir = \"out\"\n").unwrap();
    assert_eq!(bench_cmd(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn cli_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let text = format!("environments = [\"dtlz2-l1\"]\nmethods = [\"true-utility-bo\"]\nreplications = 2\noutput_dir = \"out\"\n\n{TOML_LOOP}");
    std::fs::write(&path, text).unwrap();
    let out = bench_cmd(&["run", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("| 1 |"));
    let traces = dir.path().join("out/traces");
    let again = dir.path().join("again");
    let out = bench_cmd(&["report", "--traces", traces.to_str().unwrap(), "--out", again.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(again.join("summary.csv")).unwrap(),
        std::fs::read(dir.path().join("out/report/summary.csv")).unwrap()
    );
}

#[test]
fn cli_partial_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("broken.jsonl");
    std::fs::write(&script, "{\"purpose\": \"init-questions\", \"completion\": \"I would rather not.\"}\n").unwrap();
    let path = dir.path().join("run.toml");
    let text = format!(
        "environments = [\"dtlz2-l1\"]\nmethods = [\"lilo\", \"true-utility-bo\"]\nbackend = \"scripted:{}\"\noutput_dir = \"out\"\n\n{TOML_LOOP}",
        script.display()
    );
    std::fs::write(&path, text).unwrap();
    let out = bench_cmd(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let failures: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/traces/failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 1);
    assert_eq!(failures[0]["method"], "lilo");
    let md = std::fs::read_to_string(dir.path().join("out/report/dtlz2-l1.md")).unwrap();
    assert!(md.contains("true-utility-bo") && !md.contains("lilo |"), "{md}");
}
