use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lilo_bench::{emit_tables, run_benchmark, AggregateReport, BenchError, BenchmarkConfig, TableFormat};
use lilo_core::env::registered_ids;
use lilo_core::Environment;

#[derive(Parser)]
#[command(name = "bench", about = "Run and report language-in-the-loop optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (environment, method, replicate) cell of a config file
    Run {
        #[arg(long)]
        config: PathBuf,
        /// overrides the config's worker count
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate a directory of traces into tables
    Report {
        #[arg(long)]
        traces: PathBuf,
        /// defaults to <traces>/../report
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Registered environments
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Both,
}

impl Format {
    fn tables(self) -> Vec<TableFormat> {
        match self {
            Format::Csv => vec![TableFormat::Csv],
            Format::Markdown => vec![TableFormat::Markdown],
            Format::Both => vec![TableFormat::Csv, TableFormat::Markdown],
        }
    }
}

fn exit_for(e: &BenchError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        BenchError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let level = std::env::var("RUST_LOG").ok().and_then(|s| s.parse().ok()).unwrap_or(tracing::Level::INFO);
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Env { command: EnvCommand::List } => {
            for id in registered_ids() {
                match Environment::from_id(id) {
                    Ok(e) => println!("{id}\td={}\tk={}", e.dim(), e.n_outcomes()),
                    Err(err) => println!("{id}\t{err}"),
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, workers } => {
            let mut cfg = match BenchmarkConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            if workers.is_some() {
                cfg.workers = workers;
            }
            let started = std::time::Instant::now();
            let outcome = match run_benchmark(&cfg) {
                Ok(o) => o,
                Err(e) => return exit_for(&e),
            };
            let out = cfg.output_dir.join("report");
            if let Err(e) = emit_tables(&outcome.report, &out, &Format::Both.tables()) {
                return exit_for(&e);
            }
            for env in outcome.report.environments() {
                println!("{}", lilo_bench::report::markdown_table(&outcome.report, &env));
            }
            eprintln!(
                "{} replicates ({} reused, {} failed) in {:.1}s; tables in {}",
                outcome.total,
                outcome.reused,
                outcome.failures.len(),
                started.elapsed().as_secs_f64(),
                out.display()
            );
            for f in &outcome.failures {
                eprintln!("failed: {} {} rep {} (seed {}): {}", f.environment, f.method.as_str(), f.replicate, f.seed, f.error);
            }
            if outcome.too_many_failures() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Report { traces, out, format } => {
            let report = match AggregateReport::from_dir(&traces) {
                Ok(r) => r,
                Err(e) => return exit_for(&e),
            };
            let out = out.unwrap_or_else(|| traces.parent().unwrap_or(&traces).join("report"));
            match emit_tables(&report, &out, &format.tables()) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
